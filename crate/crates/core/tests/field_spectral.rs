//! Spectral identities of the torus field algebra: Parseval, round trips,
//! Sobolev multiplier norms, the H^{-1} decomposition, and the operator
//! calculus used by the solver.

use levypde::field::{h_minus1_decompose, Field, SobolevIndex, TorusGrid};
use proptest::prelude::*;

const TAU: f64 = std::f64::consts::TAU;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn constant_field_has_only_zero_mode() {
    let grid = TorusGrid::<f64>::new(1, TAU, 32).unwrap();
    let f = Field::constant(grid, 3.5);
    let hat = f.to_spectral();
    for (i, c) in hat.coeffs().iter().enumerate() {
        if i == 0 {
            assert!((c.re - 3.5 * grid.volume().sqrt()).abs() < 1e-12);
        } else {
            assert!(c.norm() < 1e-12);
        }
    }
}

#[test]
fn cosine_splits_into_two_symmetric_modes() {
    let m = 64usize;
    let grid = TorusGrid::<f64>::new(1, TAU, m).unwrap();
    let f = Field::from_fn(grid, |x| x[0].cos());
    let hat = f.to_spectral();
    let scale = (grid.volume() / 4.0).sqrt(); // A/2 * sqrt(V) with A = 1
    for (i, c) in hat.coeffs().iter().enumerate() {
        let expected = if i == 1 || i == m - 1 { scale } else { 0.0 };
        assert!(
            (c.re - expected).abs() < 1e-12 && c.im.abs() < 1e-12,
            "mode {i}: {c}"
        );
    }
}

#[test]
fn round_trip_and_parseval_across_grid_matrix() {
    for dim in [1usize, 2] {
        for m in [32usize, 64, 128] {
            let grid = TorusGrid::<f64>::new(dim, 3.0, m).unwrap();
            let f = Field::random_smooth(grid, 17 + m as u64, 1.0);
            let hat = f.to_spectral();
            let back = hat.to_real();
            let norm = f.l2_norm();
            let max_err = f
                .values()
                .iter()
                .zip(back.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-12 * norm, "round trip d={dim} M={m}: {max_err}");
            assert!(
                rel(norm, hat.l2_norm()) < 1e-12,
                "Parseval d={dim} M={m}"
            );
            assert!(hat.hermitian_defect() < 1e-12 * norm);
        }
    }
}

#[test]
fn sobolev_norm_of_constant_is_order_independent() {
    let grid = TorusGrid::<f64>::new(2, 2.0, 32).unwrap();
    let c = -1.25;
    let f = Field::constant(grid, c);
    let expect = c.abs() * grid.volume().sqrt();
    for order in [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0] {
        let n = SobolevIndex::new(order).unwrap();
        assert!(rel(f.sobolev_norm(n), expect) < 1e-12, "order {order}");
    }
}

#[test]
fn sobolev_norm_of_single_cosine_mode() {
    // ||A cos(k x)||_{H^n} = A sqrt(V/2) (1+k^2)^{n/2}
    let grid = TorusGrid::<f64>::new(1, TAU, 64).unwrap();
    let amp = 2.0;
    let k = 3.0;
    let f = Field::from_fn(grid, |x| amp * (k * x[0]).cos());
    for order in [-1.5, -1.0, 0.0, 1.0, 2.0] {
        let n = SobolevIndex::new(order).unwrap();
        let expect = amp * (grid.volume() / 2.0).sqrt() * (1.0 + k * k).powf(order / 2.0);
        assert!(
            rel(f.sobolev_norm(n), expect) < 1e-12,
            "order {order}: {} vs {expect}",
            f.sobolev_norm(n)
        );
    }
}

#[test]
fn h_minus1_h1_interpolation_inequality() {
    let grid = TorusGrid::<f64>::new(1, TAU, 64).unwrap();
    for seed in 0..5 {
        let f = Field::random_smooth(grid, seed, 0.5);
        let l2 = f.l2_norm();
        let hm1 = f.sobolev_norm(SobolevIndex::h(-1));
        let h1 = f.sobolev_norm(SobolevIndex::h(1));
        assert!(hm1 * h1 >= l2 * l2 * (1.0 - 1e-12));
    }
}

#[test]
fn h_minus1_decomposition_reconstructs_and_is_bounded() {
    for dim in [1usize, 2] {
        let grid = TorusGrid::<f64>::new(dim, 5.0, 32).unwrap();
        for seed in 0..4 {
            let f = Field::random_smooth(grid, 100 + seed, 0.25);
            let (f0, parts) = h_minus1_decompose(&f);
            // f = f0 + sum_i d_i f_i, spectrally exact
            let mut recon = f0.clone();
            let div = Field::divergence(&parts);
            recon.axpy(1.0, &div);
            let err = recon.sub(&f).l2_norm();
            assert!(err < 1e-12 * f.l2_norm(), "reconstruction {err}");

            // sum_i ||f_i||_{L2} <= sqrt(d+1) ||f||_{H^-1}
            let total = f0.l2_norm() + parts.iter().map(|p| p.l2_norm()).sum::<f64>();
            let bound = ((dim + 1) as f64).sqrt() * f.sobolev_norm(SobolevIndex::h(-1));
            assert!(total <= bound + 1e-9, "{total} vs {bound}");
        }
    }
}

#[test]
fn h_minus1_decomposition_of_constant() {
    let grid = TorusGrid::<f64>::new(2, 1.0, 32).unwrap();
    let f = Field::constant(grid, 4.0);
    let (f0, parts) = h_minus1_decompose(&f);
    assert!(f0.sub(&f).l2_norm() < 1e-12);
    for p in parts {
        assert!(p.l2_norm() < 1e-12);
    }
}

#[test]
fn h_minus1_decomposition_single_mode_factors() {
    // single cosine mode at wavenumber k: f0 = f / (1 + k^2)
    let grid = TorusGrid::<f64>::new(1, TAU, 32).unwrap();
    let k = 2.0;
    let f = Field::from_fn(grid, |x| (k * x[0]).cos());
    let (f0, parts) = h_minus1_decompose(&f);
    let expected_f0 = f.scaled(1.0 / (1.0 + k * k));
    assert!(f0.sub(&expected_f0).l2_norm() < 1e-12);
    // f1 = -d f0/dx = k/(1+k^2) sin(kx)
    let expected_f1 = Field::from_fn(grid, |x| k / (1.0 + k * k) * (k * x[0]).sin());
    assert!(parts[0].sub(&expected_f1).l2_norm() < 1e-12);
}

#[test]
fn gradient_of_constant_vanishes_and_sine_differentiates() {
    let grid = TorusGrid::<f64>::new(1, TAU, 64).unwrap();
    let c = Field::constant(grid, 9.0);
    assert!(c.gradient()[0].l2_norm() < 1e-12);

    let k = 4.0;
    let f = Field::from_fn(grid, |x| (k * x[0]).sin());
    let expect = Field::from_fn(grid, |x| k * (k * x[0]).cos());
    let err = f.gradient()[0].sub(&expect).l2_norm();
    assert!(err < 1e-12 * expect.l2_norm());
}

#[test]
fn divergence_of_gradient_is_laplacian() {
    let grid = TorusGrid::<f64>::new(2, 3.0, 32).unwrap();
    let f = Field::random_smooth(grid, 8, 1.5);
    let lap = Field::divergence(&f.gradient());
    let err = lap.sub(&f.laplacian()).l2_norm();
    assert!(err < 1e-12 * f.laplacian().l2_norm().max(1.0));
}

#[test]
fn integration_by_parts_has_no_boundary_terms() {
    let grid = TorusGrid::<f64>::new(2, TAU, 32).unwrap();
    let f = Field::random_smooth(grid, 21, 1.0);
    let g = Field::random_smooth(grid, 22, 1.0);
    let gf = f.gradient();
    let gg = g.gradient();
    for axis in 0..2 {
        let a = gf[axis].inner_product(&g).unwrap();
        let b = f.inner_product(&gg[axis]).unwrap();
        let scale = f.sobolev_norm(SobolevIndex::h(1)) * g.sobolev_norm(SobolevIndex::h(1));
        assert!((a + b).abs() < 1e-12 * scale.max(1.0), "axis {axis}");
    }
}

#[test]
fn fractional_laplacian_limits_and_interpolation() {
    let grid = TorusGrid::<f64>::new(1, TAU, 64).unwrap();
    let f = Field::random_smooth(grid, 31, 1.0);

    // s = 2 coincides with -Delta
    let frac2 = f.fractional_laplacian(2.0);
    let neg_lap = f.laplacian().scaled(-1.0);
    assert!(frac2.sub(&neg_lap).l2_norm() < 1e-12 * neg_lap.l2_norm());

    // constants are annihilated
    let c = Field::constant(grid, 5.0);
    assert!(c.fractional_laplacian(1.3).l2_norm() < 1e-12);

    // ||(-Delta)^{beta/2} u||_{L2} <= ||u||_{H^beta}: per-mode weight
    // |xi|^{2 beta} <= (1 + |xi|^2)^beta
    for beta in [0.25, 0.5, 0.75] {
        let lhs = f.fractional_laplacian(beta).l2_norm();
        let rhs = f.sobolev_norm(SobolevIndex::new(beta).unwrap());
        assert!(lhs <= rhs * (1.0 + 1e-12), "beta {beta}: {lhs} vs {rhs}");
    }
}

#[test]
fn mollifier_is_unit_mass_contractive_and_converging() {
    let grid = TorusGrid::<f64>::new(1, TAU, 64).unwrap();
    let c = Field::constant(grid, 2.0);
    assert!(c.mollify(0.3).sub(&c).l2_norm() < 1e-12);

    let f = Field::random_smooth(grid, 44, 0.5);
    let mut prev = f64::INFINITY;
    for eps in [0.1, 0.05, 0.025] {
        let err = f.mollify(eps).sub(&f).l2_norm();
        assert!(err < prev, "eps {eps}: {err} vs {prev}");
        prev = err;
        assert!(f.mollify(eps).l2_norm() <= f.l2_norm() * (1.0 + 1e-12));
    }
}

#[test]
fn inner_product_contracts() {
    let grid = TorusGrid::<f64>::new(1, TAU, 32).unwrap();
    let f = Field::random_smooth(grid, 51, 1.0);
    let g = Field::random_smooth(grid, 52, 1.0);
    let h = Field::random_smooth(grid, 53, 1.0);

    // (f, f) = ||f||^2
    assert!(rel(f.inner_product(&f).unwrap(), f.l2_norm().powi(2)) < 1e-12);

    // distinct Fourier modes are orthogonal
    let m1 = Field::from_fn(grid, |x| (x[0]).cos());
    let m2 = Field::from_fn(grid, |x| (2.0 * x[0]).cos());
    assert!(m1.inner_product(&m2).unwrap().abs() < 1e-12);

    // bilinearity
    let lhs = f.inner_product(&g.add(&h)).unwrap();
    let rhs = f.inner_product(&g).unwrap() + f.inner_product(&h).unwrap();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));

    // mismatched grids error
    let other = TorusGrid::<f64>::new(1, TAU, 64).unwrap();
    assert!(f.inner_product(&Field::zero(other)).is_err());
}

#[test]
fn duality_pairing_is_bounded_by_dual_norms() {
    let grid = TorusGrid::<f64>::new(2, 4.0, 32).unwrap();
    for seed in 0..5 {
        let f = Field::random_smooth(grid, 60 + seed, 0.5);
        let g = Field::random_smooth(grid, 80 + seed, 0.5);
        let pair = f.inner_product(&g).unwrap().abs();
        let bound = f.sobolev_norm(SobolevIndex::h(-1)) * g.sobolev_norm(SobolevIndex::h(1));
        assert!(pair <= bound * (1.0 + 1e-12), "{pair} vs {bound}");
    }
}

#[test]
fn sobolev_order_is_range_checked() {
    assert!(SobolevIndex::<f64>::new(4.5).is_err());
    assert!(SobolevIndex::<f64>::new(-5.0).is_err());
    assert!(SobolevIndex::<f64>::new(f64::NAN).is_err());
    assert!(SobolevIndex::<f64>::new(3.5).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn prop_sobolev_norm_monotone_in_order(seed in 0u64..1000, lo in -2.0f64..0.0, gap in 0.1f64..2.0) {
        let grid = TorusGrid::<f64>::new(1, TAU, 32).unwrap();
        let f = Field::random_smooth(grid, seed, 0.5);
        let a = f.sobolev_norm(SobolevIndex::new(lo).unwrap());
        let b = f.sobolev_norm(SobolevIndex::new(lo + gap).unwrap());
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn prop_mollify_never_expands(seed in 0u64..1000, eps in 1e-3f64..1.0) {
        let grid = TorusGrid::<f64>::new(1, TAU, 32).unwrap();
        let f = Field::random_smooth(grid, seed, 0.5);
        prop_assert!(f.mollify(eps).l2_norm() <= f.l2_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn prop_round_trip_is_identity(seed in 0u64..1000) {
        let grid = TorusGrid::<f64>::new(2, 2.5, 16).unwrap();
        let f = Field::random_smooth(grid, seed, 0.0);
        let back = f.to_spectral().to_real();
        prop_assert!(back.sub(&f).l2_norm() <= 1e-12 * f.l2_norm().max(1e-6));
    }
}
