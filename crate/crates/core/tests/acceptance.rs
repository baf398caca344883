//! Acceptance suite: one test per criterion, each printing a pass line
//! with the measured quantities. Run with
//! `cargo test -p levypde --test acceptance -- --nocapture`.

use levypde::coeff::{
    check_coercivity, lambda_homotopy, node_times, random_admissible_set, CoefficientField,
    CoefficientSet, TimeProfile,
};
use levypde::field::{Field, SobolevIndex, TorusGrid};
use levypde::levy::{
    sample_family, JumpSizeDist, LevyMeasure, LevyTriplet, NoiseFamily, TimeGrid,
};
use levypde::solver::{
    homotopy_demo, solve_linear, solve_localized, solve_picard, HomotopyOptions,
    NonlinearForcing, PicardOptions, SolverConfig, SplitLipschitz,
};
use levypde::verify::{
    check_apriori, check_levy_system, check_quadratic_variation, check_t_independence,
    convergence_study, simulate_ensemble, ReferenceKind, Verdict,
};

const TAU: f64 = std::f64::consts::TAU;

fn atoms(pairs: &[(f64, f64)]) -> LevyMeasure<f64> {
    LevyMeasure::atoms(pairs)
}

fn separable(space: Field<f64>) -> CoefficientField<f64> {
    CoefficientField::Separable {
        time: TimeProfile::Constant(1.0),
        space,
    }
}

#[test]
fn criterion_01_quadratic_variation_law() {
    let triplets = vec![
        ("brownian", LevyTriplet::brownian(1.0)),
        (
            "single-atom",
            LevyTriplet::martingale(0.0, atoms(&[(2.0, 0.25)])).unwrap(),
        ),
        (
            "two-atom",
            LevyTriplet::martingale(0.0, atoms(&[(1.0, 1.0), (-0.5, 2.0)])).unwrap(),
        ),
        (
            "compound-poisson-normal",
            LevyTriplet::martingale(
                0.0,
                LevyMeasure::DensityCompoundPoisson {
                    rate: 3.0,
                    sizes: JumpSizeDist::Normal {
                        mean: 0.0,
                        std_dev: 1.0,
                    },
                },
            )
            .unwrap(),
        ),
        (
            "brownian-plus-atoms",
            LevyTriplet::martingale(0.5, atoms(&[(1.0, 0.5), (-2.0, 0.25)])).unwrap(),
        ),
    ];
    let time = TimeGrid::new(1.0, 64).unwrap();
    for (i, (name, t)) in triplets.into_iter().enumerate() {
        let fam = NoiseFamily::new(vec![t]);
        let rep =
            check_quadratic_variation(&fam, time, 0, 9000 + i as u64, 10_000).unwrap();
        assert_eq!(
            rep.verdict,
            Verdict::Pass,
            "{name}: mean {} target {} stderr {}",
            rep.lhs.value,
            rep.rhs_total(),
            rep.lhs.stderr
        );
        println!(
            "ACCEPTANCE 1 quadratic-variation[{name}]: PASS (mean {:.5}, target {:.5}, stderr {:.2e})",
            rep.lhs.value,
            rep.rhs_total(),
            rep.lhs.stderr
        );
    }
}

#[test]
fn criterion_02_levy_system_identity() {
    let grid = TorusGrid::new(1, TAU, 32).unwrap();
    let time = TimeGrid::new(1.0, 32).unwrap();
    let families = vec![
        (
            "single-atom",
            NoiseFamily::new(vec![
                LevyTriplet::martingale(0.0, atoms(&[(1.5, 1.0)])).unwrap()
            ]),
        ),
        (
            "compound-poisson-normal",
            NoiseFamily::new(vec![LevyTriplet::martingale(
                0.0,
                LevyMeasure::DensityCompoundPoisson {
                    rate: 2.0,
                    sizes: JumpSizeDist::Normal {
                        mean: 0.0,
                        std_dev: 0.8,
                    },
                },
            )
            .unwrap()]),
        ),
    ];
    let profiles: Vec<(&str, CoefficientField<f64>)> = vec![
        ("constant", CoefficientField::Constant(0.8)),
        (
            "cosine-time",
            CoefficientField::Separable {
                time: TimeProfile::Cosine {
                    amplitude: 1.0,
                    frequency: 3.0,
                },
                space: Field::from_fn(grid, |x| 0.5 + 0.3 * x[0].cos()),
            },
        ),
        (
            "decaying-time",
            CoefficientField::Separable {
                time: TimeProfile::ExpDecay {
                    amplitude: 1.2,
                    rate: 0.7,
                },
                space: Field::from_fn(grid, |x| (2.0 * x[0]).sin() + 1.0),
            },
        ),
    ];
    for (fi, (fname, fam)) in families.iter().enumerate() {
        for (pi, (pname, g)) in profiles.iter().enumerate() {
            let rep = check_levy_system(
                g,
                fam,
                0,
                grid,
                time,
                40_000 + (fi * 3 + pi) as u64,
                10_000,
            )
            .unwrap();
            assert_eq!(
                rep.verdict,
                Verdict::Pass,
                "{fname}/{pname}: mean {} target {} stderr {}",
                rep.lhs.value,
                rep.rhs_total(),
                rep.lhs.stderr
            );
            println!(
                "ACCEPTANCE 2 levy-system[{fname}/{pname}]: PASS (mean {:.5}, target {:.5}, stderr {:.2e})",
                rep.lhs.value,
                rep.rhs_total(),
                rep.lhs.stderr
            );
        }
    }
}

#[test]
fn criterion_03_solver_vs_mild_oracle() {
    let grid = TorusGrid::new(1, TAU, 64).unwrap();
    let time = TimeGrid::new(1.0, 64).unwrap();
    let cfg = SolverConfig::new(time, grid, 1.0);
    let set = CoefficientSet::<f64>::heat(1, 2);
    let fam = NoiseFamily::new(vec![
        LevyTriplet::brownian(1.0),
        LevyTriplet::martingale(0.0, atoms(&[(0.7, 2.0), (-0.4, 1.0)])).unwrap(),
    ]);
    let f = separable(Field::from_fn(grid, |x| 0.6 * x[0].cos()));
    let g = vec![
        separable(Field::from_fn(grid, |x| 0.5 + 0.3 * (2.0 * x[0]).cos())),
        separable(Field::from_fn(grid, |x| 0.4 * (3.0 * x[0]).sin())),
    ];
    let u0 = Field::from_fn(grid, |x| x[0].sin() + 0.5 * (2.0 * x[0]).cos());

    let table = convergence_study(
        &cfg,
        &set,
        &fam,
        &f,
        &g,
        &u0,
        &[64, 128, 256],
        ReferenceKind::MildOracle,
        777,
        8,
    )
    .unwrap();
    assert!(
        table.order >= 0.9,
        "fitted temporal order {} < 0.9 ({:?})",
        table.order,
        table.rows
    );
    assert!(
        table.r_squared >= 0.98,
        "R^2 {} < 0.98 ({:?})",
        table.r_squared,
        table.rows
    );
    println!(
        "ACCEPTANCE 3 additive-vs-oracle: PASS (order {:.3}, R^2 {:.4})",
        table.order, table.r_squared
    );
}

#[test]
fn criterion_04_multiplicative_self_convergence() {
    let grid = TorusGrid::new(1, TAU, 64).unwrap();
    let time = TimeGrid::new(1.0, 64).unwrap();
    let cfg = SolverConfig::new(time, grid, 1.0);
    let fam = NoiseFamily::new(vec![LevyTriplet::brownian(1.0)]);
    let mut set = CoefficientSet::<f64>::heat(1, 1);
    set.a[0] = CoefficientField::Constant(1.5);
    set.sigma[0] = CoefficientField::Constant(0.5); // alpha = 0.125 << 1.5
    set.mu[0] = CoefficientField::Constant(0.3);
    // admissible at (delta, K) = (0.5, 5)
    let rep = check_coercivity(
        &set,
        &fam,
        0.5,
        5.0,
        grid,
        &node_times(&time),
        None,
    )
    .unwrap();
    assert!(rep.pass);

    let f = separable(Field::from_fn(grid, |x| 0.4 * x[0].cos()));
    let g = vec![separable(Field::from_fn(grid, |x| {
        0.5 + 0.2 * (2.0 * x[0]).cos()
    }))];
    let u0 = Field::from_fn(grid, |x| x[0].sin());
    let table = convergence_study(
        &cfg,
        &set,
        &fam,
        &f,
        &g,
        &u0,
        &[64, 128, 256],
        ReferenceKind::SelfRefined { factor: 16 },
        4242,
        8,
    )
    .unwrap();
    assert!(
        table.order >= 0.45,
        "fitted order {} < 0.45 ({:?})",
        table.order,
        table.rows
    );
    println!(
        "ACCEPTANCE 4 multiplicative-self-convergence: PASS (order {:.3}, R^2 {:.4})",
        table.order, table.r_squared
    );
}

#[test]
fn criterion_05_apriori_estimate() {
    let grid = TorusGrid::new(1, TAU, 32).unwrap();
    let time = TimeGrid::new(1.0, 64).unwrap();
    let cfg = SolverConfig::new(time, grid, 1.0);
    let fam = NoiseFamily::new(vec![
        LevyTriplet::brownian(1.0),
        LevyTriplet::martingale(0.0, atoms(&[(0.8, 1.0)])).unwrap(),
    ]);
    let weights = fam.weights().to_vec();

    // --- exact scale invariance on fixed noise across s in {1, 2, 4, 8}
    let set = random_admissible_set(grid, &weights, 123, 0.5, 5.0);
    let path = sample_family(&fam, time, 31337).unwrap();
    let f0 = separable(Field::random_smooth(grid, 61, 1.5));
    let g0 = vec![
        separable(Field::random_smooth(grid, 62, 1.5).scaled(0.5)),
        separable(Field::random_smooth(grid, 63, 1.5).scaled(0.5)),
    ];
    let u00 = Field::random_smooth(grid, 64, 1.5);
    let mut ratios = Vec::new();
    for s in [1.0f64, 2.0, 4.0, 8.0] {
        let scale = |c: &CoefficientField<f64>| CoefficientField::Scaled {
            factor: s,
            offset: 0.0,
            inner: Box::new(c.clone()),
        };
        let f = scale(&f0);
        let g: Vec<_> = g0.iter().map(&scale).collect();
        let u0 = u00.scaled(s);
        let sol = solve_linear(&cfg, &set, &f, &g, &u0, &path).unwrap();
        let rep = check_apriori(&cfg, &f, &g, &u0, &weights, &[sol]).unwrap();
        ratios.push(rep.ratio.unwrap());
    }
    for r in &ratios[1..] {
        let dev = (r - ratios[0]).abs() / ratios[0];
        assert!(dev <= 1e-10, "scale invariance violated: {ratios:?}");
    }

    // --- 20 random admissible sets, two independent master seeds
    let mut maxima = Vec::new();
    for master in [11_001u64, 22_002] {
        let mut max_ratio: f64 = 0.0;
        for set_seed in 0..20u64 {
            let set = random_admissible_set(grid, &weights, set_seed, 0.5, 5.0);
            let coer = check_coercivity(
                &set,
                &fam,
                0.5,
                5.0,
                grid,
                &node_times(&time),
                None,
            )
            .unwrap();
            assert!(coer.pass, "set {set_seed} not admissible: {coer:?}");
            let bound = levypde::coeff::check_boundedness(
                &set,
                fam.weights(),
                5.0,
                grid,
                &node_times(&time),
                None,
            )
            .unwrap();
            assert!(bound.pass, "set {set_seed} unbounded: {bound:?}");

            let (_, sols) = simulate_ensemble(
                &cfg,
                &set,
                &fam,
                &f0,
                &g0,
                &u00,
                master.wrapping_add(set_seed),
                24,
            )
            .unwrap();
            let rep = check_apriori(&cfg, &f0, &g0, &u00, &weights, &sols).unwrap();
            let ratio = rep.ratio.unwrap();
            assert!(ratio.is_finite(), "set {set_seed}: ratio not finite");
            max_ratio = max_ratio.max(ratio);
        }
        maxima.push(max_ratio);
    }
    let spread = (maxima[0] - maxima[1]).abs() / maxima[0].max(maxima[1]);
    assert!(
        spread <= 0.10,
        "max ratio unstable across master seeds: {maxima:?}"
    );
    println!(
        "ACCEPTANCE 5 apriori: PASS (scale-invariant ratios, max constant {:.4} / {:.4}, spread {:.2}%)",
        maxima[0],
        maxima[1],
        100.0 * spread
    );
}

#[test]
fn criterion_06_picard_contraction_fractional() {
    let grid = TorusGrid::new(1, TAU, 64).unwrap();
    let time = TimeGrid::new(1.0, 64).unwrap();
    let cfg = SolverConfig::new(time, grid, 1.0);
    let set = CoefficientSet::<f64>::heat(1, 1);
    let fam = NoiseFamily::new(vec![LevyTriplet::brownian(0.5)]);
    let path = sample_family(&fam, time, 2024).unwrap();
    let u0 = Field::from_fn(grid, |x| x[0].sin() + 0.3 * (3.0 * x[0]).cos());
    let nl = NonlinearForcing::fractional(
        1.5,
        0.5,
        1,
        SplitLipschitz {
            epsilon: 0.1,
            k1: 12.0,
        },
    );
    // declared certificate must hold empirically
    let worst = nl.validate_certificate(grid, fam.weights(), 16, 5150);
    assert!(worst <= 1.0, "certificate ratio {worst}");

    let opts = PicardOptions {
        tol: 1e-9,
        ..PicardOptions::default()
    };
    let (_, trace) = solve_picard(&cfg, &set, &nl, &u0, &path, &opts).unwrap();
    let ratio = trace.worst_ratio().unwrap();
    assert!(ratio <= 0.9, "measured per-iterate ratio {ratio}");
    let final_dist = *trace
        .windows
        .last()
        .unwrap()
        .distances
        .last()
        .unwrap();
    assert!(
        final_dist <= 1e-8,
        "final successive-iterate distance {final_dist}"
    );
    println!(
        "ACCEPTANCE 6 picard-fractional: PASS (worst ratio {:.3}, final distance {:.2e}, {} window(s))",
        ratio,
        final_dist,
        trace.windows.len()
    );
}

#[test]
fn criterion_07_localization_consistency() {
    let grid = TorusGrid::new(1, TAU, 32).unwrap();
    let time = TimeGrid::new(1.0, 64).unwrap();
    let cfg = SolverConfig::new(time, grid, 1.0);
    let heavy = LevyTriplet::martingale(
        0.0,
        LevyMeasure::TruncatedStableLike {
            alpha: 1.2,
            intensity: 0.4,
            inner_cut: 0.2,
            outer_cut: f64::INFINITY,
        },
    )
    .unwrap();
    let light = LevyTriplet::martingale(1.0, atoms(&[(0.5, 1.0)])).unwrap();
    let fam = NoiseFamily::new(vec![heavy, light]);
    let mut set = CoefficientSet::<f64>::heat(1, 2);
    set.sigma[1] = CoefficientField::Constant(0.3);
    set.mu[0] = CoefficientField::Constant(0.2);
    set.mu[1] = CoefficientField::Constant(0.1);
    let f = CoefficientField::Constant(0.4);
    let g = vec![
        CoefficientField::Constant(0.5),
        CoefficientField::Constant(0.25),
    ];
    let u0 = Field::random_smooth(grid, 5, 1.5);
    let level = 1.0;

    let bits = |s: &levypde::solver::SolutionPath<f64>| -> Vec<Vec<u64>> {
        s.fields()
            .iter()
            .map(|fld| fld.values().iter().map(|v| v.to_bits()).collect())
            .collect()
    };

    let (mut with_jump, mut without_jump) = (0usize, 0usize);
    for replica in 0..100u64 {
        let path = sample_family(&fam, time, levypde::seeds::derive(321, replica)).unwrap();
        let direct = solve_linear(&cfg, &set, &f, &g, &u0, &path).unwrap();
        let direct_bits = bits(&direct);

        // n = +inf: bit-identical
        let (sol_inf, _) =
            solve_localized(&cfg, &set, &fam, &f, &g, &u0, &path, 1, f64::INFINITY).unwrap();
        assert_eq!(bits(&sol_inf), direct_bits, "replica {replica}: inf level");

        let (sol, plan) =
            solve_localized(&cfg, &set, &fam, &f, &g, &u0, &path, 1, level).unwrap();
        let t_n = path.first_large_jump_time(level, 1);
        assert_eq!(plan.first_large_jump, t_n);
        if t_n.is_infinite() {
            without_jump += 1;
            assert_eq!(bits(&sol), direct_bits, "replica {replica}: no large jump");
        } else {
            with_jump += 1;
            let sol_bits = bits(&sol);
            for n in 0..time.num_nodes() {
                if time.node_time(n) < t_n {
                    assert_eq!(
                        sol_bits[n], direct_bits[n],
                        "replica {replica}: node {n} before T_n"
                    );
                }
            }
        }
    }
    assert!(with_jump > 0 && without_jump > 0, "degenerate split");
    println!(
        "ACCEPTANCE 7 localization: PASS ({with_jump} replicas with a large jump, {without_jump} without)"
    );
}

#[test]
fn criterion_08_coercivity_validator() {
    let delta = 0.5;
    let kbound = 5.0;
    let tg = TimeGrid::new(1.0, 2).unwrap();
    let times = node_times(&tg);

    struct Case {
        name: &'static str,
        dim: usize,
        build: fn() -> (CoefficientSet<f64>, NoiseFamily<f64>),
        delta_min: f64,
        pass: bool,
    }
    let cases = [
        Case {
            name: "heat",
            dim: 1,
            build: || (CoefficientSet::heat(1, 0), NoiseFamily::new(vec![])),
            delta_min: 1.0,
            pass: true,
        },
        Case {
            name: "a=2 alpha=1",
            dim: 1,
            build: || {
                let mut set = CoefficientSet::heat(1, 1);
                set.a[0] = CoefficientField::Constant(2.0);
                set.sigma[0] = CoefficientField::Constant(1.0);
                (
                    set,
                    NoiseFamily::new(vec![
                        LevyTriplet::martingale(1.0, atoms(&[(1.0, 1.0)])).unwrap()
                    ]),
                )
            },
            delta_min: 1.0,
            pass: true,
        },
        Case {
            name: "boundary a=alpha",
            dim: 1,
            build: || {
                let mut set = CoefficientSet::heat(1, 1);
                set.sigma[0] = CoefficientField::Constant(1.0);
                (
                    set,
                    NoiseFamily::new(vec![
                        LevyTriplet::martingale(1.0, atoms(&[(1.0, 1.0)])).unwrap()
                    ]),
                )
            },
            delta_min: 0.0,
            pass: false,
        },
        Case {
            name: "anisotropic diag(2,5)",
            dim: 2,
            build: || {
                let mut set = CoefficientSet::heat(2, 0);
                set.a[0] = CoefficientField::Constant(2.0);
                set.a[3] = CoefficientField::Constant(5.0);
                (set, NoiseFamily::new(vec![]))
            },
            delta_min: 2.0,
            pass: true,
        },
        Case {
            name: "too large a=6I",
            dim: 1,
            build: || {
                let mut set = CoefficientSet::heat(1, 0);
                set.a[0] = CoefficientField::Constant(6.0);
                (set, NoiseFamily::new(vec![]))
            },
            delta_min: 6.0,
            pass: false,
        },
        Case {
            name: "rank-one overshoot",
            dim: 2,
            build: || {
                let mut set = CoefficientSet::heat(2, 1);
                set.sigma[0] = CoefficientField::Constant(1.0);
                set.sigma[1] = CoefficientField::Constant(1.0);
                let fam = NoiseFamily::new(vec![
                    LevyTriplet::martingale(1.0, atoms(&[(1.0, 1.0)])).unwrap()
                ]);
                (set, fam)
            },
            delta_min: -1.0,
            pass: false,
        },
    ];
    for case in &cases {
        let grid = TorusGrid::new(case.dim, TAU, 8).unwrap();
        let (set, fam) = (case.build)();
        let rep = check_coercivity(&set, &fam, delta, kbound, grid, &times, None).unwrap();
        assert_eq!(rep.pass, case.pass, "{}: {rep:?}", case.name);
        assert!(
            (rep.delta_min - case.delta_min).abs() <= 1e-10,
            "{}: delta_min {} vs analytic {}",
            case.name,
            rep.delta_min,
            case.delta_min
        );
        println!(
            "ACCEPTANCE 8 coercivity[{}]: PASS (delta_min {:+.12}, expected {:+.1}, verdict {})",
            case.name,
            rep.delta_min,
            case.delta_min,
            if rep.pass { "pass" } else { "fail" }
        );
    }
}

#[test]
fn criterion_09_t_independence() {
    let grid = TorusGrid::new(1, TAU, 32).unwrap();
    let mut set = CoefficientSet::<f64>::heat(1, 1);
    set.sigma[0] = CoefficientField::Constant(0.3);
    assert!(set.lower_order_free());
    let fam = NoiseFamily::new(vec![LevyTriplet::brownian(1.0)]);
    let weights = fam.weights().to_vec();
    // forcing concentrated on modes k >= 2 so the gradient energy reaches
    // its stationary level well inside the shortest horizon
    let f = separable(Field::from_fn(grid, |x| 0.5 * (2.0 * x[0]).cos()));
    let g = vec![separable(Field::from_fn(grid, |x| {
        0.6 * (2.0 * x[0]).cos() + 0.2 * (3.0 * x[0]).sin()
    }))];
    let u0 = Field::zero(grid);

    let mut runs = Vec::new();
    for (i, horizon) in [1.0f64, 2.0, 4.0].into_iter().enumerate() {
        let time = TimeGrid::new(horizon, (64.0 * horizon) as usize).unwrap();
        let cfg = SolverConfig::new(time, grid, 1.0);
        let (_, sols) =
            simulate_ensemble(&cfg, &set, &fam, &f, &g, &u0, 600 + i as u64, 48).unwrap();
        runs.push((cfg, sols));
    }
    let rep = check_t_independence(&set, &runs, &f, &g, &u0, &weights).unwrap();
    assert!(rep.pass, "fitted constants {:?}", rep.per_horizon);
    let detail: Vec<String> = rep
        .per_horizon
        .iter()
        .map(|(t, r, se)| format!("T={t}: {r:.4}+-{se:.4}"))
        .collect();
    println!("ACCEPTANCE 9 t-independence: PASS ({})", detail.join(", "));
}

#[test]
fn criterion_10_homotopy_demo() {
    let grid = TorusGrid::new(1, TAU, 64).unwrap();
    let time = TimeGrid::new(1.0, 32).unwrap();
    let cfg = SolverConfig::new(time, grid, 1.0);
    let fam = NoiseFamily::new(vec![LevyTriplet::brownian(1.0)]);
    let weights = fam.weights().to_vec();
    let set = random_admissible_set(grid, &weights, 77, 0.5, 5.0);
    let path = sample_family(&fam, time, 88).unwrap();
    let u0 = Field::random_smooth(grid, 6, 1.0);
    let f = separable(Field::random_smooth(grid, 7, 1.5));
    let g = vec![separable(Field::random_smooth(grid, 8, 1.5).scaled(0.5))];

    let (lambda0, lambda) = (0.0, 0.1);
    let (limit, trace) = homotopy_demo(
        &cfg,
        &set,
        &f,
        &g,
        &u0,
        &path,
        lambda,
        lambda0,
        &HomotopyOptions {
            tol: 1e-12,
            max_iters: 60,
        },
    )
    .unwrap();
    let worst_ratio = trace
        .ratios()
        .into_iter()
        .fold(0.0f64, f64::max);
    assert!(
        worst_ratio <= 0.5,
        "iterate-distance ratio {worst_ratio} exceeds 0.5"
    );

    let direct_set = lambda_homotopy(&set, lambda).unwrap();
    let direct = solve_linear(&cfg, &direct_set, &f, &g, &u0, &path).unwrap();
    let dist = limit.h1_distance(&direct, 0..time.steps());
    let scale = direct.bh_sq(SobolevIndex::h(1)).sqrt().max(1.0);
    assert!(
        dist <= 10.0 * cfg.lin_tol * scale,
        "limit-vs-direct distance {dist} (allowance {})",
        10.0 * cfg.lin_tol * scale
    );
    println!(
        "ACCEPTANCE 10 homotopy: PASS (worst ratio {:.3}, limit-direct distance {:.2e}, {} iterations)",
        worst_ratio,
        dist,
        trace.distances.len()
    );
}
