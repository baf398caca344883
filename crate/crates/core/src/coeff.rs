//! Evaluable coefficient sets for the divergence-form equation and the
//! validators for its standing assumptions: coercivity of `a - alpha`
//! with `alpha^{ij} = (1/2) sum_k w_k sigma^{ik} sigma^{jk}`, uniform
//! boundedness, and the partial-moment variant that exempts the leading
//! `N_0` channels. Also the lambda homotopy of the continuity method.
//!
//! Checks are pointwise on the sampling lattice (every requested time node
//! crossed with every grid point); the worst margin and its location are
//! reported.

use crate::field::{Field, FieldError, TorusGrid};
use crate::levy::{LevyError, NoiseFamily, PathRealization, TimeGrid};
use crate::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoeffError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("homotopy parameter {0} outside [0, 1]")]
    Lambda(f64),
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),
    #[error("coefficient not evaluable: {0}")]
    NotEvaluable(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Levy(#[from] LevyError),
}

/// Deterministic scalar time profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile<T> {
    Constant(T),
    /// `amplitude * cos(frequency * t)`
    Cosine { amplitude: T, frequency: T },
    /// `amplitude * exp(-rate * t)`
    ExpDecay { amplitude: T, rate: T },
}

impl<T: Real> TimeProfile<T> {
    pub fn eval(&self, t: T) -> T {
        match *self {
            TimeProfile::Constant(v) => v,
            TimeProfile::Cosine {
                amplitude,
                frequency,
            } => amplitude * (frequency * t).cos(),
            TimeProfile::ExpDecay { amplitude, rate } => amplitude * (-rate * t).exp(),
        }
    }
}

/// Registry of noise-adapted coefficient functionals. All variants use
/// strictly left-limit information of the driving path (the predictable
/// evaluation surrogate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptedCoefficient<T> {
    /// `clamp(base + gain * Z^k_{t-}, lo, hi)`, constant in space.
    ClippedNoiseLevel {
        channel: usize,
        base: T,
        gain: T,
        lo: T,
        hi: T,
    },
}

/// Evaluation context: where and when a coefficient is needed, plus the
/// noise realization for adapted variants.
pub struct CoeffContext<'a, T: Real> {
    pub grid: TorusGrid<T>,
    /// Index of the time node (left endpoint of the current step).
    pub node: usize,
    pub time: T,
    pub noise: Option<&'a PathRealization<T>>,
}

/// One scalar coefficient of the equation, evaluable at every
/// (time node, grid point).
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientField<T: Real> {
    Constant(T),
    /// `profile(t) * space(x)`
    Separable {
        time: TimeProfile<T>,
        space: Field<T>,
    },
    /// One field per time node.
    GridSampled(Vec<Field<T>>),
    Adapted(AdaptedCoefficient<T>),
    /// `factor * inner + offset`, used by the lambda homotopy.
    Scaled {
        factor: T,
        offset: T,
        inner: Box<CoefficientField<T>>,
    },
    /// Pointwise sum, used when absorbed drift folds noise coefficients
    /// into the deterministic side.
    Sum(Vec<CoefficientField<T>>),
}

impl<T: Real> CoefficientField<T> {
    pub fn zero() -> Self {
        CoefficientField::Constant(T::zero())
    }

    /// Structural constant value, if the coefficient is one.
    pub fn as_constant(&self) -> Option<T> {
        match self {
            CoefficientField::Constant(v) => Some(*v),
            CoefficientField::Scaled {
                factor,
                offset,
                inner,
            } => inner.as_constant().map(|v| *factor * v + *offset),
            CoefficientField::Sum(parts) => parts
                .iter()
                .map(|p| p.as_constant())
                .try_fold(T::zero(), |s, v| v.map(|v| s + v)),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(T::zero())
    }

    pub fn eval(&self, ctx: &CoeffContext<T>) -> Result<Field<T>, CoeffError> {
        match self {
            CoefficientField::Constant(v) => Ok(Field::constant(ctx.grid, *v)),
            CoefficientField::Separable { time, space } => {
                if *space.grid() != ctx.grid {
                    return Err(CoeffError::Dimension(
                        "separable coefficient has a spatial profile on the wrong grid".into(),
                    ));
                }
                Ok(space.scaled(time.eval(ctx.time)))
            }
            CoefficientField::GridSampled(fields) => {
                let f = fields.get(ctx.node).ok_or_else(|| {
                    CoeffError::NotEvaluable(format!(
                        "grid-sampled coefficient has {} nodes, asked for node {}",
                        fields.len(),
                        ctx.node
                    ))
                })?;
                if *f.grid() != ctx.grid {
                    return Err(CoeffError::Dimension(
                        "grid-sampled coefficient on the wrong grid".into(),
                    ));
                }
                Ok(f.clone())
            }
            CoefficientField::Adapted(kind) => {
                let path = ctx.noise.ok_or_else(|| {
                    CoeffError::NotEvaluable("adapted coefficient needs a noise realization".into())
                })?;
                match *kind {
                    AdaptedCoefficient::ClippedNoiseLevel {
                        channel,
                        base,
                        gain,
                        lo,
                        hi,
                    } => {
                        // strict left limit at node granularity: sum of the
                        // increments of all bins before this node
                        let incs = path.increments(channel)?;
                        let z_left = incs[..ctx.node.min(incs.len())]
                            .iter()
                            .fold(T::zero(), |s, &x| s + x);
                        let v = (base + gain * z_left).max(lo).min(hi);
                        Ok(Field::constant(ctx.grid, v))
                    }
                }
            }
            CoefficientField::Scaled {
                factor,
                offset,
                inner,
            } => {
                let mut f = inner.eval(ctx)?;
                for v in f.values_mut() {
                    *v = *factor * *v + *offset;
                }
                Ok(f)
            }
            CoefficientField::Sum(parts) => {
                let mut acc = Field::zero(ctx.grid);
                for p in parts {
                    acc.axpy(T::one(), &p.eval(ctx)?);
                }
                Ok(acc)
            }
        }
    }
}

/// The full coefficient family of the equation: `a` (d x d), `bbar` (d),
/// `b` (d), `c`, `sigma` (K x d, channel-major), `mu` (K).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet<T: Real> {
    dim: usize,
    channels: usize,
    pub a: Vec<CoefficientField<T>>,
    pub b_bar: Vec<CoefficientField<T>>,
    pub b: Vec<CoefficientField<T>>,
    pub c: CoefficientField<T>,
    pub sigma: Vec<CoefficientField<T>>,
    pub mu: Vec<CoefficientField<T>>,
}

impl<T: Real> CoefficientSet<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        channels: usize,
        a: Vec<CoefficientField<T>>,
        b_bar: Vec<CoefficientField<T>>,
        b: Vec<CoefficientField<T>>,
        c: CoefficientField<T>,
        sigma: Vec<CoefficientField<T>>,
        mu: Vec<CoefficientField<T>>,
    ) -> Result<Self, CoeffError> {
        if a.len() != dim * dim {
            return Err(CoeffError::Dimension(format!(
                "a has {} entries, expected {}",
                a.len(),
                dim * dim
            )));
        }
        if b_bar.len() != dim || b.len() != dim {
            return Err(CoeffError::Dimension(
                "bbar and b must have one entry per dimension".into(),
            ));
        }
        if sigma.len() != channels * dim {
            return Err(CoeffError::Dimension(format!(
                "sigma has {} entries, expected {} (channels x dim)",
                sigma.len(),
                channels * dim
            )));
        }
        if mu.len() != channels {
            return Err(CoeffError::Dimension(
                "mu must have one entry per channel".into(),
            ));
        }
        Ok(Self {
            dim,
            channels,
            a,
            b_bar,
            b,
            c,
            sigma,
            mu,
        })
    }

    /// Heat-equation set: `a = I`, everything else zero.
    pub fn heat(dim: usize, channels: usize) -> Self {
        let mut a = vec![CoefficientField::zero(); dim * dim];
        for i in 0..dim {
            a[i * dim + i] = CoefficientField::Constant(T::one());
        }
        Self {
            dim,
            channels,
            a,
            b_bar: vec![CoefficientField::zero(); dim],
            b: vec![CoefficientField::zero(); dim],
            c: CoefficientField::zero(),
            sigma: vec![CoefficientField::zero(); channels * dim],
            mu: vec![CoefficientField::zero(); channels],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn a_entry(&self, i: usize, j: usize) -> &CoefficientField<T> {
        &self.a[i * self.dim + j]
    }

    pub fn sigma_entry(&self, i: usize, k: usize) -> &CoefficientField<T> {
        &self.sigma[k * self.dim + i]
    }

    /// True when the lower-order coefficients `bbar, b, c, mu` are all
    /// structurally zero (the T-independence regime).
    pub fn lower_order_free(&self) -> bool {
        self.b_bar.iter().all(|f| f.is_zero())
            && self.b.iter().all(|f| f.is_zero())
            && self.c.is_zero()
            && self.mu.iter().all(|f| f.is_zero())
    }

    /// Evaluate every coefficient at one time node.
    pub fn evaluate(&self, ctx: &CoeffContext<T>) -> Result<EvaluatedCoefficients<T>, CoeffError> {
        Ok(EvaluatedCoefficients {
            dim: self.dim,
            channels: self.channels,
            a: self
                .a
                .iter()
                .map(|f| f.eval(ctx))
                .collect::<Result<_, _>>()?,
            b_bar: self
                .b_bar
                .iter()
                .map(|f| f.eval(ctx))
                .collect::<Result<_, _>>()?,
            b: self
                .b
                .iter()
                .map(|f| f.eval(ctx))
                .collect::<Result<_, _>>()?,
            c: self.c.eval(ctx)?,
            sigma: self
                .sigma
                .iter()
                .map(|f| f.eval(ctx))
                .collect::<Result<_, _>>()?,
            mu: self
                .mu
                .iter()
                .map(|f| f.eval(ctx))
                .collect::<Result<_, _>>()?,
        })
    }
}

/// A coefficient set evaluated at one time node: plain fields.
pub struct EvaluatedCoefficients<T: Real> {
    pub dim: usize,
    pub channels: usize,
    pub a: Vec<Field<T>>,
    pub b_bar: Vec<Field<T>>,
    pub b: Vec<Field<T>>,
    pub c: Field<T>,
    pub sigma: Vec<Field<T>>,
    pub mu: Vec<Field<T>>,
}

impl<T: Real> EvaluatedCoefficients<T> {
    pub fn sigma_at(&self, i: usize, k: usize) -> &Field<T> {
        &self.sigma[k * self.dim + i]
    }
}

/// Noise-coupling matrix `alpha^{ij}(x) = (1/2) sum_{k >= skip} w_k
/// sigma^{ik}(x) sigma^{jk}(x)`; symmetric positive semidefinite pointwise.
/// Channels with infinite weight must have vanishing sigma (checked).
pub fn alpha_matrix<T: Real>(
    eval: &EvaluatedCoefficients<T>,
    weights: &[T],
    skip: usize,
) -> Result<Vec<Field<T>>, CoeffError> {
    let d = eval.dim;
    let grid = *eval.c.grid();
    let mut alpha = vec![Field::zero(grid); d * d];
    for (k, &w) in weights.iter().enumerate().skip(skip) {
        if w == T::zero() {
            continue;
        }
        if w.is_infinite() {
            let active = (0..d).any(|i| {
                eval.sigma_at(i, k)
                    .values()
                    .iter()
                    .any(|&v| v != T::zero())
            });
            if active {
                return Err(CoeffError::Hypothesis(format!(
                    "channel {k} has infinite weight but nonzero sigma"
                )));
            }
            continue;
        }
        for i in 0..d {
            for j in 0..d {
                let si = eval.sigma_at(i, k);
                let sj = eval.sigma_at(j, k);
                let target = &mut alpha[i * d + j];
                for ((t, &x), &y) in target
                    .values_mut()
                    .iter_mut()
                    .zip(si.values())
                    .zip(sj.values())
                {
                    *t += T::half() * w * x * y;
                }
            }
        }
    }
    Ok(alpha)
}

/// Outcome of a pointwise ellipticity scan.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityReport<T: Real> {
    /// Smallest eigenvalue of the symmetrized `a - alpha` over the lattice.
    pub delta_min: T,
    /// Largest eigenvalue of the symmetrized `a` over the lattice.
    pub k_max: T,
    pub worst_time: T,
    pub worst_point: Vec<T>,
    pub pass: bool,
    /// Whether a non-symmetric `a` had to be symmetrized (logged).
    pub symmetrized: bool,
}

/// All node/time pairs of a time grid, the default check lattice.
pub fn node_times<T: Real>(grid: &TimeGrid<T>) -> Vec<(usize, T)> {
    (0..grid.num_nodes())
        .map(|n| (n, grid.node_time(n)))
        .collect()
}

/// Coercivity check `delta |xi|^2 <= (a - alpha) xi xi` together with
/// `a xi xi <= kbound |xi|^2`, scanned pointwise over the lattice.
pub fn check_coercivity<T: Real>(
    set: &CoefficientSet<T>,
    family: &NoiseFamily<T>,
    delta: T,
    kbound: T,
    grid: TorusGrid<T>,
    times: &[(usize, T)],
    noise: Option<&PathRealization<T>>,
) -> Result<EllipticityReport<T>, CoeffError> {
    check_partial_moment(set, family, delta, kbound, 0, grid, times, noise)
}

/// Partial-moment variant: `alpha` sums only channels `k >= n0`; channels
/// below `n0` must have structurally vanishing `sigma` and channels at or
/// above `n0` must have finite weight. `n0 = 0` is exactly
/// [`check_coercivity`].
#[allow(clippy::too_many_arguments)]
pub fn check_partial_moment<T: Real>(
    set: &CoefficientSet<T>,
    family: &NoiseFamily<T>,
    delta: T,
    kbound: T,
    n0: usize,
    grid: TorusGrid<T>,
    times: &[(usize, T)],
    noise: Option<&PathRealization<T>>,
) -> Result<EllipticityReport<T>, CoeffError> {
    if set.channels() != family.len() {
        return Err(CoeffError::Dimension(format!(
            "set has {} channels, family {}",
            set.channels(),
            family.len()
        )));
    }
    for k in 0..n0.min(set.channels()) {
        for i in 0..set.dim() {
            if !set.sigma_entry(i, k).is_zero() {
                return Err(CoeffError::Hypothesis(format!(
                    "sigma^({i},{k}) must vanish for exempted channel {k} < N0 = {n0}"
                )));
            }
        }
    }
    for (k, &w) in family.weights().iter().enumerate().skip(n0) {
        if w.is_infinite() {
            return Err(CoeffError::Hypothesis(format!(
                "channel {k} >= N0 must have a finite second moment"
            )));
        }
    }

    let d = set.dim();
    let mut delta_min = T::infinity();
    let mut k_max = T::neg_infinity();
    let mut worst_time = T::zero();
    let mut worst_point = vec![T::zero(); d];
    let mut symmetrized = false;

    for &(node, time) in times {
        let ctx = CoeffContext {
            grid,
            node,
            time,
            noise,
        };
        let eval = set.evaluate(&ctx)?;
        let alpha = alpha_matrix(&eval, family.weights(), n0)?;
        for p in 0..grid.num_cells() {
            let mut m_a = [T::zero(); 9];
            let mut m_coerc = [T::zero(); 9];
            let mut asym = T::zero();
            for i in 0..d {
                for j in 0..d {
                    let aij = eval.a[i * d + j].values()[p];
                    let aji = eval.a[j * d + i].values()[p];
                    asym = asym.max((aij - aji).abs());
                    let sym = (aij + aji) * T::half();
                    m_a[i * 3 + j] = sym;
                    m_coerc[i * 3 + j] = sym - alpha[i * d + j].values()[p];
                }
            }
            if asym > T::lit(1e-12) {
                symmetrized = true;
            }
            let (lo, _) = sym_eigen_range(&m_coerc, d);
            let (_, hi) = sym_eigen_range(&m_a, d);
            if lo < delta_min {
                delta_min = lo;
                worst_time = time;
                let c = grid.coords(p);
                worst_point = c[..d].to_vec();
            }
            k_max = k_max.max(hi);
        }
    }
    if symmetrized {
        log::warn!("non-symmetric a encountered; eigenvalue checks use the symmetric part");
    }
    Ok(EllipticityReport {
        delta_min,
        k_max,
        worst_time,
        worst_point,
        pass: delta_min >= delta && k_max <= kbound,
        symmetrized,
    })
}

/// Outcome of the uniform boundedness scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessReport<T: Real> {
    pub worst_value: T,
    pub worst_time: T,
    pub worst_point: Vec<T>,
    pub pass: bool,
    /// `kbound - worst_value`.
    pub margin: T,
}

/// Uniform bound `|a| + |bbar| + |b| + |c| + (sum_k w_k (sigma^2 + mu^2))^{1/2}
/// <= kbound`, checked for every index pair at every lattice point. The
/// weights are passed explicitly so localized runs can substitute the
/// truncated-measure weights for their exempted channels.
pub fn check_boundedness<T: Real>(
    set: &CoefficientSet<T>,
    weights: &[T],
    kbound: T,
    grid: TorusGrid<T>,
    times: &[(usize, T)],
    noise: Option<&PathRealization<T>>,
) -> Result<BoundednessReport<T>, CoeffError> {
    if weights.len() != set.channels() {
        return Err(CoeffError::Dimension(format!(
            "{} weights for {} channels",
            weights.len(),
            set.channels()
        )));
    }
    let d = set.dim();
    let mut worst_value = T::neg_infinity();
    let mut worst_time = T::zero();
    let mut worst_point = vec![T::zero(); d];
    for &(node, time) in times {
        let ctx = CoeffContext {
            grid,
            node,
            time,
            noise,
        };
        let eval = set.evaluate(&ctx)?;
        for p in 0..grid.num_cells() {
            for i in 0..d {
                // noise column for row i; zero coefficients contribute
                // nothing even when the channel weight is infinite
                let mut col = T::zero();
                for (k, &w) in weights.iter().enumerate() {
                    let s = eval.sigma_at(i, k).values()[p];
                    let m = eval.mu[k].values()[p];
                    let mag = s * s + m * m;
                    if mag != T::zero() {
                        col += w * mag;
                    }
                }
                let col = col.sqrt();
                for j in 0..d {
                    let v = eval.a[i * d + j].values()[p].abs()
                        + eval.b_bar[i].values()[p].abs()
                        + eval.b[i].values()[p].abs()
                        + eval.c.values()[p].abs()
                        + col;
                    if v > worst_value {
                        worst_value = v;
                        worst_time = time;
                        let c = grid.coords(p);
                        worst_point = c[..d].to_vec();
                    }
                }
            }
        }
    }
    Ok(BoundednessReport {
        worst_value,
        worst_time,
        worst_point,
        pass: worst_value <= kbound,
        margin: kbound - worst_value,
    })
}

/// Continuity-method interpolation: `a_l = l a + (1-l) I`, all lower-order
/// and noise coefficients scaled by `l`. `l = 1` is the original set,
/// `l = 0` the heat set.
pub fn lambda_homotopy<T: Real>(
    set: &CoefficientSet<T>,
    lambda: T,
) -> Result<CoefficientSet<T>, CoeffError> {
    if !(T::zero()..=T::one()).contains(&lambda) {
        return Err(CoeffError::Lambda(lambda.to_f64().unwrap_or(f64::NAN)));
    }
    if lambda == T::one() {
        return Ok(set.clone());
    }
    if lambda == T::zero() {
        return Ok(CoefficientSet::heat(set.dim(), set.channels()));
    }
    let scale = |f: &CoefficientField<T>, offset: T| CoefficientField::Scaled {
        factor: lambda,
        offset,
        inner: Box::new(f.clone()),
    };
    let d = set.dim();
    let a = (0..d * d)
        .map(|idx| {
            let offset = if idx / d == idx % d {
                T::one() - lambda
            } else {
                T::zero()
            };
            scale(&set.a[idx], offset)
        })
        .collect();
    Ok(CoefficientSet {
        dim: set.dim,
        channels: set.channels,
        a,
        b_bar: set.b_bar.iter().map(|f| scale(f, T::zero())).collect(),
        b: set.b.iter().map(|f| scale(f, T::zero())).collect(),
        c: scale(&set.c, T::zero()),
        sigma: set.sigma.iter().map(|f| scale(f, T::zero())).collect(),
        mu: set.mu.iter().map(|f| scale(f, T::zero())).collect(),
    })
}

/// Eigenvalue range (min, max) of a symmetric matrix stored in the top-left
/// `d x d` block of a 3x3 array, `d <= 3`. Closed forms for d = 1, 2 and
/// the trigonometric solution of the characteristic cubic for d = 3.
pub fn sym_eigen_range<T: Real>(m: &[T; 9], d: usize) -> (T, T) {
    match d {
        1 => (m[0], m[0]),
        2 => {
            let half_tr = (m[0] + m[4]) * T::half();
            let det_part = ((m[0] - m[4]) * T::half()).powi(2) + m[1] * m[1];
            let r = det_part.sqrt();
            (half_tr - r, half_tr + r)
        }
        3 => {
            let (a, b, c) = (m[0], m[4], m[8]);
            let (de, f, g) = (m[1], m[5], m[2]);
            let p1 = de * de + f * f + g * g;
            if p1 == T::zero() {
                let lo = a.min(b).min(c);
                let hi = a.max(b).max(c);
                return (lo, hi);
            }
            let q = (a + b + c) / T::lit(3.0);
            let p2 = (a - q).powi(2) + (b - q).powi(2) + (c - q).powi(2) + T::two() * p1;
            let p = (p2 / T::lit(6.0)).sqrt();
            let inv_p = T::one() / p;
            // B = (M - qI) / p, r = det(B) / 2 clamped to [-1, 1]
            let bm: [T; 9] = [
                (a - q) * inv_p,
                de * inv_p,
                g * inv_p,
                de * inv_p,
                (b - q) * inv_p,
                f * inv_p,
                g * inv_p,
                f * inv_p,
                (c - q) * inv_p,
            ];
            let det_b = bm[0] * (bm[4] * bm[8] - bm[5] * bm[7])
                - bm[1] * (bm[3] * bm[8] - bm[5] * bm[6])
                + bm[2] * (bm[3] * bm[7] - bm[4] * bm[6]);
            let r = (det_b * T::half()).max(-T::one()).min(T::one());
            let phi = r.acos() / T::lit(3.0);
            let two_pi_3 = T::two() * T::PI() / T::lit(3.0);
            let hi = q + T::two() * p * phi.cos();
            let lo = q + T::two() * p * (phi + two_pi_3).cos();
            (lo, hi)
        }
        _ => unreachable!("dimension limited to 3"),
    }
}

/// Pseudo-random coefficient set that satisfies coercivity and boundedness
/// with comfortable margins: `a = base I` plus a small smooth symmetric
/// perturbation, small smooth lower-order terms, and `sigma` scaled so
/// that `alpha` stays well below `a`. Deterministic in `seed`.
pub fn random_admissible_set<T: Real>(
    grid: TorusGrid<T>,
    weights: &[T],
    seed: u64,
    delta: T,
    kbound: T,
) -> CoefficientSet<T> {
    let d = grid.dim();
    let channels = weights.len();
    let margin = kbound - delta;
    let pert = (margin / T::lit(8.0)).min(T::lit(0.3)) / T::of_usize(d);
    let alpha_cap = (margin / T::lit(8.0)).min(T::lit(0.25));
    let base = delta + T::of_usize(d) * pert + alpha_cap + margin / T::lit(8.0);
    let smooth = |s: u64, amp: T| {
        let f = Field::random_smooth(
            grid,
            seed.wrapping_mul(1315423911).wrapping_add(s),
            T::two(),
        );
        let peak = f
            .values()
            .iter()
            .fold(T::zero(), |m, &v| m.max(v.abs()))
            .max(T::lit(1e-12));
        CoefficientField::Separable {
            time: TimeProfile::Constant(T::one()),
            space: f.scaled(amp / peak),
        }
    };

    let mut a = vec![CoefficientField::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let idx = (i * d + j) as u64;
            let off = smooth(10 + idx, pert);
            if i == j {
                a[i * d + j] = CoefficientField::Scaled {
                    factor: T::one(),
                    offset: base,
                    inner: Box::new(off),
                };
            } else {
                a[i * d + j] = off.clone();
                a[j * d + i] = off;
            }
        }
    }

    // sigma amplitude chosen so the worst-case alpha stays below alpha_cap
    let wsum = weights
        .iter()
        .fold(T::zero(), |s, &w| if w.is_finite() { s + w } else { s });
    let sigma_amp = if wsum > T::zero() {
        (T::two() * alpha_cap / (wsum * T::of_usize(d * d))).sqrt()
    } else {
        T::zero()
    };
    let mut sigma = Vec::with_capacity(channels * d);
    for k in 0..channels {
        for i in 0..d {
            if weights[k].is_finite() && weights[k] > T::zero() {
                sigma.push(smooth(100 + (k * d + i) as u64, sigma_amp));
            } else {
                sigma.push(CoefficientField::zero());
            }
        }
    }

    let low_amp = (margin / T::lit(8.0)).min(T::lit(0.25));
    CoefficientSet {
        dim: d,
        channels,
        a,
        b_bar: (0..d).map(|i| smooth(200 + i as u64, low_amp)).collect(),
        b: (0..d).map(|i| smooth(300 + i as u64, low_amp)).collect(),
        c: smooth(400, low_amp),
        sigma,
        mu: (0..channels)
            .map(|k| {
                if weights[k].is_finite() {
                    smooth(500 + k as u64, low_amp)
                } else {
                    CoefficientField::zero()
                }
            })
            .collect(),
    }
}
