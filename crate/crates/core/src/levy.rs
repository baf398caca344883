//! Levy driving noise: triplets `(drift, beta, measure)`, path sampling
//! through the Levy-Ito decomposition, jump truncation, and empirical
//! moment utilities.
//!
//! A sampled path stores raw Brownian increments, an explicit jump event
//! list with exact times, and per-channel compensator bookkeeping. The
//! increment of channel `k` over bin `n` is
//!
//! ```text
//! dZ^k_n = beta_k dB^k_n + sum_{jumps in bin} z - dt * m1_k
//! ```
//!
//! where `m1_k` is the compensator rate of the channel's (possibly
//! truncated) measure. With the drift absorbed (`drift = 0`) every bin
//! increment has mean zero and the driver is a martingale with quadratic
//! variation rate `beta^2 + c_hat^2`.

use crate::quad::{adaptive_simpson, QuadError};
use crate::seeds;
use crate::Real;
use rand::Rng;
use thiserror::Error;

/// Resolution of the tabulated inverse CDF used for stable-like jump sizes.
const QUANTILE_TABLE_SIZE: usize = 1 << 12;

/// Relative tolerance used when validating cached second moments.
const CACHE_REL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LevyError {
    #[error("invalid Levy measure: {0}")]
    InvalidMeasure(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("divergent moment: {0}")]
    DivergentMoment(String),
    #[error("triplet drift must be absorbed (zero) before sampling")]
    DriftNotAbsorbed,
    #[error("unknown channel {channel} (path has {channels})")]
    UnknownChannel { channel: usize, channels: usize },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("coarsening factor {factor} does not divide {steps} steps")]
    NonNestedCoarsening { factor: usize, steps: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Uniform time grid with `steps` bins over `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T: Real> {
    horizon: T,
    steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self, LevyError> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(LevyError::Invalid("horizon must be positive".into()));
        }
        if steps == 0 {
            return Err(LevyError::Invalid("need at least one time step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> T {
        self.horizon / T::of_usize(self.steps)
    }

    pub fn node_time(&self, n: usize) -> T {
        self.horizon * T::of_usize(n) / T::of_usize(self.steps)
    }

    /// Bin index of a jump time `t` in `(0, horizon]`, bins being `(t_n, t_{n+1}]`.
    pub fn bin_of(&self, t: T) -> usize {
        let x = t / self.dt();
        let idx = (x.ceil() - T::one()).max(T::zero());
        idx.to_usize().unwrap_or(0).min(self.steps - 1)
    }
}

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

/// One atom of a discrete jump measure: jumps of size `size` arrive at
/// `rate` events per unit time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<T> {
    pub size: T,
    pub rate: T,
}

/// Jump-size laws available for the compound-Poisson measure variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpSizeDist<T> {
    Normal { mean: T, std_dev: T },
    Uniform { lo: T, hi: T },
    Laplace { scale: T },
}

impl<T: Real> JumpSizeDist<T> {
    /// Probability density at `z`.
    pub fn density(&self, z: T) -> T {
        match *self {
            JumpSizeDist::Normal { mean, std_dev } => {
                let u = (z - mean) / std_dev;
                (-u * u * T::half()).exp() / (std_dev * (T::two() * T::PI()).sqrt())
            }
            JumpSizeDist::Uniform { lo, hi } => {
                if z >= lo && z <= hi {
                    T::one() / (hi - lo)
                } else {
                    T::zero()
                }
            }
            JumpSizeDist::Laplace { scale } => (-z.abs() / scale).exp() / (T::two() * scale),
        }
    }

    /// Integration window carrying all but a negligible tail of the mass.
    fn support(&self) -> (T, T) {
        match *self {
            JumpSizeDist::Normal { mean, std_dev } => (
                mean - T::lit(14.0) * std_dev,
                mean + T::lit(14.0) * std_dev,
            ),
            JumpSizeDist::Uniform { lo, hi } => (lo, hi),
            JumpSizeDist::Laplace { scale } => (-T::lit(46.0) * scale, T::lit(46.0) * scale),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            JumpSizeDist::Normal { mean, std_dev } => {
                mean + std_dev * T::sample_standard_normal(rng)
            }
            JumpSizeDist::Uniform { lo, hi } => lo + (hi - lo) * T::sample_unit_open(rng),
            JumpSizeDist::Laplace { scale } => {
                let u = T::sample_unit_open(rng);
                let sign = if T::sample_unit_open(rng) < T::half() {
                    -T::one()
                } else {
                    T::one()
                };
                sign * (-u.ln()) * scale
            }
        }
    }

    fn validate(&self) -> Result<(), LevyError> {
        let ok = match *self {
            JumpSizeDist::Normal { std_dev, .. } => std_dev > T::zero(),
            JumpSizeDist::Uniform { lo, hi } => hi > lo,
            JumpSizeDist::Laplace { scale } => scale > T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(LevyError::InvalidMeasure("degenerate jump-size law".into()))
        }
    }
}

/// Levy measure of one driving channel.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyMeasure<T: Real> {
    /// Finitely many atoms `(z, rate)`.
    FiniteAtoms(Vec<Atom<T>>),
    /// Compound Poisson: total arrival rate times a size density.
    DensityCompoundPoisson { rate: T, sizes: JumpSizeDist<T> },
    /// Symmetric power-law density `intensity * |z|^{-1-alpha}` on
    /// `inner_cut <= |z| <= outer_cut`; `outer_cut` may be infinite, which
    /// makes the second moment diverge (heavy channel).
    TruncatedStableLike {
        alpha: T,
        intensity: T,
        inner_cut: T,
        outer_cut: T,
    },
}

impl<T: Real> LevyMeasure<T> {
    /// Empty measure (no jumps).
    pub fn none() -> Self {
        LevyMeasure::FiniteAtoms(Vec::new())
    }

    pub fn atoms(pairs: &[(T, T)]) -> Self {
        LevyMeasure::FiniteAtoms(
            pairs
                .iter()
                .map(|&(size, rate)| Atom { size, rate })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<(), LevyError> {
        match self {
            LevyMeasure::FiniteAtoms(atoms) => {
                for a in atoms {
                    if a.size == T::zero() || !a.size.is_finite() {
                        return Err(LevyError::InvalidMeasure(
                            "atom sizes must be finite and nonzero".into(),
                        ));
                    }
                    if a.rate < T::zero() || !a.rate.is_finite() {
                        return Err(LevyError::InvalidMeasure(
                            "atom rates must be finite and nonnegative".into(),
                        ));
                    }
                }
                Ok(())
            }
            LevyMeasure::DensityCompoundPoisson { rate, sizes } => {
                if *rate < T::zero() || !rate.is_finite() {
                    return Err(LevyError::InvalidMeasure("rate must be nonnegative".into()));
                }
                sizes.validate()?;
                let (lo, hi) = sizes.support();
                let mass = adaptive_simpson(|z| sizes.density(z), lo, hi, T::lit(1e-8))?;
                if (mass - T::one()).abs() > T::lit(1e-6) {
                    return Err(LevyError::InvalidMeasure(format!(
                        "size density integrates to {mass}, expected 1"
                    )));
                }
                Ok(())
            }
            LevyMeasure::TruncatedStableLike {
                alpha,
                intensity,
                inner_cut,
                outer_cut,
            } => {
                if !(*alpha > T::zero() && *alpha < T::two()) {
                    return Err(LevyError::InvalidMeasure(
                        "stability index must lie in (0, 2)".into(),
                    ));
                }
                if !(*intensity > T::zero()) || !intensity.is_finite() {
                    return Err(LevyError::InvalidMeasure(
                        "intensity must be positive".into(),
                    ));
                }
                if !(*inner_cut > T::zero()) || !inner_cut.is_finite() {
                    return Err(LevyError::InvalidMeasure(
                        "inner cutoff must be positive and finite".into(),
                    ));
                }
                if !(*outer_cut > *inner_cut) {
                    return Err(LevyError::InvalidMeasure(
                        "outer cutoff must exceed the inner cutoff".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Total jump arrival rate `nu(R \ {0})`. Finite for every variant
    /// because the stable-like density is cut off away from the origin.
    pub fn total_rate(&self) -> T {
        match self {
            LevyMeasure::FiniteAtoms(atoms) => atoms.iter().fold(T::zero(), |s, a| s + a.rate),
            LevyMeasure::DensityCompoundPoisson { rate, .. } => *rate,
            LevyMeasure::TruncatedStableLike {
                alpha,
                intensity,
                inner_cut,
                outer_cut,
            } => {
                let r_term = inner_cut.powf(-*alpha);
                let out_term = if outer_cut.is_finite() {
                    outer_cut.powf(-*alpha)
                } else {
                    T::zero()
                };
                T::two() * *intensity * (r_term - out_term) / *alpha
            }
        }
    }

    /// `int_{|z| <= bound} z^2 nu(dz)`; `bound` may be infinite. Returns
    /// `+inf` for a stable-like measure with unbounded support when asked
    /// for the full moment.
    pub fn second_moment_sq(&self, bound: T) -> Result<T, LevyError> {
        match self {
            LevyMeasure::FiniteAtoms(atoms) => Ok(atoms
                .iter()
                .filter(|a| a.size.abs() <= bound)
                .fold(T::zero(), |s, a| s + a.rate * a.size * a.size)),
            LevyMeasure::DensityCompoundPoisson { rate, sizes } => {
                if *rate == T::zero() {
                    return Ok(T::zero());
                }
                let (lo, hi) = sizes.support();
                let lo = lo.max(-bound);
                let hi = hi.min(bound);
                if hi <= lo {
                    return Ok(T::zero());
                }
                let m2 = adaptive_simpson(|z| z * z * sizes.density(z), lo, hi, T::lit(1e-10))?;
                Ok(*rate * m2)
            }
            LevyMeasure::TruncatedStableLike {
                alpha,
                intensity,
                inner_cut,
                outer_cut,
            } => {
                let hi = outer_cut.min(bound);
                if !hi.is_finite() {
                    return Ok(T::infinity());
                }
                if hi <= *inner_cut {
                    return Ok(T::zero());
                }
                let p = T::two() - *alpha;
                Ok(T::two() * *intensity * (hi.powf(p) - inner_cut.powf(p)) / p)
            }
        }
    }

    /// `int_{|z| <= bound} z nu(dz)` (signed). Exactly zero for the
    /// symmetric stable-like variant.
    pub fn first_moment(&self, bound: T) -> Result<T, LevyError> {
        match self {
            LevyMeasure::FiniteAtoms(atoms) => Ok(atoms
                .iter()
                .filter(|a| a.size.abs() <= bound)
                .fold(T::zero(), |s, a| s + a.rate * a.size)),
            LevyMeasure::DensityCompoundPoisson { rate, sizes } => {
                if *rate == T::zero() {
                    return Ok(T::zero());
                }
                let (lo, hi) = sizes.support();
                let lo = lo.max(-bound);
                let hi = hi.min(bound);
                if hi <= lo {
                    return Ok(T::zero());
                }
                let m1 = adaptive_simpson(|z| z * sizes.density(z), lo, hi, T::lit(1e-10))?;
                Ok(*rate * m1)
            }
            LevyMeasure::TruncatedStableLike { .. } => Ok(T::zero()),
        }
    }

    /// `int_{|z| > 1} z nu(dz)`, the drift absorbed from the large jumps.
    /// Errors when the absolute moment diverges.
    pub fn large_jump_mean(&self) -> Result<T, LevyError> {
        match self {
            LevyMeasure::FiniteAtoms(atoms) => Ok(atoms
                .iter()
                .filter(|a| a.size.abs() > T::one())
                .fold(T::zero(), |s, a| s + a.rate * a.size)),
            LevyMeasure::DensityCompoundPoisson { rate, sizes } => {
                if *rate == T::zero() {
                    return Ok(T::zero());
                }
                let (lo, hi) = sizes.support();
                let mut acc = T::zero();
                if lo < -T::one() {
                    acc += adaptive_simpson(
                        |z| z * sizes.density(z),
                        lo,
                        (-T::one()).min(hi),
                        T::lit(1e-10),
                    )?;
                }
                if hi > T::one() {
                    acc += adaptive_simpson(
                        |z| z * sizes.density(z),
                        T::one().max(lo),
                        hi,
                        T::lit(1e-10),
                    )?;
                }
                Ok(*rate * acc)
            }
            LevyMeasure::TruncatedStableLike {
                alpha, outer_cut, ..
            } => {
                if !outer_cut.is_finite() && *alpha <= T::one() {
                    return Err(LevyError::DivergentMoment(
                        "stable-like tail has no absolute first moment".into(),
                    ));
                }
                Ok(T::zero())
            }
        }
    }
}

/// Square root of the second moment of a Levy measure, `c_hat` in the
/// channel weight `beta^2 + c_hat^2`. Returns the `+inf` sentinel when the
/// integral diverges (unbounded stable-like tail).
pub fn second_moment<T: Real>(measure: &LevyMeasure<T>) -> Result<T, LevyError> {
    measure.validate()?;
    Ok(measure.second_moment_sq(T::infinity())?.sqrt())
}

// ---------------------------------------------------------------------------
// Triplets and families
// ---------------------------------------------------------------------------

/// One driving process: drift (zero once absorbed), Gaussian coefficient,
/// jump measure, and the cached second-moment root `c_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet<T: Real> {
    drift: T,
    beta: T,
    measure: LevyMeasure<T>,
    /// Cached `int z^2 nu(dz)`; the square is primary so channel weights
    /// involve no sqrt round trip.
    c_hat_sq: T,
}

impl<T: Real> LevyTriplet<T> {
    pub fn new(drift: T, beta: T, measure: LevyMeasure<T>) -> Result<Self, LevyError> {
        if beta < T::zero() || !beta.is_finite() {
            return Err(LevyError::Invalid("beta must be finite and >= 0".into()));
        }
        measure.validate()?;
        let c_hat_sq = measure.second_moment_sq(T::infinity())?;
        Ok(Self {
            drift,
            beta,
            measure,
            c_hat_sq,
        })
    }

    /// Martingale driver: drift already absorbed.
    pub fn martingale(beta: T, measure: LevyMeasure<T>) -> Result<Self, LevyError> {
        Self::new(T::zero(), beta, measure)
    }

    /// Pure Brownian channel.
    pub fn brownian(beta: T) -> Self {
        Self::martingale(beta, LevyMeasure::none()).expect("empty measure is valid")
    }

    pub fn drift(&self) -> T {
        self.drift
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn measure(&self) -> &LevyMeasure<T> {
        &self.measure
    }

    pub fn c_hat(&self) -> T {
        self.c_hat_sq.sqrt()
    }

    pub fn c_hat_sq(&self) -> T {
        self.c_hat_sq
    }

    /// Channel weight `beta^2 + c_hat^2` (infinite for heavy channels).
    pub fn weight(&self) -> T {
        self.beta * self.beta + self.c_hat_sq
    }

    /// Recheck the cached second moment against the measure.
    pub fn validate(&self) -> Result<(), LevyError> {
        let fresh = self.measure.second_moment_sq(T::infinity())?;
        if fresh.is_infinite() && self.c_hat_sq.is_infinite() {
            return Ok(());
        }
        let tol = T::lit(CACHE_REL_TOL) * fresh.max(T::one());
        if (fresh - self.c_hat_sq).abs() > tol {
            return Err(LevyError::Integrity(format!(
                "cached c_hat^2 {} vs recomputed {}",
                self.c_hat_sq, fresh
            )));
        }
        Ok(())
    }
}

/// Absorb the deterministic large-jump mean into the drift and return the
/// martingale driver together with the removed drift
/// `drift_out = drift + int_{|z|>1} z nu(dz)`, which callers fold into the
/// deterministic forcing.
pub fn absorb_large_jump_drift<T: Real>(
    raw: &LevyTriplet<T>,
) -> Result<(LevyTriplet<T>, T), LevyError> {
    if raw.c_hat_sq.is_infinite() {
        return Err(LevyError::DivergentMoment(
            "cannot martingalize a channel with infinite second moment".into(),
        ));
    }
    let drift_out = raw.drift + raw.measure.large_jump_mean()?;
    Ok((
        LevyTriplet {
            drift: T::zero(),
            beta: raw.beta,
            measure: raw.measure.clone(),
            c_hat_sq: raw.c_hat_sq,
        },
        drift_out,
    ))
}

/// Finite ordered family of driving channels with cached weights
/// `w_k = beta_k^2 + c_hat_k^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFamily<T: Real> {
    triplets: Vec<LevyTriplet<T>>,
    weights: Vec<T>,
}

impl<T: Real> NoiseFamily<T> {
    pub fn new(triplets: Vec<LevyTriplet<T>>) -> Self {
        let weights = triplets.iter().map(|t| t.weight()).collect();
        Self { triplets, weights }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn triplets(&self) -> &[LevyTriplet<T>] {
        &self.triplets
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Integrity check: stored weights must be recomputable from the triplets.
    pub fn validate(&self) -> Result<(), LevyError> {
        if self.weights.len() != self.triplets.len() {
            return Err(LevyError::Integrity("weight count mismatch".into()));
        }
        for (k, (t, &w)) in self.triplets.iter().zip(&self.weights).enumerate() {
            t.validate()?;
            let fresh = t.weight();
            if fresh.is_infinite() && w.is_infinite() {
                continue;
            }
            if (fresh - w).abs() > T::lit(CACHE_REL_TOL) * fresh.max(T::one()) {
                return Err(LevyError::Integrity(format!(
                    "weight of channel {k} is {w}, recomputed {fresh}"
                )));
            }
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn corrupt_weight_for_test(&mut self, k: usize, w: T) {
        self.weights[k] = w;
    }
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

/// One jump: exact time, signed size, channel index (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent<T> {
    pub time: T,
    pub size: T,
    pub channel: usize,
}

/// Per-channel data of a sampled realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPath<T: Real> {
    beta: T,
    measure: LevyMeasure<T>,
    /// Raw Brownian increments with variance `dt` (empty when beta = 0).
    brownian: Vec<T>,
    /// Compensator rate of the retained measure, `int z nu(dz)` up to the
    /// truncation level.
    compensator_rate: T,
    trunc_level: T,
    /// `c_hat` of the retained (truncated) measure.
    c_hat_trunc: T,
}

impl<T: Real> ChannelPath<T> {
    /// Hand-built channel for fixtures and tests; the compensator is taken
    /// as given rather than recomputed from the measure.
    pub fn manual(
        beta: T,
        measure: LevyMeasure<T>,
        brownian: Vec<T>,
        compensator_rate: T,
    ) -> Result<Self, LevyError> {
        let c_hat_trunc = second_moment(&measure)?;
        Ok(Self {
            beta,
            measure,
            brownian,
            compensator_rate,
            trunc_level: T::infinity(),
            c_hat_trunc,
        })
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn measure(&self) -> &LevyMeasure<T> {
        &self.measure
    }

    pub fn compensator_rate(&self) -> T {
        self.compensator_rate
    }

    pub fn trunc_level(&self) -> T {
        self.trunc_level
    }

    /// `c_hat_{k,n}` of the retained measure after truncation.
    pub fn c_hat_trunc(&self) -> T {
        self.c_hat_trunc
    }
}

/// One sampled noise realization for a whole family: shared time grid,
/// per-channel Brownian increments, merged jump list, compensators.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRealization<T: Real> {
    grid: TimeGrid<T>,
    channels: Vec<ChannelPath<T>>,
    /// Sorted by (time, channel, insertion order).
    jumps: Vec<JumpEvent<T>>,
    /// Exact-time collisions across distinct channels (flagged, not
    /// rejected; they have probability zero in the continuum).
    simultaneous: usize,
}

impl<T: Real> PathRealization<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, k: usize) -> Result<&ChannelPath<T>, LevyError> {
        self.channels.get(k).ok_or(LevyError::UnknownChannel {
            channel: k,
            channels: self.channels.len(),
        })
    }

    pub fn jumps(&self) -> &[JumpEvent<T>] {
        &self.jumps
    }

    pub fn simultaneous_jumps(&self) -> usize {
        self.simultaneous
    }

    /// Assemble a realization from hand-built parts (fixtures, tests).
    pub fn from_channels(
        grid: TimeGrid<T>,
        channels: Vec<ChannelPath<T>>,
        mut jumps: Vec<JumpEvent<T>>,
    ) -> Result<Self, LevyError> {
        for j in &jumps {
            if j.channel >= channels.len() {
                return Err(LevyError::UnknownChannel {
                    channel: j.channel,
                    channels: channels.len(),
                });
            }
            if !(j.time > T::zero() && j.time <= grid.horizon()) {
                return Err(LevyError::Invalid(format!(
                    "jump time {} outside (0, horizon]",
                    j.time
                )));
            }
        }
        jumps.sort_by(|a, b| {
            a.time
                .partial_cmp(&b.time)
                .unwrap()
                .then(a.channel.cmp(&b.channel))
        });
        Ok(Self {
            grid,
            channels,
            jumps,
            simultaneous: 0,
        })
    }

    /// Per-bin increments of channel `k`. Their sum is `Z^k_T`.
    pub fn increments(&self, k: usize) -> Result<Vec<T>, LevyError> {
        let ch = self.channel(k)?;
        let dt = self.grid.dt();
        let mut out = vec![-ch.compensator_rate * dt; self.grid.steps()];
        if !ch.brownian.is_empty() {
            for (n, slot) in out.iter_mut().enumerate() {
                *slot += ch.beta * ch.brownian[n];
            }
        }
        for j in &self.jumps {
            if j.channel == k {
                out[self.grid.bin_of(j.time)] += j.size;
            }
        }
        Ok(out)
    }

    /// Empirical quadratic variation `sum_n (dZ^k_n)^2`.
    pub fn empirical_quadratic_variation(&self, k: usize) -> Result<T, LevyError> {
        Ok(self
            .increments(k)?
            .iter()
            .fold(T::zero(), |s, &dz| s + dz * dz))
    }

    /// Remove every jump with `|z| > level` (all channels) and recompute
    /// the compensator and second moment of the retained measure.
    /// `level = +inf` returns the identical path.
    pub fn truncate_jumps(&self, level: T) -> Result<Self, LevyError> {
        self.truncate_jumps_on(level, |_| true)
    }

    /// Truncation restricted to channels selected by `affected`.
    pub fn truncate_jumps_on(
        &self,
        level: T,
        affected: impl Fn(usize) -> bool,
    ) -> Result<Self, LevyError> {
        assert!(level > T::zero(), "truncation level must be positive");
        if level.is_infinite() {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        out.jumps
            .retain(|j| !affected(j.channel) || j.size.abs() <= level);
        for (k, ch) in out.channels.iter_mut().enumerate() {
            if !affected(k) {
                continue;
            }
            let new_level = ch.trunc_level.min(level);
            ch.trunc_level = new_level;
            ch.c_hat_trunc = ch.measure.second_moment_sq(new_level)?.sqrt();
            ch.compensator_rate = ch.measure.first_moment(new_level)?;
        }
        Ok(out)
    }

    /// First time a channel `k < upto` jumps with `|z| > level`; `+inf`
    /// when none does. `upto` is the count of leading channels inspected
    /// (`N_0` in the localized solve).
    pub fn first_large_jump_time(&self, level: T, upto: usize) -> T {
        for j in &self.jumps {
            if j.channel < upto && j.size.abs() > level {
                return j.time;
            }
        }
        T::infinity()
    }

    /// Merge `factor` consecutive bins: Brownian increments add, jumps and
    /// compensator rates are untouched. Coarse increments are exactly the
    /// sums of the fine ones, as nested-refinement studies require.
    pub fn coarsen(&self, factor: usize) -> Result<Self, LevyError> {
        if factor == 0 || self.grid.steps() % factor != 0 {
            return Err(LevyError::NonNestedCoarsening {
                factor,
                steps: self.grid.steps(),
            });
        }
        let grid = TimeGrid::new(self.grid.horizon(), self.grid.steps() / factor)?;
        let channels = self
            .channels
            .iter()
            .map(|ch| ChannelPath {
                beta: ch.beta,
                measure: ch.measure.clone(),
                brownian: if ch.brownian.is_empty() {
                    Vec::new()
                } else {
                    ch.brownian
                        .chunks_exact(factor)
                        .map(|chunk| chunk.iter().fold(T::zero(), |s, &x| s + x))
                        .collect()
                },
                compensator_rate: ch.compensator_rate,
                trunc_level: ch.trunc_level,
                c_hat_trunc: ch.c_hat_trunc,
            })
            .collect();
        Ok(Self {
            grid,
            channels,
            jumps: self.jumps.clone(),
            simultaneous: self.simultaneous,
        })
    }

    /// CSV dump: `channel,bin_index,brownian_increment,jump_sum,compensator`.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "# levypde path v1")?;
        writeln!(
            out,
            "channel,bin_index,brownian_increment,jump_sum,compensator"
        )?;
        let dt = self.grid.dt();
        for (k, ch) in self.channels.iter().enumerate() {
            for n in 0..self.grid.steps() {
                let b = if ch.brownian.is_empty() {
                    T::zero()
                } else {
                    ch.beta * ch.brownian[n]
                };
                let jump_sum = self
                    .jumps
                    .iter()
                    .filter(|j| j.channel == k && self.grid.bin_of(j.time) == n)
                    .fold(T::zero(), |s, j| s + j.size);
                writeln!(
                    out,
                    "{k},{n},{b:e},{jump_sum:e},{:e}",
                    ch.compensator_rate * dt
                )?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Sample one channel. The triplet must be the martingale driver
/// (drift absorbed); the result is a deterministic function of
/// `(triplet, grid, seed)`.
///
/// Draw order within the channel stream: Brownian increments (skipped when
/// `beta = 0`), Poisson jump count, jump times, jump sizes. The ChaCha
/// stream has period 2^128 blocks, unreachable at any realistic grid size.
pub fn sample_path<T: Real>(
    triplet: &LevyTriplet<T>,
    grid: TimeGrid<T>,
    seed: u64,
) -> Result<PathRealization<T>, LevyError> {
    sample_family(&NoiseFamily::new(vec![triplet.clone()]), grid, seed)
}

/// Sample a whole family; channel `k` draws from the derived stream
/// `seeds::derive(seed, k)`, so channels are independent and a family
/// extends without disturbing existing channels.
pub fn sample_family<T: Real>(
    family: &NoiseFamily<T>,
    grid: TimeGrid<T>,
    seed: u64,
) -> Result<PathRealization<T>, LevyError> {
    let mut channels = Vec::with_capacity(family.len());
    let mut jumps: Vec<JumpEvent<T>> = Vec::new();
    for (k, triplet) in family.triplets().iter().enumerate() {
        if triplet.drift() != T::zero() {
            return Err(LevyError::DriftNotAbsorbed);
        }
        triplet.measure().validate()?;
        let mut rng = seeds::stream_rng(seed, k as u64);
        let dt = grid.dt();
        let sqrt_dt = dt.sqrt();
        let brownian: Vec<T> = if triplet.beta() == T::zero() {
            Vec::new()
        } else {
            (0..grid.steps())
                .map(|_| sqrt_dt * T::sample_standard_normal(&mut rng))
                .collect()
        };

        let count = sample_poisson(&mut rng, triplet.measure().total_rate() * grid.horizon());
        let mut times: Vec<T> = (0..count)
            .map(|_| grid.horizon() * T::sample_unit_open(&mut rng))
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let sampler = JumpSizeSampler::new(triplet.measure());
        for t in times {
            jumps.push(JumpEvent {
                time: t,
                size: sampler.sample(&mut rng),
                channel: k,
            });
        }

        channels.push(ChannelPath {
            beta: triplet.beta(),
            measure: triplet.measure().clone(),
            brownian,
            compensator_rate: triplet.measure().first_moment(T::infinity())?,
            trunc_level: T::infinity(),
            c_hat_trunc: triplet.c_hat(),
        });
    }
    jumps.sort_by(|a, b| {
        a.time
            .partial_cmp(&b.time)
            .unwrap()
            .then(a.channel.cmp(&b.channel))
    });
    let simultaneous = jumps
        .windows(2)
        .filter(|w| w[0].time == w[1].time && w[0].channel != w[1].channel)
        .count();
    if simultaneous > 0 {
        log::warn!("{simultaneous} simultaneous cross-channel jump(s) in sampled path");
    }
    Ok(PathRealization {
        grid,
        channels,
        jumps,
        simultaneous,
    })
}

/// Poisson count by Knuth's product-of-uniforms method; exact for the
/// moderate intensities used here.
fn sample_poisson<T: Real, R: Rng + ?Sized>(rng: &mut R, lambda: T) -> usize {
    if lambda <= T::zero() {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0usize;
    let mut p = T::one();
    loop {
        p = p * T::sample_unit_open(rng);
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

/// Jump-size sampler per measure variant. Stable-like sizes come from the
/// inverse CDF tabulated at 2^12 quantiles with linear interpolation; a
/// draw landing in the last cell of an unbounded tail falls back to the
/// closed-form inverse so the table never holds an infinite node.
enum JumpSizeSampler<T: Real> {
    Atoms { cumulative: Vec<T>, sizes: Vec<T> },
    Density(JumpSizeDist<T>),
    StableTable(StableSampler<T>),
}

struct StableSampler<T> {
    quantiles: Vec<T>,
    alpha: T,
    inner_cut: T,
    outer_cut: T,
}

impl<T: Real> JumpSizeSampler<T> {
    fn new(measure: &LevyMeasure<T>) -> Self {
        match measure {
            LevyMeasure::FiniteAtoms(atoms) => {
                let total = measure.total_rate();
                if total == T::zero() {
                    return JumpSizeSampler::Atoms {
                        cumulative: Vec::new(),
                        sizes: Vec::new(),
                    };
                }
                let mut acc = T::zero();
                let mut cumulative = Vec::with_capacity(atoms.len());
                let mut sizes = Vec::with_capacity(atoms.len());
                for a in atoms {
                    acc += a.rate / total;
                    cumulative.push(acc);
                    sizes.push(a.size);
                }
                JumpSizeSampler::Atoms { cumulative, sizes }
            }
            LevyMeasure::DensityCompoundPoisson { sizes, .. } => JumpSizeSampler::Density(*sizes),
            LevyMeasure::TruncatedStableLike {
                alpha,
                inner_cut,
                outer_cut,
                ..
            } => {
                let n = QUANTILE_TABLE_SIZE;
                let quantiles = (0..=n)
                    .map(|i| {
                        let u = T::of_usize(i) / T::of_usize(n);
                        stable_quantile(u, *alpha, *inner_cut, *outer_cut)
                    })
                    .collect();
                JumpSizeSampler::StableTable(StableSampler {
                    quantiles,
                    alpha: *alpha,
                    inner_cut: *inner_cut,
                    outer_cut: *outer_cut,
                })
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self {
            JumpSizeSampler::Atoms { cumulative, sizes } => {
                let u = T::sample_unit_open(rng);
                let idx = cumulative
                    .iter()
                    .position(|&c| u <= c)
                    .unwrap_or(sizes.len().saturating_sub(1));
                sizes[idx]
            }
            JumpSizeSampler::Density(dist) => dist.sample(rng),
            JumpSizeSampler::StableTable(s) => {
                let u = T::sample_unit_open(rng);
                let n = T::of_usize(QUANTILE_TABLE_SIZE);
                let scaled = u * n;
                let cell = scaled
                    .floor()
                    .to_usize()
                    .unwrap_or(0)
                    .min(QUANTILE_TABLE_SIZE - 1);
                let magnitude = if cell == QUANTILE_TABLE_SIZE - 1
                    && !s.quantiles[QUANTILE_TABLE_SIZE].is_finite()
                {
                    stable_quantile(u, s.alpha, s.inner_cut, s.outer_cut)
                } else {
                    let frac = scaled - T::of_usize(cell);
                    let lo = s.quantiles[cell];
                    let hi = s.quantiles[cell + 1];
                    lo + (hi - lo) * frac
                };
                let sign = if T::sample_unit_open(rng) < T::half() {
                    -T::one()
                } else {
                    T::one()
                };
                sign * magnitude
            }
        }
    }
}

/// Closed-form quantile of the stable-like magnitude CDF
/// `F(r) = (r0^-a - r^-a) / (r0^-a - R^-a)` on `[r0, R]`.
fn stable_quantile<T: Real>(u: T, alpha: T, inner: T, outer: T) -> T {
    let lo_pow = inner.powf(-alpha);
    let hi_pow = if outer.is_finite() {
        outer.powf(-alpha)
    } else {
        T::zero()
    };
    let target = lo_pow - u * (lo_pow - hi_pow);
    if target <= T::zero() {
        return outer;
    }
    target.powf(-T::one() / alpha)
}
