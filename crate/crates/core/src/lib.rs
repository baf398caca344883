//! Numerical laboratory for parabolic SPDEs driven by Levy jump-diffusions.
//!
//! The equation solved is the divergence-form stochastic PDE
//!
//! ```text
//! du = ( d/dx_i (a^{ij} u_{x^j} + bbar^i u) + b^i u_{x^i} + c u + f ) dt
//!      + ( sigma^{ik} u_{x^i} + mu^k u + g^k ) dZ^k_t
//! ```
//!
//! on a periodic torus, driven by a finite family of independent
//! one-dimensional Levy processes `Z^k` sampled through their Levy-Ito
//! decomposition (Brownian part plus compensated jumps). The crate provides
//!
//! * [`levy`] — Levy triplets/measures, path sampling, truncation;
//! * [`field`] — torus grids, FFT, Sobolev norms of any (fractional) order;
//! * [`coeff`] — evaluable coefficient sets and the coercivity /
//!   boundedness / partial-moment validators;
//! * [`solver`] — the semi-implicit jump-aware theta scheme, a spectral
//!   mild-solution oracle, Picard iteration for semilinear forcings,
//!   localized solves, and the continuity-method homotopy iteration;
//! * [`verify`] — Monte Carlo norm estimators and empirical checkers for
//!   the quadratic-variation law, Levy-system identity, a priori energy
//!   estimate, sup estimate, T-independence, and convergence order.
//!
//! Everything is generic over the scalar type through [`Real`]; the
//! `*64` aliases below pin `f64`, which is what the CLI and the test
//! suites use.

pub mod coeff;
pub mod field;
pub mod levy;
pub mod quad;
pub mod scalar;
pub mod seeds;
pub mod solver;
pub mod stats;
pub mod verify;

pub use scalar::Real;

pub type TorusGrid64 = field::TorusGrid<f64>;
pub type Field64 = field::Field<f64>;
pub type SpectralField64 = field::SpectralField<f64>;
pub type LevyMeasure64 = levy::LevyMeasure<f64>;
pub type LevyTriplet64 = levy::LevyTriplet<f64>;
pub type NoiseFamily64 = levy::NoiseFamily<f64>;
pub type PathRealization64 = levy::PathRealization<f64>;
pub type TimeGrid64 = levy::TimeGrid<f64>;
pub type CoefficientSet64 = coeff::CoefficientSet<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
pub type SolutionPath64 = solver::SolutionPath<f64>;
