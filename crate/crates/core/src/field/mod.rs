//! Scalar fields on a periodic torus `[0, L)^d`, their Fourier
//! representation, and Sobolev norms of arbitrary (fractional, negative)
//! order realized as `(1 + |xi|^2)^{n/2}` spectral multipliers.
//!
//! The transform pair is unitary with respect to the quadrature weight
//! `(L/M)^d`, so Parseval holds at machine precision: the coefficient at
//! frequency `xi` is the amplitude against the orthonormal mode
//! `e^{i xi.x} / sqrt(V)`, `V = L^d`.

mod fft;
pub mod io;
mod ops;

use crate::Real;
use num_complex::Complex;
use thiserror::Error;

pub use ops::h_minus1_decompose;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("Sobolev order {0} outside the supported range [-4, 4]")]
    OrderOutOfRange(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field file: {0}")]
    Format(String),
}

/// Uniform periodic grid: `points` nodes per dimension on a torus of side
/// `side`. `points` must be a power of two; `dim` is 1, 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid<T: Real> {
    dim: usize,
    side: T,
    points: usize,
}

impl<T: Real> TorusGrid<T> {
    pub fn new(dim: usize, side: T, points: usize) -> Result<Self, FieldError> {
        if !(1..=3).contains(&dim) {
            return Err(FieldError::InvalidGrid(format!(
                "dimension {dim} not in {{1,2,3}}"
            )));
        }
        if side <= T::zero() || !side.is_finite() {
            return Err(FieldError::InvalidGrid("side length must be positive".into()));
        }
        if points < 2 || !points.is_power_of_two() {
            return Err(FieldError::InvalidGrid(format!(
                "points per dimension must be a power of two >= 2, got {points}"
            )));
        }
        Ok(Self { dim, side, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> T {
        self.side
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of grid cells, `M^d`.
    pub fn num_cells(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn volume(&self) -> T {
        self.side.powi(self.dim as i32)
    }

    /// Quadrature weight of one cell, `(L/M)^d`.
    pub fn cell_volume(&self) -> T {
        (self.side / T::of_usize(self.points)).powi(self.dim as i32)
    }

    /// Signed integer frequency for axis index `j`: `j` below the Nyquist
    /// fold, `j - M` above it.
    pub fn axis_wavenumber(&self, j: usize) -> i64 {
        if j < self.points / 2 {
            j as i64
        } else {
            j as i64 - self.points as i64
        }
    }

    /// Frequency component `xi = 2 pi k / L` for axis index `j`.
    pub fn axis_freq(&self, j: usize) -> T {
        T::lit(2.0) * T::PI() * T::from_i64(self.axis_wavenumber(j)).unwrap() / self.side
    }

    /// Differentiation symbol for axis index `j`: equal to [`Self::axis_freq`]
    /// except at the unpaired Nyquist mode `j = M/2`, which differentiation
    /// annihilates (its sine image vanishes on the grid). All differential
    /// operators share this symbol so identities like `div(grad u) = Lap u`
    /// hold exactly on the grid.
    pub fn axis_diff_freq(&self, j: usize) -> T {
        if j == self.points / 2 {
            T::zero()
        } else {
            self.axis_freq(j)
        }
    }

    /// Per-axis differentiation-symbol components of the flattened index.
    pub fn diff_freqs(&self, flat: usize) -> [T; 3] {
        let mut out = [T::zero(); 3];
        let mut rest = flat;
        for axis in 0..self.dim {
            out[axis] = self.axis_diff_freq(rest % self.points);
            rest /= self.points;
        }
        out
    }

    /// `|xi|^2` of the differentiation symbol (the discrete heat symbol).
    pub fn diff_freq_sq(&self, flat: usize) -> T {
        let f = self.diff_freqs(flat);
        f[0] * f[0] + f[1] * f[1] + f[2] * f[2]
    }

    /// Per-axis frequency components of the flattened spectral index.
    pub fn freqs(&self, flat: usize) -> [T; 3] {
        let mut out = [T::zero(); 3];
        let mut rest = flat;
        for axis in 0..self.dim {
            out[axis] = self.axis_freq(rest % self.points);
            rest /= self.points;
        }
        out
    }

    /// `|xi|^2` of the flattened spectral index.
    pub fn freq_sq(&self, flat: usize) -> T {
        let f = self.freqs(flat);
        f[0] * f[0] + f[1] * f[1] + f[2] * f[2]
    }

    /// Largest `|xi|^2` on the grid (Nyquist corner).
    pub fn max_freq_sq(&self) -> T {
        let nyq = T::lit(2.0) * T::PI() * T::of_usize(self.points / 2) / self.side;
        nyq * nyq * T::of_usize(self.dim)
    }

    /// Coordinates of the grid point with flattened index `flat`.
    pub fn coords(&self, flat: usize) -> [T; 3] {
        let mut out = [T::zero(); 3];
        let mut rest = flat;
        let h = self.side / T::of_usize(self.points);
        for axis in 0..self.dim {
            out[axis] = T::of_usize(rest % self.points) * h;
            rest /= self.points;
        }
        out
    }

    /// Whether any axis of the flattened spectral index sits on the
    /// unpaired Nyquist line `M/2`.
    pub fn has_nyquist(&self, flat: usize) -> bool {
        let mut rest = flat;
        for _ in 0..self.dim {
            if rest % self.points == self.points / 2 {
                return true;
            }
            rest /= self.points;
        }
        false
    }

    /// Integer index coordinates of the grid point `flat`.
    pub fn index_coords(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rest = flat;
        for axis in 0..self.dim {
            out[axis] = rest % self.points;
            rest /= self.points;
        }
        out
    }
}

/// Real-valued scalar field in point values (axis 0 fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T: Real> {
    grid: TorusGrid<T>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zero(grid: TorusGrid<T>) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.num_cells()],
        }
    }

    pub fn constant(grid: TorusGrid<T>, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.num_cells()],
        }
    }

    pub fn from_values(grid: TorusGrid<T>, values: Vec<T>) -> Result<Self, FieldError> {
        if values.len() != grid.num_cells() {
            return Err(FieldError::GridMismatch(format!(
                "expected {} values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TorusGrid<T>, f: impl Fn(&[T]) -> T) -> Self {
        let values = (0..grid.num_cells())
            .map(|i| {
                let c = grid.coords(i);
                f(&c[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    /// Smooth pseudo-random field: white noise shaped by the multiplier
    /// `(1+|xi|^2)^{-decay/2}`. Deterministic in (grid, seed).
    pub fn random_smooth(grid: TorusGrid<T>, seed: u64, decay: T) -> Self {
        let mut rng = crate::seeds::stream_rng(seed, 0xF1E1D);
        let white: Vec<T> = (0..grid.num_cells())
            .map(|_| T::sample_standard_normal(&mut rng))
            .collect();
        let f = Self {
            grid,
            values: white,
        };
        let mut hat = f.to_spectral();
        for i in 0..hat.coeffs.len() {
            // shape the spectrum and drop the unpaired Nyquist line so the
            // field lives in the resolved (differentiable) subspace
            let w = if grid.has_nyquist(i) {
                T::zero()
            } else {
                (T::one() + grid.freq_sq(i)).powf(-decay * T::half())
            };
            hat.coeffs[i] = hat.coeffs[i] * w;
        }
        hat.to_real()
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&a| a * factor).collect(),
        }
    }

    /// Pointwise product (coefficient times field).
    pub fn mul_pointwise(&self, other: &Self) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a * b)
                .collect(),
        }
    }

    /// `self += factor * other`, in place.
    pub fn axpy(&mut self, factor: T, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }
}

/// Field in Fourier coefficients against the orthonormal torus modes.
#[derive(Debug, Clone)]
pub struct SpectralField<T: Real> {
    grid: TorusGrid<T>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> SpectralField<T> {
    pub fn zero(grid: TorusGrid<T>) -> Self {
        Self {
            grid,
            coeffs: vec![Complex::new(T::zero(), T::zero()); grid.num_cells()],
        }
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    /// Largest deviation from Hermitian symmetry `c(-xi) = conj(c(xi))`.
    /// Zero (up to rounding) whenever the field came from real values.
    pub fn hermitian_defect(&self) -> T {
        let m = self.grid.points();
        let d = self.grid.dim();
        let mut worst = T::zero();
        for flat in 0..self.coeffs.len() {
            let mut rest = flat;
            let mut mirrored = 0usize;
            let mut stride = 1usize;
            for _ in 0..d {
                let j = rest % m;
                rest /= m;
                mirrored += ((m - j) % m) * stride;
                stride *= m;
            }
            let defect = (self.coeffs[flat] - self.coeffs[mirrored].conj()).norm();
            worst = worst.max(defect);
        }
        worst
    }
}

impl<T: Real> Field<T> {
    /// Forward transform to orthonormal-mode coefficients.
    pub fn to_spectral(&self) -> SpectralField<T> {
        let mut coeffs: Vec<Complex<T>> = self
            .values
            .iter()
            .map(|&v| Complex::new(v, T::zero()))
            .collect();
        fft::fft_all_axes(&mut coeffs, self.grid.points(), self.grid.dim(), true);
        let scale = self.grid.volume().sqrt() / T::of_usize(self.grid.num_cells());
        for c in &mut coeffs {
            *c = *c * scale;
        }
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }
}

impl<T: Real> SpectralField<T> {
    /// Inverse transform back to point values (real part).
    pub fn to_real(&self) -> Field<T> {
        let mut buf = self.coeffs.clone();
        fft::fft_all_axes(&mut buf, self.grid.points(), self.grid.dim(), false);
        let scale = T::one() / self.grid.volume().sqrt();
        Field {
            grid: self.grid,
            values: buf.iter().map(|c| c.re * scale).collect(),
        }
    }
}

/// Sobolev order `n`, integer or fractional, possibly negative.
/// Orders outside `[-4, 4]` are rejected (artifact limit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevIndex<T: Real>(T);

impl<T: Real> SobolevIndex<T> {
    pub fn new(order: T) -> Result<Self, FieldError> {
        if !order.is_finite() || order.abs() > T::lit(4.0) {
            return Err(FieldError::OrderOutOfRange(
                order.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self(order))
    }

    /// Integer-order shorthand.
    pub fn h(order: i32) -> Self {
        Self::new(T::from_i32(order).unwrap()).expect("integer order within range")
    }

    pub fn order(&self) -> T {
        self.0
    }
}
