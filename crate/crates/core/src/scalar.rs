//! Scalar abstraction: all numerics are generic over [`Real`], implemented
//! for `f32` and `f64`. Concrete aliases live at the crate root.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rustfft::FftNum;

/// Floating-point scalar usable throughout the crate: FFT-capable,
/// samplable from the standard distributions, and convertible from
/// literals.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + FftNum
    + SampleUniform
    + Display
    + LowerExp
    + Debug
    + Default
{
    /// Standard normal draw.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw on the open interval `(0, 1)`.
    fn sample_unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Conversion from an `f64` literal (scheme constants, tolerances).
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable")
    }

    /// Conversion from a count.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Real for f32 {
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::StandardNormal)
    }

    fn sample_unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::Open01)
    }
}

impl Real for f64 {
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::StandardNormal)
    }

    fn sample_unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::Open01)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn draws<T: Real>(seed: u64) -> (T, T) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (
            T::sample_standard_normal(&mut rng),
            T::sample_unit_open(&mut rng),
        )
    }

    #[test]
    fn generic_sampling_compiles_for_both_widths() {
        let (g32, u32) = draws::<f32>(7);
        let (g64, u64) = draws::<f64>(7);
        assert!(g32.is_finite() && g64.is_finite());
        assert!(u32 > 0.0 && u32 < 1.0);
        assert!(u64 > 0.0 && u64 < 1.0);
    }

    #[test]
    fn literal_conversion_round_trips() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25), 0.25f32);
        assert_eq!(f64::of_usize(41), 41.0);
    }
}
