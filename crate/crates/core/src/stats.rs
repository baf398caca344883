//! Small statistics helpers: Monte Carlo means with standard errors and
//! least-squares fits for convergence tables.

use crate::Real;

/// Sample mean and standard error (sample std / sqrt(R)).
pub fn mean_stderr<T: Real>(samples: &[T]) -> (T, T) {
    let r = samples.len();
    assert!(r >= 1, "empty sample set");
    let n = T::of_usize(r);
    let mean = samples.iter().fold(T::zero(), |s, &x| s + x) / n;
    if r == 1 {
        return (mean, T::zero());
    }
    let var = samples
        .iter()
        .fold(T::zero(), |s, &x| s + (x - mean) * (x - mean))
        / (n - T::one());
    (mean, (var / n).sqrt())
}

/// Least-squares line fit `y = slope*x + intercept` with R^2.
pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> (T, T, T) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a fit");
    let n = T::of_usize(xs.len());
    let mx = xs.iter().fold(T::zero(), |s, &x| s + x) / n;
    let my = ys.iter().fold(T::zero(), |s, &y| s + y) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == T::zero() {
        T::one()
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, intercept, r2)
}
