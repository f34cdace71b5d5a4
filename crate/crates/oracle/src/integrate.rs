//! Trapezoid rule against the standard normal weight.

use semiperc_core::specfun::phi;
use thiserror::Error;

pub const MIN_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("at least {MIN_POINTS} points are required, got {0}")]
    TooFewPoints(usize),
    #[error("invalid range [{0}, {1}]")]
    Range(f64, f64),
    #[error("integrand is not finite at z = {0}")]
    NonFinite(f64),
}

/// `int_lo^hi phi(z) f(z) dz` by the composite trapezoid rule on
/// `n_points` equally spaced nodes.
pub fn brute_force_integral<F: Fn(f64) -> f64>(
    f: F,
    z_range: (f64, f64),
    n_points: usize,
) -> Result<f64, IntegrateError> {
    if n_points < MIN_POINTS {
        return Err(IntegrateError::TooFewPoints(n_points));
    }
    let (lo, hi) = z_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(IntegrateError::Range(lo, hi));
    }
    let dz = (hi - lo) / (n_points - 1) as f64;
    let mut sum = 0.0;
    for i in 0..n_points {
        let z = lo + i as f64 * dz;
        let v = phi(z) * f(z);
        if !v.is_finite() {
            return Err(IntegrateError::NonFinite(z));
        }
        sum += if i == 0 || i == n_points - 1 { 0.5 * v } else { v };
    }
    Ok(sum * dz)
}
