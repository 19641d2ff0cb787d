//! Standard normal helpers.

use statrs::distribution::{ContinuousCDF, Normal};


pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Density of the standard normal.
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x), accurate in both tails.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// 1 − Φ(x) without cancellation.
#[inline]
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
