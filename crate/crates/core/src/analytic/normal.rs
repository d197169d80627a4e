use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF via `erfc`, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}
