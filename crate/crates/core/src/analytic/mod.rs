//! Closed-form building blocks for the Merton proxy.
//!
//! Conditional on `n` jumps the proxy `X^M_T` is Gaussian with mean
//! `m + nη` and variance `V + nγ²`, so every expectation below is a Poisson
//! mixture of single-bucket Gaussian expectations. The Greek `G^h_i(Z)` is the
//! `i`-th derivative of `x ↦ E[h(Z + x)]` at `x = 0`, i.e. a derivative in the
//! Gaussian mean.

mod implied;
mod normal;

pub use implied::{bachelier_price, black_price, implied_vol, price_band, vol_vega};
pub use normal::{norm_cdf, norm_pdf};

use crate::error::{Error, Result};
use crate::model::{JumpParams, ModelSpec, Payoff, PayoffKind, Variant};

/// Cumulative Poisson mass required before the mixture may stop.
pub const POISSON_MASS_TOL: f64 = 1e-12;
/// Relative size of the last retained mixture term.
pub const TERM_TOL: f64 = 1e-13;
/// Hard cap on the number of Poisson buckets.
pub const MAX_BUCKETS: usize = 200;

/// Law of the proxy at the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyLaw {
    /// `x₀ + ∫₀ᵀ μ_t dt`.
    pub base_mean: f64,
    /// `∫₀ᵀ σ_t² dt`.
    pub base_var: f64,
    pub jumps: JumpParams,
    pub horizon: f64,
}

impl ProxyLaw {
    pub fn poisson_mean(&self) -> f64 {
        self.jumps.lambda() * self.horizon
    }
}

/// Discounting and payoff data turning a terminal state into cash.
///
/// Log variant: `h(x) = D (C eˣ - K)₊` with `D = e^{-∫r}` and `C = e^{∫(r-q)}`.
/// Normal variant: `h(x) = D (x - K)₊`; `carry` is ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DealTerms {
    pub discount: f64,
    pub carry: f64,
    pub payoff: Payoff,
    pub variant: Variant,
}

impl DealTerms {
    pub fn new(model: &ModelSpec, payoff: Payoff) -> Self {
        let t = payoff.maturity();
        Self {
            discount: model.env().discount(t),
            carry: model.env().carry(t),
            payoff,
            variant: model.variant(),
        }
    }

    /// The payoff evaluated at a terminal state.
    pub fn payoff_value(&self, x: f64) -> f64 {
        let k = self.payoff.strike();
        let s = match self.variant {
            Variant::LogAssetAa => self.carry * x.exp(),
            Variant::NormalAsset => x,
        };
        self.discount
            * match self.payoff.kind() {
                PayoffKind::Call => (s - k).max(0.0),
                PayoffKind::Put => (k - s).max(0.0),
                PayoffKind::DigitalCall => {
                    if s > k {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
    }
}

/// `dⁱ/dmⁱ E[h(G)]` for `G ~ N(mean, variance)`, `i ∈ 0..=3`.
pub fn gaussian_payoff_derivative(order: usize, mean: f64, variance: f64, deal: &DealTerms) -> Result<f64> {
    if order > 3 {
        return Err(Error::UnsupportedOrder(order));
    }
    if !(variance > 0.0) {
        return Err(Error::DegenerateVariance { variance });
    }
    let sd = variance.sqrt();
    let k = deal.payoff.strike();
    let d = deal.discount;
    let value = match deal.variant {
        Variant::LogAssetAa => {
            let d2 = (mean + deal.carry.ln() - k.ln()) / sd;
            let d1 = d2 + sd;
            // forward of the bucket
            let f = deal.carry * (mean + 0.5 * variance).exp();
            match deal.payoff.kind() {
                PayoffKind::Call | PayoffKind::Put => {
                    let call = deal.payoff.kind() == PayoffKind::Call;
                    match order {
                        0 if call => d * (f * norm_cdf(d1) - k * norm_cdf(d2)),
                        0 => d * (k * norm_cdf(-d2) - f * norm_cdf(-d1)),
                        _ => {
                            let pdf = norm_pdf(d1);
                            let base = if call { norm_cdf(d1) } else { -norm_cdf(-d1) };
                            let extra = match order {
                                1 => 0.0,
                                2 => pdf / sd,
                                _ => 2.0 * pdf / sd - d1 * pdf / variance,
                            };
                            d * f * (base + extra)
                        }
                    }
                }
                PayoffKind::DigitalCall => d * digital_derivative(order, d2, sd),
            }
        }
        Variant::NormalAsset => {
            let z = (mean - k) / sd;
            match deal.payoff.kind() {
                PayoffKind::Call | PayoffKind::Put => {
                    let call = deal.payoff.kind() == PayoffKind::Call;
                    match order {
                        0 if call => d * ((mean - k) * norm_cdf(z) + sd * norm_pdf(z)),
                        0 => d * ((k - mean) * norm_cdf(-z) + sd * norm_pdf(z)),
                        1 if call => d * norm_cdf(z),
                        1 => -d * norm_cdf(-z),
                        2 => d * norm_pdf(z) / sd,
                        _ => -d * z * norm_pdf(z) / variance,
                    }
                }
                PayoffKind::DigitalCall => d * digital_derivative(order, z, sd),
            }
        }
    };
    Ok(value)
}

/// Derivatives of `m ↦ N((m - c)/sd)`, written in terms of `z = (m - c)/sd`.
fn digital_derivative(order: usize, z: f64, sd: f64) -> f64 {
    let pdf = norm_pdf(z);
    match order {
        0 => norm_cdf(z),
        1 => pdf / sd,
        2 => -z * pdf / (sd * sd),
        _ => (z * z - 1.0) * pdf / (sd * sd * sd),
    }
}

/// `Σₙ P(N_T = n) f(mean + (n + s)η, var + (n + s)γ²)` where `s` is the number
/// of extra jump copies, truncated once the Poisson mass reaches
/// `1 - POISSON_MASS_TOL` and the current term is below `TERM_TOL` relative.
pub fn poisson_mixture(law: &ProxyLaw, extra_copies: usize, mut f: impl FnMut(f64, f64) -> Result<f64>) -> Result<f64> {
    if !(law.base_var > 0.0) {
        return Err(Error::DegenerateVariance { variance: law.base_var });
    }
    let lt = law.poisson_mean();
    let (eta, gamma2) = (law.jumps.eta(), law.jumps.gamma().powi(2));
    let mut weight = (-lt).exp();
    let mut mass = 0.0;
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for n in 0..=MAX_BUCKETS {
        let jumps = (n + extra_copies) as f64;
        let term = weight * f(law.base_mean + jumps * eta, law.base_var + jumps * gamma2)?;
        sum += term;
        abs_sum += term.abs();
        mass += weight;
        if mass >= 1.0 - POISSON_MASS_TOL && term.abs() <= TERM_TOL * abs_sum {
            break;
        }
        weight *= lt / (n + 1) as f64;
    }
    Ok(sum)
}

/// `E[h(X^M_T)]` as a Poisson mixture of Gaussian prices.
pub fn merton_price(law: &ProxyLaw, deal: &DealTerms) -> Result<f64> {
    poisson_mixture(law, 0, |m, v| gaussian_payoff_derivative(0, m, v, deal))
}

/// `G^h_i(X^M_T)`, or `G^h_i(X^M_T + Y')` when `shifted_by_jump_copy` is set.
pub fn merton_greek(order: usize, law: &ProxyLaw, deal: &DealTerms, shifted_by_jump_copy: bool) -> Result<f64> {
    let extra = usize::from(shifted_by_jump_copy);
    poisson_mixture(law, extra, |m, v| gaussian_payoff_derivative(order, m, v, deal))
}

/// Closed-form Merton call on the log-asset, summing Black–Scholes prices over
/// jump counts. Kept as an independent route to [`merton_price`].
pub fn merton_call_series(
    x0: f64,
    total_var: f64,
    jumps: &JumpParams,
    maturity: f64,
    rate_integral: f64,
    dividend_integral: f64,
    strike: f64,
) -> f64 {
    let lt = jumps.lambda() * maturity;
    let forward = (x0 + rate_integral - dividend_integral + jumps.log_compensator() * maturity).exp();
    let log_jump = jumps.eta() + 0.5 * jumps.gamma().powi(2);
    let mut weight = (-lt).exp();
    let mut sum = 0.0;
    for i in 0..=MAX_BUCKETS {
        let sd = (total_var + i as f64 * jumps.gamma().powi(2)).sqrt();
        sum += weight * black_price(forward * (i as f64 * log_jump).exp(), strike, sd, PayoffKind::Call);
        weight *= lt / (i + 1) as f64;
        if weight < 1e-18 && i as f64 > lt {
            break;
        }
    }
    (-rate_integral).exp() * sum
}
