//! Black (log variant) and Bachelier (normal variant) prices and their
//! inversion into implied volatilities.

use std::f64::consts::PI;

use super::normal::{norm_cdf, norm_pdf};
use super::DealTerms;
use crate::error::{Error, Result};
use crate::model::{PayoffKind, Variant};

/// Volatility bracket searched by the root finder. For the Bachelier variant it
/// is scaled by `max(|F|, K)`.
pub const VOL_BRACKET: (f64, f64) = (1e-6, 5.0);

const MAX_ITER: usize = 200;

/// Undiscounted Black price for total standard deviation `sd`.
pub fn black_price(forward: f64, strike: f64, sd: f64, kind: PayoffKind) -> f64 {
    if sd <= 0.0 {
        return match kind {
            PayoffKind::Call => (forward - strike).max(0.0),
            PayoffKind::Put => (strike - forward).max(0.0),
            PayoffKind::DigitalCall => f64::from(u8::from(forward > strike)),
        };
    }
    let d1 = (forward / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    match kind {
        PayoffKind::Call => forward * norm_cdf(d1) - strike * norm_cdf(d2),
        PayoffKind::Put => strike * norm_cdf(-d2) - forward * norm_cdf(-d1),
        PayoffKind::DigitalCall => norm_cdf(d2),
    }
}

/// Undiscounted Bachelier price for total standard deviation `sd`.
pub fn bachelier_price(forward: f64, strike: f64, sd: f64, kind: PayoffKind) -> f64 {
    if sd <= 0.0 {
        return black_price(forward, strike, 0.0, kind);
    }
    let z = (forward - strike) / sd;
    match kind {
        PayoffKind::Call => (forward - strike) * norm_cdf(z) + sd * norm_pdf(z),
        PayoffKind::Put => (strike - forward) * norm_cdf(-z) + sd * norm_pdf(z),
        PayoffKind::DigitalCall => norm_cdf(z),
    }
}

fn vol_scale(deal: &DealTerms, forward: f64) -> f64 {
    match deal.variant {
        Variant::LogAssetAa => 1.0,
        Variant::NormalAsset => forward.abs().max(deal.payoff.strike()),
    }
}

fn model_price(deal: &DealTerms, forward: f64, vol: f64) -> f64 {
    let sd = vol * deal.payoff.maturity().sqrt();
    let (k, kind) = (deal.payoff.strike(), deal.payoff.kind());
    deal.discount
        * match deal.variant {
            Variant::LogAssetAa => black_price(forward, k, sd, kind),
            Variant::NormalAsset => bachelier_price(forward, k, sd, kind),
        }
}

/// Derivative of the discounted price in the annualised volatility.
pub fn vol_vega(deal: &DealTerms, forward: f64, vol: f64) -> f64 {
    let t = deal.payoff.maturity();
    let sd = vol * t.sqrt();
    let k = deal.payoff.strike();
    deal.discount
        * t.sqrt()
        * match deal.variant {
            Variant::LogAssetAa => {
                let d1 = (forward / k).ln() / sd + 0.5 * sd;
                forward * norm_pdf(d1)
            }
            Variant::NormalAsset => norm_pdf((forward - k) / sd),
        }
}

/// Open interval of prices that admit an implied volatility in the bracket.
pub fn price_band(deal: &DealTerms, forward: f64) -> Result<(f64, f64)> {
    if deal.payoff.kind() == PayoffKind::DigitalCall {
        return Err(Error::UnsupportedPayoff("digital payoffs".into()));
    }
    let scale = vol_scale(deal, forward);
    let lo = model_price(deal, forward, VOL_BRACKET.0 * scale);
    let hi = model_price(deal, forward, VOL_BRACKET.1 * scale);
    Ok((lo, hi))
}

/// Initial guess: Corrado–Miller for Black, a time-value rule for Bachelier.
fn initial_guess(deal: &DealTerms, forward: f64, price: f64) -> f64 {
    let t = deal.payoff.maturity();
    let k = deal.payoff.strike();
    let undiscounted = price / deal.discount;
    let call = match deal.payoff.kind() {
        PayoffKind::Put => undiscounted + (forward - k),
        _ => undiscounted,
    };
    match deal.variant {
        Variant::LogAssetAa => {
            let a = call - 0.5 * (forward - k);
            let disc = (a * a - (forward - k).powi(2) / PI).max(0.0);
            (2.0 * PI).sqrt() / (forward + k) * (a + disc.sqrt()) / t.sqrt()
        }
        Variant::NormalAsset => {
            let time_value = (call - (forward - k).max(0.0)).max(0.0);
            (2.0 * PI).sqrt() * time_value / t.sqrt()
        }
    }
}

/// Volatility reproducing `price` for the call/put in `deal`: Newton steps
/// safeguarded by a shrinking bisection bracket.
pub fn implied_vol(price: f64, deal: &DealTerms, forward: f64) -> Result<f64> {
    let (lower, upper) = price_band(deal, forward)?;
    if !(price > lower && price < upper) {
        return Err(Error::NoSolution { price, lower, upper });
    }
    let scale = vol_scale(deal, forward);
    let (mut lo, mut hi) = (VOL_BRACKET.0 * scale, VOL_BRACKET.1 * scale);
    let guess = initial_guess(deal, forward, price);
    let mut vol = if guess.is_finite() && guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..MAX_ITER {
        let diff = model_price(deal, forward, vol) - price;
        if diff == 0.0 {
            return Ok(vol);
        }
        if diff > 0.0 {
            hi = vol;
        } else {
            lo = vol;
        }
        let vega = vol_vega(deal, forward, vol);
        let newton = vol - diff / vega;
        let next = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - vol).abs() <= 1e-15 * vol.max(scale * 1e-3) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        vol = next;
    }
    Ok(vol)
}
