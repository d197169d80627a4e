//! Reference models and market data shared by tests, benchmarks and the CLI.

use crate::calibration::{Quote, VolSurface};
use crate::model::{CevLocalVol, JumpParams, MarketEnv, ModelSpec, PiecewiseCurve};

/// CEV jump-diffusion on twenty 0.05-year buckets:
/// `ν = 25% - 0.11% i`, `β = 100% - 0.75% i` on `((i)/20, (i+1)/20]`,
/// `λ = 30%`, `η = -8%`, `γ = 35%`, spot 100, `r = 4%`, `q = 0`.
pub fn reference_cev_model() -> ModelSpec {
    let times: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
    let nu = (0..20).map(|i| 0.25 - 0.0011 * i as f64).collect();
    let beta = (0..20).map(|i| 1.0 - 0.0075 * i as f64).collect();
    ModelSpec::log_aa(
        CevLocalVol::new(
            PiecewiseCurve::new(times.clone(), nu).expect("valid grid"),
            PiecewiseCurve::new(times, beta).expect("valid grid"),
        )
        .expect("positive nu"),
        JumpParams::new(0.3, -0.08, 0.35).expect("valid jumps"),
        MarketEnv::flat(100.0, 0.04, 0.0).expect("positive spot"),
    )
}

/// Maturities and strikes (relative to spot) of the reference error grid.
pub const REFERENCE_MATURITIES: [f64; 4] = [0.25, 1.0, 3.0, 5.0];
pub const REFERENCE_RELATIVE_STRIKES: [f64; 5] = [0.70, 0.85, 1.00, 1.20, 1.50];

pub const EURUSD_SPOT: f64 = 1.54;
pub const EURUSD_MATURITIES: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
pub const EURUSD_RELATIVE_STRIKES: [f64; 4] = [0.92, 0.96, 1.00, 1.08];
/// Implied vols in percent, one row per maturity.
pub const EURUSD_VOLS_PCT: [[f64; 4]; 4] = [
    [10.82, 10.65, 10.53, 10.56],
    [10.84, 10.70, 10.63, 10.66],
    [10.71, 10.60, 10.56, 10.58],
    [10.60, 10.48, 10.46, 10.47],
];

/// The EUR/USD quote grid with zero rates on both currencies.
pub fn eurusd_surface() -> VolSurface {
    let mut quotes = Vec::with_capacity(16);
    for (i, &t) in EURUSD_MATURITIES.iter().enumerate() {
        for (j, &k) in EURUSD_RELATIVE_STRIKES.iter().enumerate() {
            quotes.push(Quote {
                maturity: t,
                strike: EURUSD_SPOT * k,
                implied_vol: EURUSD_VOLS_PCT[i][j] / 100.0,
            });
        }
    }
    VolSurface::new(quotes, MarketEnv::flat(EURUSD_SPOT, 0.0, 0.0).expect("positive spot")).expect("valid quotes")
}
