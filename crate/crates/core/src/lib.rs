//! Pricing and calibration of one-dimensional local-volatility models with
//! compound Poisson jumps.
//!
//! Prices are obtained from a second-order expansion around a Merton proxy
//! whose coefficients are frozen at the initial state: the proxy price plus
//! Greek-weighted correction terms. A Monte Carlo pricer of the full dynamics
//! is provided as an independent reference, and a bootstrap calibrator fits
//! piecewise-constant CEV parameters maturity by maturity.

// `!(x > 0.0)` is the idiom used throughout to reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod calibration;
pub mod error;
pub mod expansion;
pub mod fixtures;
pub mod model;
pub mod montecarlo;
pub mod quadrature;

pub use calibration::{bootstrap_calibrate, CalibConfig, CalibrationResult, Quote, VolSurface};
pub use error::{Error, Result};
pub use expansion::{approx_price, diagnostics, Diagnostics, ExpansionState, PriceBreakdown};
pub use model::{
    CevLocalVol, JumpParams, LocalVol, MarketEnv, ModelFile, ModelSpec, Payoff, PayoffKind, PiecewiseCurve, Variant,
};
pub use montecarlo::{mc_price, McConfig, McEstimate};
