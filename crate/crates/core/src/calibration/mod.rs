//! Levenberg–Marquardt least squares and the bootstrap calibrator.

pub mod bootstrap;
pub mod lm;

pub use bootstrap::{
    bootstrap, bootstrap_calibrate, fit_bucket, model_vols, recalibrate, Bootstrap, BucketFit, CalibConfig,
    CalibrationResult, JumpBounds, OuterConfig, Quote, QuoteResidual, Slice, VolSurface,
};
pub use lm::{levenberg_marquardt, Bounds, FnProblem, LeastSquares, LmConfig, LmResult, LmStatus};
