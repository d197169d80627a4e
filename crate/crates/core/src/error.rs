use thiserror::Error;

/// Errors raised by the pricing and calibration engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("degenerate variance {variance:e}: the proxy law needs a strictly positive variance")]
    DegenerateVariance { variance: f64 },

    #[error("unsupported Greek order {0} (supported: 0..=3)")]
    UnsupportedOrder(usize),

    #[error("price {price} outside the no-arbitrage band ({lower}, {upper})")]
    NoSolution { price: f64, lower: f64, upper: f64 },

    #[error("implied volatility is not defined for {0}")]
    UnsupportedPayoff(String),

    #[error("curves disagree on breakpoints: {0}")]
    GridMismatch(String),

    #[error("operation requires the {expected} variant")]
    WrongVariant { expected: &'static str },

    #[error("simulation budget exceeded: {requested} path-steps requested, cap is {budget}")]
    BudgetExceeded { requested: u128, budget: u128 },

    #[error("residual evaluation failed at the initial point: {0}")]
    InitialEvaluation(String),

    #[error("calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidCurve(_) => "invalid_curve",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidPayoff(_) => "invalid_payoff",
            Error::DegenerateVariance { .. } => "degenerate_variance",
            Error::UnsupportedOrder(_) => "unsupported_order",
            Error::NoSolution { .. } => "no_solution",
            Error::UnsupportedPayoff(_) => "unsupported_payoff",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::WrongVariant { .. } => "wrong_variant",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::InitialEvaluation(_) => "initial_evaluation",
            Error::Calibration(_) => "calibration",
        }
    }
}
