//! Model data: step curves of time, CEV local volatility, compound Poisson
//! jumps, the market environment and European payoffs.
//!
//! Two dynamics are supported for the state `X`:
//!
//! ```text
//! dX = σ(t, X-) dW + μ(t, X-) dt + dJ,   J = Σ_{k ≤ N_t} Y_k,  Y_k ~ N(η, γ²)
//! ```
//!
//! * [`Variant::LogAssetAa`]: `X` is the log-asset, `σ(t,x) = ν(t) e^{(β(t)-1)x}`
//!   and the drift `μ(t,x) = λ(1 - e^{η+γ²/2}) - σ²(t,x)/2` makes `e^X` a martingale.
//! * [`Variant::NormalAsset`]: `X` is the forward to the payoff maturity and
//!   `μ = -λη`. The local volatility is supplied directly as the pair
//!   `(σ_t, σ⁽¹⁾_t)` at the proxy point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step function of time on the grid `0 = T₀ < T₁ < … < Tₙ`.
///
/// `values[i]` is attached to the interval `(T_i, T_{i+1}]` and the last value
/// is extended flat beyond `Tₙ`. Only `T₁..Tₙ` are stored, `T₀ = 0` is implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct PiecewiseCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawCurve> for PiecewiseCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        PiecewiseCurve::new(raw.times, raw.values)
    }
}

impl From<PiecewiseCurve> for RawCurve {
    fn from(c: PiecewiseCurve) -> Self {
        RawCurve {
            times: c.times,
            values: c.values,
        }
    }
}

impl PiecewiseCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidCurve("at least one breakpoint is required".into()));
        }
        if times.len() != values.len() {
            return Err(Error::InvalidCurve(format!(
                "{} breakpoints but {} values",
                times.len(),
                values.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &times {
            if !t.is_finite() || t <= prev {
                return Err(Error::InvalidCurve(format!(
                    "breakpoints must be finite and strictly increasing from 0, got {t} after {prev}"
                )));
            }
            prev = t;
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite value {v}")));
        }
        Ok(Self { times, values })
    }

    /// A curve equal to `value` at every time.
    pub fn constant(value: f64) -> Self {
        Self {
            times: vec![1.0],
            values: vec![value],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&b| b < t).min(self.times.len() - 1)
    }

    /// Value at time `t`; `t ≤ 0` maps to the first interval.
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index_at(t)]
    }

    /// Exact integral over `[a, b]`, `0 ≤ a ≤ b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut left = a;
        for (i, &right_bp) in self.times.iter().enumerate() {
            if left >= b {
                break;
            }
            let last = i + 1 == self.times.len();
            let right = if last { b } else { right_bp.min(b) };
            if right > left {
                total += self.values[i] * (right - left);
                left = right;
            }
        }
        total
    }

    /// Resample onto `grid`, which must refine this curve's breakpoints on the
    /// span it covers. Values are read at the right end of each grid interval.
    pub fn on_grid(&self, grid: &[f64]) -> Self {
        Self {
            times: grid.to_vec(),
            values: grid.iter().map(|&t| self.value_at(t)).collect(),
        }
    }

    /// Pointwise map keeping the breakpoints.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Append one interval `(last breakpoint, end]` carrying `value`.
    pub fn push(&mut self, end: f64, value: f64) -> Result<()> {
        let last = *self.times.last().expect("non-empty curve");
        if !(end > last) {
            return Err(Error::InvalidCurve(format!(
                "appended breakpoint {end} must exceed {last}"
            )));
        }
        self.times.push(end);
        self.values.push(value);
        Ok(())
    }
}

/// Sorted union of the breakpoints of `curves` that lie strictly below
/// `horizon`, terminated by `horizon` itself.
pub fn merged_grid(curves: &[&PiecewiseCurve], horizon: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.times().iter().copied())
        .filter(|&t| t < horizon)
        .collect();
    grid.push(horizon);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Compound Poisson jump parameters: intensity `λ` and Gaussian jump sizes
/// `N(η, γ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJumps", into = "RawJumps")]
pub struct JumpParams {
    lambda: f64,
    eta: f64,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawJumps {
    lambda: f64,
    eta: f64,
    gamma: f64,
}

impl TryFrom<RawJumps> for JumpParams {
    type Error = Error;

    fn try_from(r: RawJumps) -> Result<Self> {
        JumpParams::new(r.lambda, r.eta, r.gamma)
    }
}

impl From<JumpParams> for RawJumps {
    fn from(j: JumpParams) -> Self {
        RawJumps {
            lambda: j.lambda,
            eta: j.eta,
            gamma: j.gamma,
        }
    }
}

impl JumpParams {
    pub fn new(lambda: f64, eta: f64, gamma: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "jump intensity must be >= 0, got {lambda}"
            )));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "jump volatility must be >= 0, got {gamma}"
            )));
        }
        if !eta.is_finite() {
            return Err(Error::InvalidModel(format!("jump mean must be finite, got {eta}")));
        }
        Ok(Self { lambda, eta, gamma })
    }

    pub fn none() -> Self {
        Self {
            lambda: 0.0,
            eta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `E[e^Y] = e^{η + γ²/2}`.
    pub fn mean_exp_jump(&self) -> f64 {
        (self.eta + 0.5 * self.gamma * self.gamma).exp()
    }

    /// Drift `λ(1 - E[e^Y])` compensating the jumps of the log-asset.
    pub fn log_compensator(&self) -> f64 {
        -self.lambda * (self.eta + 0.5 * self.gamma * self.gamma).exp_m1()
    }

    /// `M_J = |η| + γ`.
    pub fn size_scale(&self) -> f64 {
        self.eta.abs() + self.gamma
    }
}

/// CEV local volatility `σ(t, x) = ν(t) e^{(β(t) - 1) x}` on the log-asset.
#[derive(Debug, Clone, PartialEq)]
pub struct CevLocalVol {
    nu: PiecewiseCurve,
    beta: PiecewiseCurve,
}

impl CevLocalVol {
    pub fn new(nu: PiecewiseCurve, beta: PiecewiseCurve) -> Result<Self> {
        if let Some(v) = nu.values().iter().find(|&&v| v <= 0.0) {
            return Err(Error::InvalidModel(format!("nu must be > 0, got {v}")));
        }
        Ok(Self { nu, beta })
    }

    pub fn nu(&self) -> &PiecewiseCurve {
        &self.nu
    }

    pub fn beta(&self) -> &PiecewiseCurve {
        &self.beta
    }

    pub fn sigma(&self, t: f64, x: f64) -> f64 {
        self.nu.value_at(t) * ((self.beta.value_at(t) - 1.0) * x).exp()
    }

    /// `(σ(t,x), ∂ₓσ(t,x))`.
    pub fn sigma_and_slope(&self, t: f64, x: f64) -> (f64, f64) {
        let b = self.beta.value_at(t) - 1.0;
        let s = self.nu.value_at(t) * (b * x).exp();
        (s, b * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "log_aa")]
    LogAssetAa,
    #[serde(rename = "normal")]
    NormalAsset,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::LogAssetAa => "log_aa",
            Variant::NormalAsset => "normal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalVol {
    /// Log-asset CEV parameterisation.
    Cev(CevLocalVol),
    /// Forward dynamics with `σ(t, x₀)` and `∂ₓσ(t, x₀)` given as curves.
    Explicit {
        sigma: PiecewiseCurve,
        dsigma: PiecewiseCurve,
    },
}

/// Spot, deterministic short rate `r(t)` and dividend yield `q(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketEnv {
    spot: f64,
    rate: PiecewiseCurve,
    dividend: PiecewiseCurve,
}

impl MarketEnv {
    pub fn new(spot: f64, rate: PiecewiseCurve, dividend: PiecewiseCurve) -> Result<Self> {
        if !(spot > 0.0 && spot.is_finite()) {
            return Err(Error::InvalidModel(format!("spot must be > 0, got {spot}")));
        }
        Ok(Self { spot, rate, dividend })
    }

    pub fn flat(spot: f64, rate: f64, dividend: f64) -> Result<Self> {
        Self::new(spot, PiecewiseCurve::constant(rate), PiecewiseCurve::constant(dividend))
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn rate(&self) -> &PiecewiseCurve {
        &self.rate
    }

    pub fn dividend(&self) -> &PiecewiseCurve {
        &self.dividend
    }

    /// `e^{-∫₀ᵀ r}`.
    pub fn discount(&self, maturity: f64) -> f64 {
        (-self.rate.integral(0.0, maturity)).exp()
    }

    /// `e^{∫₀ᵀ (r - q)}`.
    pub fn carry(&self, maturity: f64) -> f64 {
        (self.rate.integral(0.0, maturity) - self.dividend.integral(0.0, maturity)).exp()
    }

    pub fn forward(&self, maturity: f64) -> f64 {
        self.spot * self.carry(maturity)
    }
}

/// A full model: local volatility, jumps and market environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    local_vol: LocalVol,
    jumps: JumpParams,
    env: MarketEnv,
}

impl ModelSpec {
    pub fn log_aa(cev: CevLocalVol, jumps: JumpParams, env: MarketEnv) -> Self {
        Self {
            local_vol: LocalVol::Cev(cev),
            jumps,
            env,
        }
    }

    pub fn normal(sigma: PiecewiseCurve, dsigma: PiecewiseCurve, jumps: JumpParams, env: MarketEnv) -> Result<Self> {
        if let Some(v) = sigma.values().iter().find(|&&v| v <= 0.0) {
            return Err(Error::InvalidModel(format!("sigma must be > 0, got {v}")));
        }
        Ok(Self {
            local_vol: LocalVol::Explicit { sigma, dsigma },
            jumps,
            env,
        })
    }

    pub fn variant(&self) -> Variant {
        match self.local_vol {
            LocalVol::Cev(_) => Variant::LogAssetAa,
            LocalVol::Explicit { .. } => Variant::NormalAsset,
        }
    }

    pub fn local_vol(&self) -> &LocalVol {
        &self.local_vol
    }

    pub fn cev(&self) -> Option<&CevLocalVol> {
        match &self.local_vol {
            LocalVol::Cev(c) => Some(c),
            LocalVol::Explicit { .. } => None,
        }
    }

    pub fn jumps(&self) -> &JumpParams {
        &self.jumps
    }

    pub fn env(&self) -> &MarketEnv {
        &self.env
    }

    pub fn with_jumps(&self, jumps: JumpParams) -> Self {
        Self { jumps, ..self.clone() }
    }

    pub fn with_local_vol(&self, local_vol: LocalVol) -> Self {
        Self {
            local_vol,
            ..self.clone()
        }
    }

    /// Initial state `x₀`: `ln(spot)` on the log-asset, the forward to
    /// `maturity` for the normal variant.
    pub fn initial_state(&self, maturity: f64) -> f64 {
        match self.variant() {
            Variant::LogAssetAa => self.env.spot.ln(),
            Variant::NormalAsset => self.env.forward(maturity),
        }
    }

    /// `(σ_t, σ⁽¹⁾_t)` at the proxy point.
    pub fn vol_at_proxy(&self, t: f64) -> (f64, f64) {
        match &self.local_vol {
            LocalVol::Cev(c) => c.sigma_and_slope(t, self.env.spot.ln()),
            LocalVol::Explicit { sigma, dsigma } => (sigma.value_at(t), dsigma.value_at(t)),
        }
    }

    /// `(μ_t, μ⁽¹⁾_t)` at the proxy point.
    pub fn drift_at_proxy(&self, t: f64) -> (f64, f64) {
        let (s, ds) = self.vol_at_proxy(t);
        drift_from_vol(self.variant(), &self.jumps, s, ds)
    }

    /// Full local volatility `σ(t, x)`. The explicit variant is extended
    /// linearly around `x₀`.
    pub fn sigma(&self, t: f64, x: f64, x0: f64) -> f64 {
        match &self.local_vol {
            LocalVol::Cev(c) => c.sigma(t, x),
            LocalVol::Explicit { sigma, dsigma } => sigma.value_at(t) + dsigma.value_at(t) * (x - x0),
        }
    }

    /// Full drift `μ(t, x)` given `σ(t, x)`.
    pub fn drift(&self, sigma: f64) -> f64 {
        match self.variant() {
            Variant::LogAssetAa => self.jumps.log_compensator() - 0.5 * sigma * sigma,
            Variant::NormalAsset => -self.jumps.lambda * self.jumps.eta,
        }
    }

    /// Breakpoints of every time-dependent model curve (not rates).
    pub fn vol_curves(&self) -> Vec<&PiecewiseCurve> {
        match &self.local_vol {
            LocalVol::Cev(c) => vec![&c.nu, &c.beta],
            LocalVol::Explicit { sigma, dsigma } => vec![sigma, dsigma],
        }
    }

    /// `σ, σ⁽¹⁾, μ, μ⁽¹⁾` at the proxy point as step curves on a common grid
    /// ending at `horizon`.
    pub fn proxy_curves(&self, horizon: f64) -> ProxyCurves {
        let grid = merged_grid(&self.vol_curves(), horizon);
        let mut out = ProxyCurves {
            sigma: Vec::with_capacity(grid.len()),
            dsigma: Vec::with_capacity(grid.len()),
            mu: Vec::with_capacity(grid.len()),
            dmu: Vec::with_capacity(grid.len()),
            grid,
        };
        for &t in &out.grid {
            let (s, ds) = self.vol_at_proxy(t);
            let (m, dm) = self.drift_at_proxy(t);
            out.sigma.push(s);
            out.dsigma.push(ds);
            out.mu.push(m);
            out.dmu.push(dm);
        }
        out
    }
}

/// Drift and its spatial derivative implied by the variant at a point where
/// the volatility is `sigma` with slope `dsigma`.
pub fn drift_from_vol(variant: Variant, jumps: &JumpParams, sigma: f64, dsigma: f64) -> (f64, f64) {
    match variant {
        Variant::LogAssetAa => (jumps.log_compensator() - 0.5 * sigma * sigma, -sigma * dsigma),
        Variant::NormalAsset => (-jumps.lambda * jumps.eta, 0.0),
    }
}

/// Proxy-point coefficient values on a shared grid; entry `i` is the value on
/// `(grid[i-1], grid[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyCurves {
    pub grid: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dsigma: Vec<f64>,
    pub mu: Vec<f64>,
    pub dmu: Vec<f64>,
}

impl ProxyCurves {
    pub fn into_curves(self) -> Result<[PiecewiseCurve; 4]> {
        Ok([
            PiecewiseCurve::new(self.grid.clone(), self.sigma)?,
            PiecewiseCurve::new(self.grid.clone(), self.dsigma)?,
            PiecewiseCurve::new(self.grid.clone(), self.mu)?,
            PiecewiseCurve::new(self.grid, self.dmu)?,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayoffKind {
    Call,
    Put,
    #[serde(rename = "digital")]
    DigitalCall,
}

/// European payoff `h` on the terminal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    kind: PayoffKind,
    strike: f64,
    maturity: f64,
}

impl Payoff {
    pub fn new(kind: PayoffKind, strike: f64, maturity: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::InvalidPayoff(format!("strike must be > 0, got {strike}")));
        }
        if !(maturity >= 0.0 && maturity.is_finite()) {
            return Err(Error::InvalidPayoff(format!("maturity must be >= 0, got {maturity}")));
        }
        Ok(Self { kind, strike, maturity })
    }

    pub fn call(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(PayoffKind::Call, strike, maturity)
    }

    pub fn put(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(PayoffKind::Put, strike, maturity)
    }

    pub fn kind(&self) -> PayoffKind {
        self.kind
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }
}

/// On-disk JSON form of a [`ModelSpec`]. Unknown fields are ignored so that
/// calibration outputs can be read back as models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub variant: Variant,
    pub spot: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<PiecewiseCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dividend: Option<PiecewiseCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<PiecewiseCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<PiecewiseCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<PiecewiseCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsigma: Option<PiecewiseCurve>,
    #[serde(default = "JumpParams::none")]
    pub jumps: JumpParams,
}

impl TryFrom<ModelFile> for ModelSpec {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let env = MarketEnv::new(
            f.spot,
            f.rate.unwrap_or_else(|| PiecewiseCurve::constant(0.0)),
            f.dividend.unwrap_or_else(|| PiecewiseCurve::constant(0.0)),
        )?;
        let missing = |name: &str| Error::InvalidModel(format!("variant {} requires \"{name}\"", f.variant.name()));
        match f.variant {
            Variant::LogAssetAa => {
                let nu = f.nu.clone().ok_or_else(|| missing("nu"))?;
                let beta = f.beta.clone().ok_or_else(|| missing("beta"))?;
                Ok(ModelSpec::log_aa(CevLocalVol::new(nu, beta)?, f.jumps, env))
            }
            Variant::NormalAsset => {
                let sigma = f.sigma.clone().ok_or_else(|| missing("sigma"))?;
                let dsigma = f.dsigma.clone().ok_or_else(|| missing("dsigma"))?;
                ModelSpec::normal(sigma, dsigma, f.jumps, env)
            }
        }
    }
}

impl From<&ModelSpec> for ModelFile {
    fn from(m: &ModelSpec) -> Self {
        let (nu, beta, sigma, dsigma) = match &m.local_vol {
            LocalVol::Cev(c) => (Some(c.nu.clone()), Some(c.beta.clone()), None, None),
            LocalVol::Explicit { sigma, dsigma } => (None, None, Some(sigma.clone()), Some(dsigma.clone())),
        };
        ModelFile {
            variant: m.variant(),
            spot: m.env.spot,
            rate: Some(m.env.rate.clone()),
            dividend: Some(m.env.dividend.clone()),
            nu,
            beta,
            sigma,
            dsigma,
            jumps: m.jumps,
        }
    }
}

impl ModelSpec {
    pub fn from_json_str(s: &str) -> std::result::Result<Self, ModelParseError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let file: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| ModelParseError {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        ModelSpec::try_from(file).map_err(|e| ModelParseError {
            path: ".".into(),
            message: e.to_string(),
        })
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ModelFile::from(self)).expect("model serialises")
    }
}

/// JSON model parse failure with the offending field path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ModelParseError {
    pub path: String,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cev_model(nu: f64, beta: f64, spot: f64, jumps: JumpParams) -> ModelSpec {
        ModelSpec::log_aa(
            CevLocalVol::new(PiecewiseCurve::constant(nu), PiecewiseCurve::constant(beta)).unwrap(),
            jumps,
            MarketEnv::flat(spot, 0.0, 0.0).unwrap(),
        )
    }

    #[test]
    fn curve_rejects_bad_grids() {
        assert!(PiecewiseCurve::new(vec![], vec![]).is_err());
        assert!(PiecewiseCurve::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(PiecewiseCurve::new(vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(PiecewiseCurve::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(PiecewiseCurve::new(vec![1.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn curve_uses_left_open_right_closed_intervals() {
        let c = PiecewiseCurve::new(vec![0.5, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(c.value_at(0.0), 1.0);
        assert_eq!(c.value_at(0.25), 1.0);
        assert_eq!(c.value_at(0.5), 1.0);
        assert_eq!(c.value_at(0.5000001), 2.0);
        assert_eq!(c.value_at(1.0), 2.0);
        assert_eq!(c.value_at(7.0), 2.0);
    }

    #[test]
    fn curve_integral_is_exact() {
        let c = PiecewiseCurve::new(vec![0.5, 1.0], vec![1.0, 2.0]).unwrap();
        assert_relative_eq!(c.integral(0.0, 1.0), 1.5, epsilon = 1e-15);
        assert_relative_eq!(c.integral(0.25, 0.75), 0.25 + 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.integral(0.0, 3.0), 0.5 + 1.0 + 4.0, epsilon = 1e-15);
        assert_relative_eq!(c.integral(2.0, 3.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn merged_grid_truncates_at_horizon() {
        let a = PiecewiseCurve::new(vec![0.5, 1.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        let b = PiecewiseCurve::new(vec![0.75, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(merged_grid(&[&a, &b], 1.5), vec![0.5, 0.75, 1.0, 1.5]);
        assert_eq!(merged_grid(&[&a, &b], 1.0), vec![0.5, 0.75, 1.0]);
    }

    #[test]
    fn lognormal_beta_has_no_state_dependence() {
        let m = cev_model(0.25, 1.0, 100.0, JumpParams::none());
        for t in [0.0, 0.3, 2.0] {
            assert_eq!(m.vol_at_proxy(t), (0.25, 0.0));
        }
    }

    #[test]
    fn cev_vol_matches_direct_evaluation_and_finite_difference() {
        let m = cev_model(0.25, 0.9, 100.0, JumpParams::none());
        let (s, ds) = m.vol_at_proxy(0.5);
        let direct = 0.25 * (-0.1 * 100f64.ln()).exp();
        assert_relative_eq!(s, direct, max_relative = 1e-15);
        assert_relative_eq!(s, 0.157739, epsilon = 1e-6);
        let x0 = 100f64.ln();
        let h = 1e-5;
        let fd = (m.sigma(0.5, x0 + h, x0) - m.sigma(0.5, x0 - h, x0)) / (2.0 * h);
        assert_relative_eq!(ds, fd, max_relative = 1e-9);
        assert_relative_eq!(ds, -0.1 * s, max_relative = 1e-15);
    }

    #[test]
    fn aa_drift_without_jumps() {
        let m = cev_model(0.2, 0.8, 1.0, JumpParams::none());
        let (s, ds) = m.vol_at_proxy(0.1);
        let (mu, dmu) = m.drift_at_proxy(0.1);
        assert_relative_eq!(mu, -0.02, max_relative = 1e-15);
        assert_relative_eq!(dmu, -0.2 * ds, max_relative = 1e-15);
        assert_eq!(s, 0.2);
    }

    #[test]
    fn aa_drift_with_jumps() {
        let jumps = JumpParams::new(0.3, -0.08, 0.35).unwrap();
        let m = cev_model(0.25, 1.0, 100.0, jumps);
        let (mu, dmu) = m.drift_at_proxy(0.5);
        let expected = 0.3 * (1.0 - (-0.08f64 + 0.06125).exp()) - 0.03125;
        assert_relative_eq!(mu, expected, max_relative = 1e-14);
        assert_eq!(dmu, 0.0);
    }

    #[test]
    fn normal_drift_is_minus_lambda_eta() {
        let jumps = JumpParams::new(0.3, -0.08, 0.35).unwrap();
        let m = ModelSpec::normal(
            PiecewiseCurve::constant(20.0),
            PiecewiseCurve::constant(0.5),
            jumps,
            MarketEnv::flat(100.0, 0.0, 0.0).unwrap(),
        )
        .unwrap();
        let (mu, dmu) = m.drift_at_proxy(1.0);
        assert_relative_eq!(mu, 0.024, max_relative = 1e-14);
        assert_eq!(dmu, 0.0);
    }

    #[test]
    fn jump_size_scale() {
        let j = JumpParams::new(0.3, -0.08, 0.35).unwrap();
        assert_eq!(j.size_scale(), 0.08 + 0.35);
        assert!(JumpParams::new(-0.1, 0.0, 0.1).is_err());
        assert!(JumpParams::new(0.1, 0.0, -0.1).is_err());
    }

    #[test]
    fn json_round_trip_and_field_paths() {
        let text = r#"{"variant":"log_aa","spot":100,
            "rate":{"times":[1],"values":[0.04]},
            "dividend":{"times":[1],"values":[0.0]},
            "nu":{"times":[0.5,1],"values":[0.25,0.24]},
            "beta":{"times":[1],"values":[0.9]},
            "jumps":{"lambda":0.3,"eta":-0.08,"gamma":0.35}}"#;
        let m = ModelSpec::from_json_str(text).unwrap();
        assert_eq!(m.variant(), Variant::LogAssetAa);
        let back = ModelSpec::from_json_str(&m.to_json_value().to_string()).unwrap();
        assert_eq!(back, m);

        let bad = text.replace("\"lambda\":0.3", "\"lambda\":\"x\"");
        let err = ModelSpec::from_json_str(&bad).unwrap_err();
        assert_eq!(err.path, "jumps.lambda");

        let bad = text.replace("[0.5,1]", "[1,0.5]");
        let err = ModelSpec::from_json_str(&bad).unwrap_err();
        assert_eq!(err.path, "nu");

        let missing = text.replace("\"beta\"", "\"betx\"");
        assert!(ModelSpec::from_json_str(&missing).is_err());
    }

    #[test]
    fn proxy_curves_share_grid() {
        let nu = PiecewiseCurve::new(vec![0.5, 1.0], vec![0.25, 0.2]).unwrap();
        let beta = PiecewiseCurve::new(vec![0.25, 2.0], vec![0.9, 0.8]).unwrap();
        let m = ModelSpec::log_aa(
            CevLocalVol::new(nu, beta).unwrap(),
            JumpParams::none(),
            MarketEnv::flat(1.0, 0.0, 0.0).unwrap(),
        );
        let pc = m.proxy_curves(0.75);
        assert_eq!(pc.grid, vec![0.25, 0.5, 0.75]);
        assert_eq!(pc.sigma, vec![0.25, 0.25, 0.2]);
        assert_relative_eq!(pc.dsigma[2], -0.2 * 0.2, max_relative = 1e-15);
    }
}
