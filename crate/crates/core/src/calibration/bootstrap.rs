//! Sequential per-maturity calibration of piecewise CEV parameters, nested
//! inside a search over the jump parameters.
//!
//! Each bucket `(T_{i-1}, T_i]` is fitted with its own two-parameter LM
//! problem. The expansion state at `T_{i-1}` is carried forward and extended
//! by one bucket per trial point, so fitting bucket `i` never revisits earlier
//! buckets. Inside a bucket the solver works on the proxy volatility
//! `σᵢ = νᵢ e^{(βᵢ-1)x₀}` and `βᵢ`, which is better conditioned than `(νᵢ, βᵢ)`
//! and maps one-to-one onto it.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, Bounds, LeastSquares, LmConfig, LmResult, LmStatus};
use crate::analytic::{implied_vol, DealTerms};
use crate::error::{Error, Result};
use crate::expansion::{approx_price, price_from_state, BucketCoefficients, ExpansionState};
use crate::model::{drift_from_vol, CevLocalVol, JumpParams, MarketEnv, ModelSpec, Payoff, PiecewiseCurve, Variant};

/// One implied-volatility quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub maturity: f64,
    pub strike: f64,
    pub implied_vol: f64,
}

/// Quotes sharing one maturity, sorted by strike.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub maturity: f64,
    pub strikes: Vec<f64>,
    pub vols: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolSurface {
    env: MarketEnv,
    slices: Vec<Slice>,
}

impl VolSurface {
    pub fn new(mut quotes: Vec<Quote>, env: MarketEnv) -> Result<Self> {
        if quotes.is_empty() {
            return Err(Error::Calibration("the surface has no quotes".into()));
        }
        for q in &quotes {
            let ok = q.maturity > 0.0
                && q.maturity.is_finite()
                && q.strike > 0.0
                && q.strike.is_finite()
                && q.implied_vol > 0.0
                && q.implied_vol.is_finite();
            if !ok {
                return Err(Error::Calibration(format!("invalid quote {q:?}")));
            }
        }
        quotes.sort_by(|a, b| a.maturity.total_cmp(&b.maturity).then(a.strike.total_cmp(&b.strike)));
        let mut slices: Vec<Slice> = Vec::new();
        for q in quotes {
            match slices.last_mut() {
                Some(s) if s.maturity == q.maturity => {
                    if s.strikes.last() == Some(&q.strike) {
                        return Err(Error::Calibration(format!(
                            "duplicate quote at maturity {} strike {}",
                            q.maturity, q.strike
                        )));
                    }
                    s.strikes.push(q.strike);
                    s.vols.push(q.implied_vol);
                }
                _ => slices.push(Slice {
                    maturity: q.maturity,
                    strikes: vec![q.strike],
                    vols: vec![q.implied_vol],
                }),
            }
        }
        Ok(Self { env, slices })
    }

    pub fn env(&self) -> &MarketEnv {
        &self.env
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn maturities(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.maturity).collect()
    }

    pub fn n_quotes(&self) -> usize {
        self.slices.iter().map(|s| s.strikes.len()).sum()
    }

    pub fn quotes(&self) -> impl Iterator<Item = Quote> + '_ {
        self.slices.iter().flat_map(|s| {
            s.strikes.iter().zip(&s.vols).map(|(&strike, &implied_vol)| Quote {
                maturity: s.maturity,
                strike,
                implied_vol,
            })
        })
    }
}

/// `[lower, upper]` per jump parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpBounds {
    pub lambda: [f64; 2],
    pub eta: [f64; 2],
    pub gamma: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterConfig {
    pub max_iter: usize,
    /// Relative objective decrease below which the jump search stops.
    pub tol: f64,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibConfig {
    /// `[λ, η, γ]` starting point of the jump search.
    pub jump_init: [f64; 3],
    pub jump_bounds: JumpBounds,
    /// When false the jumps stay at `jump_init` and only the bootstrap runs.
    pub fit_jumps: bool,
    /// Box on the proxy volatility `ν e^{(β-1)x₀}` of each bucket.
    pub vol_bounds: [f64; 2],
    pub beta_bounds: [f64; 2],
    /// Settings of the per-bucket fits.
    pub lm: LmConfig,
    pub outer: OuterConfig,
    /// Extra jump-search starts drawn by Latin hypercube over the jump box.
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            jump_init: [0.05, -0.10, 0.30],
            jump_bounds: JumpBounds {
                lambda: [0.0, 3.0],
                eta: [-1.0, 0.5],
                gamma: [0.0, 1.5],
            },
            fit_jumps: true,
            vol_bounds: [1e-4, 3.0],
            beta_bounds: [-1.0, 3.0],
            lm: LmConfig::default(),
            outer: OuterConfig::default(),
            restarts: 0,
            restart_seed: 0,
        }
    }
}

impl CalibConfig {
    fn jump_box(&self) -> Result<Bounds> {
        let b = &self.jump_bounds;
        if b.lambda[0] < 0.0 || b.gamma[0] < 0.0 {
            return Err(Error::Calibration("lambda and gamma bounds must be >= 0".into()));
        }
        Bounds::new(
            vec![b.lambda[0], b.eta[0], b.gamma[0]],
            vec![b.lambda[1], b.eta[1], b.gamma[1]],
        )
    }

    fn bucket_box(&self) -> Result<Bounds> {
        if !(self.vol_bounds[0] > 0.0) {
            return Err(Error::Calibration("the volatility lower bound must be > 0".into()));
        }
        Bounds::new(
            vec![self.vol_bounds[0], self.beta_bounds[0]],
            vec![self.vol_bounds[1], self.beta_bounds[1]],
        )
    }
}

/// Fitted parameters of one bucket and the state at its right end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketFit {
    pub nu: f64,
    pub beta: f64,
    pub state: ExpansionState,
    /// Model minus market implied volatility per strike, in vol units.
    pub residuals: Vec<f64>,
    pub status: Option<LmStatus>,
    pub degraded: bool,
}

struct BucketProblem<'a> {
    state_in: ExpansionState,
    maturity: f64,
    x0: f64,
    jumps: JumpParams,
    slice: &'a Slice,
    deals: Vec<DealTerms>,
    forward: f64,
    beta_fixed: Option<f64>,
}

impl<'a> BucketProblem<'a> {
    fn new(surface: &'a VolSurface, index: usize, state_in: ExpansionState, jumps: JumpParams) -> Result<Self> {
        let slice = &surface.slices[index];
        let t = slice.maturity;
        let forward = surface.env.forward(t);
        // any CEV curve will do: deal terms only read the market environment
        let template = ModelSpec::log_aa(
            CevLocalVol::new(PiecewiseCurve::constant(1.0), PiecewiseCurve::constant(1.0))?,
            jumps,
            surface.env.clone(),
        );
        let deals = slice
            .strikes
            .iter()
            .map(|&k| {
                let p = if k < forward {
                    Payoff::put(k, t)
                } else {
                    Payoff::call(k, t)
                }?;
                Ok(DealTerms::new(&template, p))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            state_in,
            maturity: t,
            x0: surface.env.spot().ln(),
            jumps,
            slice,
            deals,
            forward,
            beta_fixed: None,
        })
    }

    fn state(&self, sigma: f64, beta: f64) -> ExpansionState {
        let dsigma = (beta - 1.0) * sigma;
        let (mu, dmu) = drift_from_vol(Variant::LogAssetAa, &self.jumps, sigma, dsigma);
        self.state_in.extend(
            self.maturity,
            BucketCoefficients { sigma, dsigma, mu, dmu },
            &self.jumps,
        )
    }

    fn unpack(&self, x: &[f64]) -> (f64, f64) {
        match self.beta_fixed {
            Some(b) => (x[0], b),
            None => (x[0], x[1]),
        }
    }

    fn nu(&self, sigma: f64, beta: f64) -> f64 {
        sigma * (-(beta - 1.0) * self.x0).exp()
    }
}

impl LeastSquares for BucketProblem<'_> {
    fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let (sigma, beta) = self.unpack(x);
        let state = self.state(sigma, beta);
        self.deals
            .iter()
            .zip(&self.slice.vols)
            .map(|(deal, &market)| {
                let price = price_from_state(&state, self.x0, &self.jumps, deal)?.total;
                Ok(implied_vol(price, deal, self.forward)? - market)
            })
            .collect()
    }
}

fn atm_vol(slice: &Slice, forward: f64) -> f64 {
    let mut best = 0;
    for (i, k) in slice.strikes.iter().enumerate() {
        if (k - forward).abs() < (slice.strikes[best] - forward).abs() {
            best = i;
        }
    }
    slice.vols[best]
}

/// Fit `(νᵢ, βᵢ)` of bucket `index` given the exact state at the previous
/// maturity. `init` is the starting `(ν, β)`; `None` starts from the ATM vol
/// with `β = 1`. With fewer than two strikes `β` stays at its starting value.
pub fn fit_bucket(
    index: usize,
    state_in: &ExpansionState,
    surface: &VolSurface,
    jumps: &JumpParams,
    config: &CalibConfig,
    init: Option<(f64, f64)>,
) -> Result<BucketFit> {
    let mut problem = BucketProblem::new(surface, index, *state_in, *jumps)?;
    let bounds = config.bucket_box()?;
    let atm = (atm_vol(problem.slice, problem.forward), 1.0);
    let mut starts = vec![init.unwrap_or(atm)];
    if init.is_some() {
        starts.push(atm);
    }
    let mut last_err = None;
    for (nu, beta) in starts {
        let beta = beta.clamp(bounds.lower[1], bounds.upper[1]);
        let sigma = nu * ((beta - 1.0) * problem.x0).exp();
        let outcome: Result<LmResult> = if problem.slice.strikes.len() < 2 {
            problem.beta_fixed = Some(beta);
            let b1 = Bounds::new(vec![bounds.lower[0]], vec![bounds.upper[0]])?;
            levenberg_marquardt(&mut problem, &[sigma], &b1, &config.lm)
        } else {
            problem.beta_fixed = None;
            levenberg_marquardt(&mut problem, &[sigma, beta], &bounds, &config.lm)
        };
        match outcome {
            Ok(res) => {
                let (s, b) = problem.unpack(&res.x);
                return Ok(BucketFit {
                    nu: problem.nu(s, b),
                    beta: b,
                    state: problem.state(s, b),
                    degraded: !res.converged(),
                    status: Some(res.status),
                    residuals: res.residuals,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one start"))
}

/// Result of one pass over all maturities with fixed jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub buckets: Vec<BucketFit>,
}

impl Bootstrap {
    pub fn residuals(&self) -> Vec<f64> {
        self.buckets.iter().flat_map(|b| b.residuals.iter().copied()).collect()
    }

    pub fn objective(&self) -> f64 {
        self.residuals().iter().map(|r| r * r).sum()
    }

    fn params(&self) -> Vec<(f64, f64)> {
        self.buckets.iter().map(|b| (b.nu, b.beta)).collect()
    }
}

/// Fit every bucket in maturity order with the jumps held fixed. `warm`
/// optionally supplies starting `(ν, β)` per bucket; otherwise each bucket
/// starts from the previous bucket's fit. A bucket that cannot be evaluated
/// keeps its starting point, is flagged, and carries NaN residuals; only a
/// failure of the first bucket is fatal.
pub fn bootstrap(
    surface: &VolSurface,
    jumps: &JumpParams,
    config: &CalibConfig,
    warm: Option<&[(f64, f64)]>,
) -> Result<Bootstrap> {
    let mut state = ExpansionState::zero();
    let mut buckets: Vec<BucketFit> = Vec::with_capacity(surface.slices.len());
    for i in 0..surface.slices.len() {
        let init = warm
            .and_then(|w| w.get(i).copied())
            .or_else(|| buckets.last().map(|b| (b.nu, b.beta)));
        let fit = match fit_bucket(i, &state, surface, jumps, config, init) {
            Ok(f) => f,
            Err(e) if i == 0 => return Err(e),
            Err(_) => {
                let (nu, beta) = init.expect("later buckets always have a start");
                let p = BucketProblem::new(surface, i, state, *jumps)?;
                let sigma = nu * ((beta - 1.0) * p.x0).exp();
                BucketFit {
                    nu,
                    beta,
                    state: p.state(sigma, beta),
                    residuals: vec![f64::NAN; p.slice.strikes.len()],
                    status: None,
                    degraded: true,
                }
            }
        };
        state = fit.state;
        buckets.push(fit);
    }
    Ok(Bootstrap { buckets })
}

/// Model implied volatilities of every quote, priced from scratch.
pub fn model_vols(model: &ModelSpec, surface: &VolSurface) -> Result<Vec<f64>> {
    surface
        .quotes()
        .map(|q| {
            let forward = surface.env.forward(q.maturity);
            let payoff = if q.strike < forward {
                Payoff::put(q.strike, q.maturity)
            } else {
                Payoff::call(q.strike, q.maturity)
            }?;
            let price = approx_price(model, &payoff)?.total;
            implied_vol(price, &DealTerms::new(model, payoff), forward)
        })
        .collect()
}

/// Per-quote fit quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuoteResidual {
    pub maturity: f64,
    pub strike: f64,
    pub market_vol: f64,
    pub model_vol: f64,
    pub residual_bp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub jumps: JumpParams,
    pub nu: PiecewiseCurve,
    pub beta: PiecewiseCurve,
    pub residuals: Vec<QuoteResidual>,
    /// Sum of squared implied-vol residuals.
    pub objective: f64,
    /// Objective after every accepted step of the jump search.
    pub trace: Vec<f64>,
    pub outer_status: Option<LmStatus>,
    pub wall_time_secs: f64,
    pub flags: Vec<String>,
    #[serde(skip)]
    env: MarketEnv,
}

impl CalibrationResult {
    /// The calibrated model, directly usable for pricing.
    pub fn model(&self) -> Result<ModelSpec> {
        Ok(ModelSpec::log_aa(
            CevLocalVol::new(self.nu.clone(), self.beta.clone())?,
            self.jumps,
            self.env.clone(),
        ))
    }

    pub fn max_abs_residual_bp(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual_bp.abs()).fold(0.0, f64::max)
    }

    /// Bucket starting points for a warm restart.
    pub fn bucket_params(&self) -> Vec<(f64, f64)> {
        self.nu
            .values()
            .iter()
            .copied()
            .zip(self.beta.values().iter().copied())
            .collect()
    }
}

struct JumpSearch<'a> {
    surface: &'a VolSurface,
    config: &'a CalibConfig,
    warm: Option<Vec<(f64, f64)>>,
    last: Option<(Vec<f64>, Bootstrap)>,
    accepted: Option<Bootstrap>,
}

fn jumps_from(x: &[f64]) -> Result<JumpParams> {
    JumpParams::new(x[0], x[1], x[2])
}

impl LeastSquares for JumpSearch<'_> {
    fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let b = bootstrap(self.surface, &jumps_from(x)?, self.config, self.warm.as_deref())?;
        let r = b.residuals();
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Calibration("a maturity bucket failed to evaluate".into()));
        }
        self.last = Some((x.to_vec(), b));
        Ok(r)
    }

    fn accepted(&mut self, x: &[f64], _residuals: &[f64]) {
        if let Some((lx, b)) = &self.last {
            if lx == x {
                self.warm = Some(b.params());
                self.accepted = Some(b.clone());
            }
        }
    }
}

struct SearchOutcome {
    jumps: JumpParams,
    fit: Bootstrap,
    trace: Vec<f64>,
    status: Option<LmStatus>,
}

fn search_from(
    surface: &VolSurface,
    config: &CalibConfig,
    start: [f64; 3],
    warm: Option<Vec<(f64, f64)>>,
) -> Result<SearchOutcome> {
    let bounds = config.jump_box()?;
    let mut problem = JumpSearch {
        surface,
        config,
        warm,
        last: None,
        accepted: None,
    };
    let lm = LmConfig {
        max_iter: config.outer.max_iter,
        grad_tol: 0.0,
        cost_rtol: config.outer.tol,
        ..config.lm
    };
    let res = levenberg_marquardt(&mut problem, &start, &bounds, &lm)?;
    let fit = problem.accepted.expect("the starting point is always accepted");
    Ok(SearchOutcome {
        jumps: jumps_from(&res.x)?,
        fit,
        trace: res.trace,
        status: Some(res.status),
    })
}

fn latin_hypercube(bounds: &Bounds, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![[0.0; 3]; n];
    for d in 0..3 {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            p[d] = bounds.lower[d] + u * (bounds.upper[d] - bounds.lower[d]);
        }
    }
    pts
}

/// Calibrate jumps and per-maturity CEV parameters to `surface`.
pub fn bootstrap_calibrate(surface: &VolSurface, config: &CalibConfig) -> Result<CalibrationResult> {
    calibrate_from(surface, config, None)
}

/// As [`bootstrap_calibrate`], starting from a previous result's jumps and
/// bucket parameters.
pub fn recalibrate(
    surface: &VolSurface,
    config: &CalibConfig,
    previous: &CalibrationResult,
) -> Result<CalibrationResult> {
    let j = previous.jumps;
    let cfg = CalibConfig {
        jump_init: [j.lambda(), j.eta(), j.gamma()],
        ..*config
    };
    calibrate_from(surface, &cfg, Some(previous.bucket_params()))
}

fn calibrate_from(
    surface: &VolSurface,
    config: &CalibConfig,
    warm: Option<Vec<(f64, f64)>>,
) -> Result<CalibrationResult> {
    let clock = Instant::now();
    let jump_box = config.jump_box()?;
    config.bucket_box()?;
    let mut init = config.jump_init.to_vec();
    jump_box.project(&mut init);
    let init = [init[0], init[1], init[2]];

    let best = if config.fit_jumps {
        let mut starts = vec![init];
        starts.extend(latin_hypercube(&jump_box, config.restarts, config.restart_seed));
        let outcomes: Vec<Result<SearchOutcome>> = starts
            .par_iter()
            .enumerate()
            .map(|(i, s)| search_from(surface, config, *s, if i == 0 { warm.clone() } else { None }))
            .collect();
        let mut best: Option<SearchOutcome> = None;
        let mut first_err = None;
        for o in outcomes {
            match o {
                Ok(o) => {
                    if best.as_ref().is_none_or(|b| o.fit.objective() < b.fit.objective()) {
                        best = Some(o);
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match best {
            Some(b) => b,
            None => return Err(first_err.expect("at least one start")),
        }
    } else {
        let jumps = jumps_from(&init)?;
        let fit = bootstrap(surface, &jumps, config, warm.as_deref())?;
        SearchOutcome {
            jumps,
            trace: vec![fit.objective()],
            fit,
            status: None,
        }
    };
    finish(surface, best, clock)
}

fn finish(surface: &VolSurface, out: SearchOutcome, clock: Instant) -> Result<CalibrationResult> {
    let maturities = surface.maturities();
    let nu = PiecewiseCurve::new(maturities.clone(), out.fit.buckets.iter().map(|b| b.nu).collect())?;
    let beta = PiecewiseCurve::new(maturities, out.fit.buckets.iter().map(|b| b.beta).collect())?;
    let mut flags = Vec::new();
    for (b, s) in out.fit.buckets.iter().zip(surface.slices()) {
        if b.degraded {
            flags.push(format!(
                "bucket ending at {}: degraded fit ({:?})",
                s.maturity, b.status
            ));
        }
    }
    if out.status == Some(LmStatus::MaxIter) {
        flags.push("jump search hit its iteration cap".into());
    }
    let residuals = surface
        .quotes()
        .zip(out.fit.residuals())
        .map(|(q, r)| QuoteResidual {
            maturity: q.maturity,
            strike: q.strike,
            market_vol: q.implied_vol,
            model_vol: q.implied_vol + r,
            residual_bp: r * 1e4,
        })
        .collect();
    Ok(CalibrationResult {
        jumps: out.jumps,
        nu,
        beta,
        residuals,
        objective: out.fit.objective(),
        trace: out.trace,
        outer_status: out.status,
        wall_time_secs: clock.elapsed().as_secs_f64(),
        flags,
        env: surface.env.clone(),
    })
}
