//! Second-order expansion of `E[h(X_T)]` around the Merton proxy.
//!
//! ```text
//! E[h(X_T)] ≈ E[h(X^M_T)] + Σᵢ αᵢ G^h_i(X^M_T) + Σᵢ βᵢ G^h_i(X^M_T + Y')
//!
//! α₁ = ∫ μ_t ∫ₜᵀ μ⁽¹⁾            β₁ = λη ∫ t μ⁽¹⁾
//! α₂ = ∫ σ²_t ∫ₜᵀ μ⁽¹⁾ + μ_t ∫ₜᵀ σσ⁽¹⁾   β₂ = λ ∫ t (γ² μ⁽¹⁾ + η σσ⁽¹⁾)
//! α₃ = ∫ σ²_t ∫ₜᵀ σσ⁽¹⁾           β₃ = λγ² ∫ t σσ⁽¹⁾
//! ```
//!
//! All coefficients are evaluated at the proxy point `x₀`. Three engines are
//! provided: exact integration of step functions (a backward sweep), the
//! forward recursion over buckets used by the calibrator, and Gauss–Legendre
//! quadrature for smooth time dependence.

use serde::Serialize;

use crate::analytic::{merton_greek, merton_price, DealTerms, ProxyLaw};
use crate::error::{Error, Result};
use crate::model::{merged_grid, JumpParams, ModelSpec, Payoff, PiecewiseCurve, Variant};
use crate::quadrature::GaussLegendre;

/// Default number of Gauss–Legendre nodes for smooth coefficients.
pub const DEFAULT_QUADRATURE_NODES: usize = 32;

/// Running correction coefficients and the integrals `ω₁ = ∫σ²`, `ω₂ = ∫μ`
/// up to time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ExpansionState {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub omega1: f64,
    pub omega2: f64,
    pub t: f64,
}

/// Constant proxy-point coefficients on one bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketCoefficients {
    pub sigma: f64,
    pub dsigma: f64,
    pub mu: f64,
    pub dmu: f64,
}

impl ExpansionState {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Extend the state over `(self.t, end]` on which the coefficients are
    /// constant.
    pub fn extend(&self, end: f64, c: BucketCoefficients, jumps: &JumpParams) -> Self {
        let dt = end - self.t;
        let half_dt2 = 0.5 * dt * dt;
        let half_dsq = 0.5 * (end * end - self.t * self.t);
        let ssd = c.sigma * c.dsigma;
        let s2 = c.sigma * c.sigma;
        let (lambda, eta, g2) = (jumps.lambda(), jumps.eta(), jumps.gamma().powi(2));
        Self {
            alpha: [
                self.alpha[0] + dt * c.dmu * self.omega2 + half_dt2 * c.mu * c.dmu,
                self.alpha[1] + dt * (c.dmu * self.omega1 + ssd * self.omega2) + half_dt2 * (s2 * c.dmu + c.mu * ssd),
                self.alpha[2] + dt * ssd * self.omega1 + half_dt2 * s2 * ssd,
            ],
            beta: [
                self.beta[0] + lambda * eta * half_dsq * c.dmu,
                self.beta[1] + lambda * half_dsq * (g2 * c.dmu + eta * ssd),
                self.beta[2] + lambda * g2 * half_dsq * ssd,
            ],
            omega1: self.omega1 + dt * s2,
            omega2: self.omega2 + dt * c.mu,
            t: end,
        }
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn beta_sum(&self) -> f64 {
        self.beta.iter().sum()
    }

    /// Every correction coefficient multiplied by `factor`.
    pub fn scale_corrections(&self, factor: f64) -> Self {
        Self {
            alpha: self.alpha.map(|a| a * factor),
            beta: self.beta.map(|b| b * factor),
            ..*self
        }
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidPayoff(format!("horizon must be > 0, got {horizon}")));
    }
    Ok(())
}

/// Exact integration of the coefficient integrals for step-function inputs on
/// the merged breakpoint grid, sweeping backwards so the inner tails
/// `∫ₜᵀ` accumulate from the horizon.
pub fn coefficients_direct(
    sigma: &PiecewiseCurve,
    dsigma: &PiecewiseCurve,
    mu: &PiecewiseCurve,
    dmu: &PiecewiseCurve,
    jumps: &JumpParams,
    horizon: f64,
) -> Result<ExpansionState> {
    check_horizon(horizon)?;
    let grid = merged_grid(&[sigma, dsigma, mu, dmu], horizon);
    let (lambda, eta, g2) = (jumps.lambda(), jumps.eta(), jumps.gamma().powi(2));
    let mut st = ExpansionState {
        t: horizon,
        ..Default::default()
    };
    let mut tail_dmu = 0.0;
    let mut tail_ssd = 0.0;
    for i in (0..grid.len()).rev() {
        let b = grid[i];
        let a = if i == 0 { 0.0 } else { grid[i - 1] };
        let (s, ds, m, dm) = (sigma.value_at(b), dsigma.value_at(b), mu.value_at(b), dmu.value_at(b));
        let w = b - a;
        let ssd = s * ds;
        // ∫_a^b ∫_t^T g = g w²/2 + tail(b) w
        let inner_dmu = dm * 0.5 * w * w + tail_dmu * w;
        let inner_ssd = ssd * 0.5 * w * w + tail_ssd * w;
        st.alpha[0] += m * inner_dmu;
        st.alpha[1] += s * s * inner_dmu + m * inner_ssd;
        st.alpha[2] += s * s * inner_ssd;
        let tw = 0.5 * (b * b - a * a);
        st.beta[0] += lambda * eta * dm * tw;
        st.beta[1] += lambda * (g2 * dm + eta * ssd) * tw;
        st.beta[2] += lambda * g2 * ssd * tw;
        st.omega1 += s * s * w;
        st.omega2 += m * w;
        tail_dmu += dm * w;
        tail_ssd += ssd * w;
    }
    Ok(st)
}

/// Forward recursion over buckets. All four curves must share one breakpoint
/// grid and `horizon` must be one of its breakpoints.
pub fn coefficients_recursive(
    sigma: &PiecewiseCurve,
    dsigma: &PiecewiseCurve,
    mu: &PiecewiseCurve,
    dmu: &PiecewiseCurve,
    jumps: &JumpParams,
    horizon: f64,
) -> Result<ExpansionState> {
    check_horizon(horizon)?;
    let grid = sigma.times();
    for (name, c) in [("dsigma", dsigma), ("mu", mu), ("dmu", dmu)] {
        if c.times() != grid {
            return Err(Error::GridMismatch(format!("{name} does not share the sigma grid")));
        }
    }
    let last = grid
        .iter()
        .position(|&t| t == horizon)
        .ok_or_else(|| Error::GridMismatch(format!("horizon {horizon} is not a breakpoint")))?;
    let mut st = ExpansionState::zero();
    for (i, &end) in grid[..=last].iter().enumerate() {
        let c = BucketCoefficients {
            sigma: sigma.values()[i],
            dsigma: dsigma.values()[i],
            mu: mu.values()[i],
            dmu: dmu.values()[i],
        };
        st = st.extend(end, c, jumps);
    }
    Ok(st)
}

/// Smooth time-dependent proxy coefficients.
pub struct SmoothCoefficients<'a> {
    pub sigma: &'a dyn Fn(f64) -> f64,
    pub dsigma: &'a dyn Fn(f64) -> f64,
    pub mu: &'a dyn Fn(f64) -> f64,
    pub dmu: &'a dyn Fn(f64) -> f64,
}

/// Gauss–Legendre evaluation of the coefficient integrals; inner tails
/// `∫ₜᵀ` are integrated with the same rule on `[t, T]` at every outer node.
pub fn coefficients_quadrature(
    f: &SmoothCoefficients<'_>,
    jumps: &JumpParams,
    horizon: f64,
    nodes: usize,
) -> Result<ExpansionState> {
    check_horizon(horizon)?;
    if nodes < 2 {
        return Err(Error::InvalidModel(format!("quadrature needs >= 2 nodes, got {nodes}")));
    }
    let gl = GaussLegendre::new(nodes);
    let ssd = |t: f64| (f.sigma)(t) * (f.dsigma)(t);
    let (lambda, eta, g2) = (jumps.lambda(), jumps.eta(), jumps.gamma().powi(2));
    let mut st = ExpansionState {
        t: horizon,
        ..Default::default()
    };
    for (t, w) in gl.points(0.0, horizon) {
        let (s, m, dm) = ((f.sigma)(t), (f.mu)(t), (f.dmu)(t));
        let tail_dmu = gl.integrate(t, horizon, |u| (f.dmu)(u));
        let tail_ssd = gl.integrate(t, horizon, ssd);
        st.alpha[0] += w * m * tail_dmu;
        st.alpha[1] += w * (s * s * tail_dmu + m * tail_ssd);
        st.alpha[2] += w * s * s * tail_ssd;
        let sd = ssd(t);
        st.beta[0] += w * lambda * eta * t * dm;
        st.beta[1] += w * lambda * t * (g2 * dm + eta * sd);
        st.beta[2] += w * lambda * g2 * t * sd;
        st.omega1 += w * s * s;
        st.omega2 += w * m;
    }
    Ok(st)
}

/// The log-asset AA coefficients through `A = ∫ t σσ⁽¹⁾` and
/// `B = ∫ σ²_t ∫ₜᵀ σσ⁽¹⁾`:
///
/// ```text
/// α = (B/2 + cA, -3B/2 - cA, B),  β = (-ληA, λ(η - γ²)A, λγ²A),  c = λ(e^{η+γ²/2} - 1)
/// ```
pub fn coefficients_aa(model: &ModelSpec, horizon: f64) -> Result<ExpansionState> {
    if model.variant() != Variant::LogAssetAa {
        return Err(Error::WrongVariant { expected: "log_aa" });
    }
    check_horizon(horizon)?;
    let grid = merged_grid(&model.vol_curves(), horizon);
    let (mut a_int, mut b_int, mut omega1, mut omega2) = (0.0, 0.0, 0.0, 0.0);
    let mut tail = 0.0;
    for i in (0..grid.len()).rev() {
        let b = grid[i];
        let a = if i == 0 { 0.0 } else { grid[i - 1] };
        let w = b - a;
        let (s, ds) = model.vol_at_proxy(b);
        let (m, _) = model.drift_at_proxy(b);
        let ssd = s * ds;
        a_int += ssd * 0.5 * (b * b - a * a);
        b_int += s * s * (ssd * 0.5 * w * w + tail * w);
        tail += ssd * w;
        omega1 += s * s * w;
        omega2 += m * w;
    }
    let j = model.jumps();
    let (lambda, eta, g2) = (j.lambda(), j.eta(), j.gamma().powi(2));
    let c = lambda * (j.mean_exp_jump() - 1.0);
    Ok(ExpansionState {
        alpha: [0.5 * b_int + c * a_int, -1.5 * b_int - c * a_int, b_int],
        beta: [-lambda * eta * a_int, lambda * (eta - g2) * a_int, lambda * g2 * a_int],
        omega1,
        omega2,
        t: horizon,
    })
}

/// Proxy price plus the two Greek-weighted corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceBreakdown {
    pub merton_term: f64,
    pub diffusion_correction: f64,
    pub jump_correction: f64,
    pub total: f64,
}

impl PriceBreakdown {
    fn new(merton_term: f64, diffusion_correction: f64, jump_correction: f64) -> Self {
        Self {
            merton_term,
            diffusion_correction,
            jump_correction,
            total: merton_term + diffusion_correction + jump_correction,
        }
    }
}

/// Price from precomputed coefficients; `x0` is the initial state.
pub fn price_from_state(
    state: &ExpansionState,
    x0: f64,
    jumps: &JumpParams,
    deal: &DealTerms,
) -> Result<PriceBreakdown> {
    let law = ProxyLaw {
        base_mean: x0 + state.omega2,
        base_var: state.omega1,
        jumps: *jumps,
        horizon: state.t,
    };
    let merton = merton_price(&law, deal)?;
    let mut diffusion = 0.0;
    let mut jump = 0.0;
    for i in 0..3 {
        if state.alpha[i] != 0.0 {
            diffusion += state.alpha[i] * merton_greek(i + 1, &law, deal, false)?;
        }
        if state.beta[i] != 0.0 {
            jump += state.beta[i] * merton_greek(i + 1, &law, deal, true)?;
        }
    }
    Ok(PriceBreakdown::new(merton, diffusion, jump))
}

/// Coefficients of `model` up to `horizon` via the bucket recursion.
pub fn model_coefficients(model: &ModelSpec, horizon: f64) -> Result<ExpansionState> {
    let pc = model.proxy_curves(horizon);
    if let Some(s) = pc.sigma.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::InvalidModel(format!(
            "local volatility must be > 0 at the proxy point, got {s}"
        )));
    }
    let [s, ds, m, dm] = pc.into_curves()?;
    coefficients_recursive(&s, &ds, &m, &dm, model.jumps(), horizon)
}

/// Expansion price of `payoff` under `model`. A zero maturity returns the
/// intrinsic value at the initial state.
pub fn approx_price(model: &ModelSpec, payoff: &Payoff) -> Result<PriceBreakdown> {
    let deal = DealTerms::new(model, *payoff);
    let t = payoff.maturity();
    let x0 = model.initial_state(t);
    if t == 0.0 {
        return Ok(PriceBreakdown::new(deal.payoff_value(x0), 0.0, 0.0));
    }
    let state = model_coefficients(model, t)?;
    price_from_state(&state, x0, model.jumps(), &deal)
}

/// Size constants of the model data and the shapes of the error envelopes for
/// smooth, vanilla and binary payoffs. Envelopes carry an unknown
/// multiplicative constant and are only comparable across parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub m0: f64,
    pub m1: f64,
    pub mj: f64,
    pub sigma_inf: f64,
    pub maturity: f64,
    pub lambda: f64,
    /// `(M₀√T)²`
    pub diffusion_scale: f64,
    /// `M_J²√(λT)`
    pub jump_scale: f64,
    pub smooth_envelope: f64,
    pub vanilla_envelope: f64,
    pub binary_envelope: f64,
}

pub fn diagnostics(model: &ModelSpec, horizon: f64) -> Result<Diagnostics> {
    check_horizon(horizon)?;
    let pc = model.proxy_curves(horizon);
    let mut m1: f64 = 0.0;
    let mut level: f64 = 0.0;
    let mut sigma_inf = f64::INFINITY;
    for i in 0..pc.grid.len() {
        m1 = m1.max(pc.dsigma[i].abs() + pc.dmu[i].abs());
        level = level.max(pc.sigma[i].abs() + pc.mu[i].abs());
        sigma_inf = sigma_inf.min(pc.sigma[i]);
    }
    let m0 = m1.max(level);
    let mj = model.jumps().size_scale();
    let lambda = model.jumps().lambda();
    let diffusion_scale = m0 * m0 * horizon;
    let jump_scale = mj * mj * (lambda * horizon).sqrt();
    let smooth = m1 * horizon.sqrt() * (diffusion_scale + jump_scale);
    let ratio = m1 / sigma_inf;
    Ok(Diagnostics {
        m0,
        m1,
        mj,
        sigma_inf,
        maturity: horizon,
        lambda,
        diffusion_scale,
        jump_scale,
        smooth_envelope: smooth,
        vanilla_envelope: smooth * m0 / sigma_inf,
        binary_envelope: (ratio + ratio * ratio) * (diffusion_scale + jump_scale),
    })
}
