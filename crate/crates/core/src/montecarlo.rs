//! Euler Monte Carlo of the full dynamics, used as the reference pricer.
//!
//! Step endpoints include every curve breakpoint so piecewise coefficients are
//! exact per step. The compound Poisson increment of a step is sampled exactly
//! (Poisson count, then one Gaussian for the summed sizes); only the diffusion
//! carries discretisation bias. Each antithetic pair draws from its own
//! ChaCha stream indexed by the pair number, so estimates do not depend on how
//! work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::DealTerms;
use crate::error::{Error, Result};
use crate::model::{merged_grid, LocalVol, ModelSpec, Payoff};

/// Which dynamics to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dynamics {
    /// Local functions `σ(t, X)`, `μ(t, X)` evaluated along the path.
    #[default]
    Full,
    /// Coefficients frozen at the initial state (the Merton proxy).
    Proxy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: u64,
    pub n_steps_per_year: u32,
    pub seed: u64,
    pub antithetic: bool,
    pub dynamics: Dynamics,
    /// Cap on `n_paths × n_steps`.
    pub budget: u128,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 2_000_000,
            n_steps_per_year: 250,
            seed: 0,
            antithetic: true,
            dynamics: Dynamics::Full,
            budget: 20_000_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub price: f64,
    pub stderr: f64,
    pub n_paths_used: u64,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    dt: f64,
    sqrt_dt: f64,
    /// `ν` (CEV) or `σ_t` (explicit)
    level: f64,
    /// `β - 1` (CEV) or `σ⁽¹⁾_t` (explicit)
    slope: f64,
    jump_mean: f64,
    no_jump_prob: f64,
}

/// Simulated terminal states. With antithetic sampling consecutive entries
/// form a pair.
#[derive(Debug, Clone)]
pub struct TerminalSample {
    pub values: Vec<f64>,
    pub antithetic: bool,
    pub n_steps: usize,
}

fn time_grid(model: &ModelSpec, horizon: f64, steps_per_year: u32) -> Vec<f64> {
    let n = ((horizon * steps_per_year as f64).ceil() as usize).max(1);
    let uniform: Vec<f64> = (1..=n).map(|i| horizon * i as f64 / n as f64).collect();
    let mut grid = merged_grid(&model.vol_curves(), horizon);
    grid.extend(uniform);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn n_pairs(cfg: &McConfig) -> u64 {
    if cfg.antithetic {
        cfg.n_paths.div_ceil(2)
    } else {
        cfg.n_paths
    }
}

/// Poisson draw by inversion; cheap for the small per-step means used here.
fn poisson(rng: &mut ChaCha8Rng, mean: f64, p0: f64) -> u32 {
    let u: f64 = rng.random();
    if u < p0 {
        return 0;
    }
    let (mut k, mut p, mut cdf) = (0u32, p0, p0);
    while u >= cdf && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

/// Path-steps (`n_paths × time steps`) a simulation to `horizon` would use.
pub fn path_steps(model: &ModelSpec, horizon: f64, cfg: &McConfig) -> u128 {
    cfg.n_paths as u128 * time_grid(model, horizon, cfg.n_steps_per_year.max(1)).len() as u128
}

/// Terminal states of the model at `horizon`.
pub fn simulate_terminal(model: &ModelSpec, horizon: f64, cfg: &McConfig) -> Result<TerminalSample> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidPayoff(format!("horizon must be > 0, got {horizon}")));
    }
    if cfg.n_paths == 0 || cfg.n_steps_per_year == 0 {
        return Err(Error::InvalidModel("n_paths and n_steps_per_year must be >= 1".into()));
    }
    let grid = time_grid(model, horizon, cfg.n_steps_per_year);
    let requested = cfg.n_paths as u128 * grid.len() as u128;
    if requested > cfg.budget {
        return Err(Error::BudgetExceeded {
            requested,
            budget: cfg.budget,
        });
    }

    let jumps = *model.jumps();
    let x0 = model.initial_state(horizon);
    let proxy = cfg.dynamics == Dynamics::Proxy;
    let mut prev = 0.0;
    let steps: Vec<Step> = grid
        .iter()
        .map(|&t| {
            let dt = t - prev;
            prev = t;
            let (level, slope) = if proxy {
                (model.vol_at_proxy(t).0, 0.0)
            } else {
                match model.local_vol() {
                    LocalVol::Cev(c) => (c.nu().value_at(t), c.beta().value_at(t) - 1.0),
                    LocalVol::Explicit { sigma, dsigma } => (sigma.value_at(t), dsigma.value_at(t)),
                }
            };
            let jump_mean = jumps.lambda() * dt;
            Step {
                dt,
                sqrt_dt: dt.sqrt(),
                level,
                slope,
                jump_mean,
                no_jump_prob: (-jump_mean).exp(),
            }
        })
        .collect();

    let cev = !proxy && matches!(model.local_vol(), LocalVol::Cev(_));
    let sigma_at = move |s: &Step, x: f64| -> f64 {
        if proxy {
            s.level
        } else if cev {
            s.level * (s.slope * x).exp()
        } else {
            s.level + s.slope * (x - x0)
        }
    };
    let (eta, gamma) = (jumps.eta(), jumps.gamma());
    let log_asset = model.variant() == crate::model::Variant::LogAssetAa;
    let compensator = jumps.log_compensator();
    let normal_drift = -jumps.lambda() * jumps.eta();
    let drift = move |sigma: f64| {
        if log_asset {
            compensator - 0.5 * sigma * sigma
        } else {
            normal_drift
        }
    };

    let pairs = n_pairs(cfg);
    let width = if cfg.antithetic { 2 } else { 1 };
    let mut values = vec![0.0; (pairs as usize) * width];
    let seed = cfg.seed;
    let antithetic = cfg.antithetic;
    values
        .par_chunks_mut(width * 4096)
        .enumerate()
        .for_each(|(chunk, out)| {
            for (j, slot) in out.chunks_mut(width).enumerate() {
                let pair = chunk as u64 * 4096 + j as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(pair);
                let (mut xp, mut xm) = (x0, x0);
                for s in &steps {
                    let z: f64 = rng.sample(StandardNormal);
                    let k = if s.jump_mean > 0.0 {
                        poisson(&mut rng, s.jump_mean, s.no_jump_prob)
                    } else {
                        0
                    };
                    let jump = if k > 0 {
                        let g: f64 = rng.sample(StandardNormal);
                        k as f64 * eta + gamma * (k as f64).sqrt() * g
                    } else {
                        0.0
                    };
                    let sp = sigma_at(s, xp);
                    xp += sp * s.sqrt_dt * z + drift(sp) * s.dt + jump;
                    if antithetic {
                        let sm = sigma_at(s, xm);
                        xm += -sm * s.sqrt_dt * z + drift(sm) * s.dt + jump;
                    }
                }
                slot[0] = xp;
                if antithetic {
                    slot[1] = xm;
                }
            }
        });
    Ok(TerminalSample {
        values,
        antithetic,
        n_steps: steps.len(),
    })
}

/// Discounted payoff mean and standard error from a terminal sample; an
/// antithetic pair counts as one observation.
pub fn estimate(sample: &TerminalSample, deal: &DealTerms) -> McEstimate {
    let width = if sample.antithetic { 2 } else { 1 };
    let n = (sample.values.len() / width) as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for obs in sample.values.chunks(width) {
        let v = obs.iter().map(|&x| deal.payoff_value(x)).sum::<f64>() / width as f64;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n;
    let var = if n > 1.0 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    McEstimate {
        price: mean,
        stderr: (var / n).sqrt(),
        n_paths_used: sample.values.len() as u64,
    }
}

/// Monte Carlo prices of several payoffs sharing one maturity, from common
/// paths.
pub fn mc_price_strip(model: &ModelSpec, payoffs: &[Payoff], cfg: &McConfig) -> Result<Vec<McEstimate>> {
    let Some(first) = payoffs.first() else {
        return Ok(Vec::new());
    };
    let t = first.maturity();
    if payoffs.iter().any(|p| p.maturity() != t) {
        return Err(Error::InvalidPayoff(
            "all payoffs in a strip must share a maturity".into(),
        ));
    }
    let sample = simulate_terminal(model, t, cfg)?;
    Ok(payoffs
        .iter()
        .map(|p| estimate(&sample, &DealTerms::new(model, *p)))
        .collect())
}

pub fn mc_price(model: &ModelSpec, payoff: &Payoff, cfg: &McConfig) -> Result<McEstimate> {
    Ok(mc_price_strip(model, std::slice::from_ref(payoff), cfg)?[0])
}
