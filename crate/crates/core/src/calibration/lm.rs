//! Box-constrained Levenberg–Marquardt with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping above which a step is considered impossible.
const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub max_iter: usize,
    pub damping_init: f64,
    pub damping_factor: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    /// Zero disables the test.
    pub cost_rtol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            damping_init: 1e-3,
            damping_factor: 10.0,
            grad_tol: 1e-10,
            step_tol: 1e-12,
            cost_rtol: 0.0,
        }
    }
}

impl LmConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.damping_init > 0.0
            && self.damping_factor > 1.0
            && self.grad_tol >= 0.0
            && self.step_tol >= 0.0
            && self.cost_rtol >= 0.0;
        if !ok {
            return Err(Error::Calibration(format!("invalid LM settings {self:?}")));
        }
        Ok(())
    }
}

/// Per-coordinate box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Calibration(format!(
                "bounds must be well ordered, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// A least-squares problem. `accepted` is called with every point the solver
/// moves to, so stateful problems can warm-start from it.
pub trait LeastSquares {
    fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>>;

    fn accepted(&mut self, _x: &[f64], _residuals: &[f64]) {}
}

/// Adapter for plain residual closures.
pub struct FnProblem<F>(pub F);

impl<F: FnMut(&[f64]) -> Result<Vec<f64>>> LeastSquares for FnProblem<F> {
    fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        (self.0)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LmStatus {
    GradientTol,
    StepTol,
    CostTol,
    MaxIter,
    /// The damping overflowed without finding a descent step.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmResult {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    /// Cost at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: LmStatus,
}

impl LmResult {
    pub fn converged(&self) -> bool {
        !matches!(self.status, LmStatus::MaxIter)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Forward differences with step `1e-6 (1 + |x|)`, flipped to a backward
/// difference at an upper bound. Columns whose evaluation fails are zero.
fn jacobian<P: LeastSquares>(p: &mut P, x: &[f64], r: &[f64], bounds: &Bounds) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(r.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let mut h = 1e-6 * (1.0 + x[j].abs());
        if x[j] + h > bounds.upper[j] {
            h = -h;
        }
        xp[j] = x[j] + h;
        let h = xp[j] - x[j];
        if let Ok(rp) = p.residuals(&xp) {
            if rp.len() == r.len() {
                for i in 0..r.len() {
                    jac[(i, j)] = (rp[i] - r[i]) / h;
                }
            }
        }
        xp[j] = x[j];
    }
    jac
}

/// Minimise `Σ rᵢ(x)²` over the box. Coordinates sitting on a bound with the
/// gradient pushing outwards are frozen for the step; the step is projected
/// back into the box. Returns the best point seen.
pub fn levenberg_marquardt<P: LeastSquares>(
    problem: &mut P,
    x0: &[f64],
    bounds: &Bounds,
    cfg: &LmConfig,
) -> Result<LmResult> {
    cfg.validate()?;
    if bounds.len() != x0.len() {
        return Err(Error::Calibration(format!(
            "{} bounds for {} parameters",
            bounds.len(),
            x0.len()
        )));
    }
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut r = problem
        .residuals(&x)
        .map_err(|e| Error::InitialEvaluation(e.to_string()))?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InitialEvaluation(format!("non-finite residuals at {x:?}")));
    }
    problem.accepted(&x, &r);
    let mut cost = sum_sq(&r);
    let mut trace = vec![cost];
    let mut damping = cfg.damping_init;
    let mut iterations = 0;
    let n = x.len();

    let status = 'outer: loop {
        if iterations >= cfg.max_iter {
            break LmStatus::MaxIter;
        }
        let jac = jacobian(problem, &x, &r, bounds);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= bounds.lower[i] && grad[i] > 0.0) || (x[i] >= bounds.upper[i] && grad[i] < 0.0)))
            .collect();
        let pg = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max);
        if pg <= cfg.grad_tol {
            break LmStatus::GradientTol;
        }
        let jtj = jac.transpose() * &jac;
        let k = free.len();
        let max_diag = free.iter().map(|&i| jtj[(i, i)]).fold(0.0, f64::max);
        let floor = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
        loop {
            let mut a = DMatrix::zeros(k, k);
            let mut b = DVector::zeros(k);
            for (p, &i) in free.iter().enumerate() {
                b[p] = -grad[i];
                for (q, &j) in free.iter().enumerate() {
                    a[(p, q)] = jtj[(i, j)];
                }
                a[(p, p)] += damping * jtj[(i, i)].max(floor);
            }
            let delta = a.lu().solve(&b);
            let mut trial = x.clone();
            if let Some(d) = &delta {
                for (p, &i) in free.iter().enumerate() {
                    trial[i] += d[p];
                }
            }
            bounds.project(&mut trial);
            let step: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let xnorm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if delta.is_some() && step <= cfg.step_tol * (xnorm + cfg.step_tol) {
                break 'outer LmStatus::StepTol;
            }
            let candidate = if delta.is_some() {
                problem.residuals(&trial).ok().filter(|rt| rt.len() == r.len())
            } else {
                None
            };
            match candidate {
                Some(rt) if sum_sq(&rt) < cost => {
                    let new_cost = sum_sq(&rt);
                    let gain = cost - new_cost;
                    x = trial;
                    r = rt;
                    cost = new_cost;
                    trace.push(cost);
                    problem.accepted(&x, &r);
                    damping = (damping / cfg.damping_factor).max(1e-15);
                    iterations += 1;
                    if gain <= cfg.cost_rtol * (cost + gain) {
                        break 'outer LmStatus::CostTol;
                    }
                    break;
                }
                _ => {
                    damping *= cfg.damping_factor;
                    if damping > MAX_DAMPING {
                        break 'outer LmStatus::Stalled;
                    }
                }
            }
        }
    };
    Ok(LmResult {
        x,
        residuals: r,
        cost,
        trace,
        iterations,
        status,
    })
}
