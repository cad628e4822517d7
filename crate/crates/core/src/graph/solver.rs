use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use super::{information_matrix, linearize, FactorGraph, Values};
use crate::error::{Error, Result};
use crate::marginals::{elimination_ordering, sparse_cholesky};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once `‖δX*‖∞` falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Levenberg-Marquardt damping on top of Gauss-Newton.
    pub damping: bool,
    pub lambda0: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 50, damping: true, lambda0: 1e-4 }
    }
}

const LAMBDA_MAX: f64 = 1e12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    /// Linearizations performed.
    pub iterations: usize,
    /// Cost `Σ eᵀΣ⁻¹e`, initial value first, then after each accepted step.
    pub costs: Vec<f64>,
    pub converged: bool,
    /// `‖δX*‖∞` of the last computed step.
    pub last_step: f64,
    pub final_lambda: f64,
}

impl SolveReport {
    pub fn initial_cost(&self) -> f64 {
        self.costs.first().copied().unwrap_or(0.0)
    }

    pub fn final_cost(&self) -> f64 {
        self.costs.last().copied().unwrap_or(0.0)
    }
}

/// `Λ + λ diag(Λ)`.
fn damped(lambda_mat: &CscMatrix<f64>, lambda: f64) -> CscMatrix<f64> {
    let n = lambda_mat.ncols();
    let mut coo = CooMatrix::new(n, n);
    for j in 0..n {
        let col = lambda_mat.col(j);
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            coo.push(i, j, if i == j { v * (1.0 + lambda) + 1e-12 * lambda } else { v });
        }
    }
    CscMatrix::from(&coo)
}

/// Iterates `δX* = argmin ‖AδX − b‖²`, `X ← X ⊞ δX*`.
pub fn gauss_newton_solve(g: &FactorGraph, init: &Values, cfg: &SolverConfig) -> Result<(Values, SolveReport)> {
    let perm = elimination_ordering(g);
    let mut x = init.clone();
    let mut report = SolveReport { final_lambda: cfg.lambda0, ..Default::default() };
    let mut cost = g.cost(&x)?;
    report.costs.push(cost);
    let mut lambda = cfg.lambda0;

    for iter in 0..cfg.max_iters {
        let sys = linearize(g, &x)?;
        let info = information_matrix(&sys);
        let grad = sys.gradient();
        report.iterations += 1;

        if iter == 0 || !cfg.damping {
            // Rank check on the undamped system; with damping on this is the
            // only place a missing gauge can show up.
            let f = sparse_cholesky(&info, &perm).map_err(|e| singular(g, e))?;
            if !cfg.damping {
                let delta = f.solve(&grad);
                report.last_step = delta.amax();
                if report.last_step < cfg.tol {
                    report.converged = true;
                    break;
                }
                x = x.retract(&sys.layout, &delta)?;
                cost = g.cost(&x)?;
                report.costs.push(cost);
                continue;
            }
        }

        let mut accepted = false;
        loop {
            let f = sparse_cholesky(&damped(&info, lambda), &perm).map_err(|e| singular(g, e))?;
            let delta = f.solve(&grad);
            report.last_step = delta.amax();
            if report.last_step < cfg.tol {
                report.converged = true;
                break;
            }
            let candidate = x.retract(&sys.layout, &delta)?;
            match g.cost(&candidate) {
                Ok(c) if c <= cost => {
                    x = candidate;
                    cost = c;
                    report.costs.push(cost);
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    break;
                }
                // A step that pushes a point behind a camera is rejected like
                // any other cost increase.
                Ok(_) | Err(Error::CheiralityViolation { .. }) | Err(Error::InvalidInverseDepth(_)) => {
                    lambda *= 10.0;
                    if lambda > LAMBDA_MAX {
                        break;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        report.final_lambda = lambda;
        if report.converged || !accepted {
            break;
        }
    }
    Ok((x, report))
}

fn singular(g: &FactorGraph, e: Error) -> Error {
    match e {
        Error::NotPositiveDefinite { pivot, value } => {
            let layout = g.layout();
            let key = layout
                .keys
                .iter()
                .enumerate()
                .find(|(b, k)| (layout.offsets[*b]..layout.offsets[*b] + k.dim()).contains(&pivot))
                .map(|(_, k)| k.to_string())
                .unwrap_or_else(|| "?".into());
            Error::SingularSystem(format!("pivot {value:.3e} at variable {key}; is the gauge fixed by priors?"))
        }
        other => other,
    }
}
