//! Damped Newton on the full discrete system `K u + c·w − w⊙h⊙eᵘ = 0`.

use crate::assembly::{stiffness_plus_weighted_diag, weak_residual, GraphFactorization, SparseOperator};
use crate::graph::Grid;

const ARMIJO_C1: f64 = 1e-4;

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonFailure {
    pub iterations: usize,
    pub residual: f64,
}

/// `Σ r_i² / w_i`
fn merit(r: &[f64], w: &[f64]) -> f64 {
    r.iter().zip(w).map(|(r, w)| r * r / w).sum()
}

/// Jacobian `K − diag(w⊙h⊙eᵘ)`.
pub(crate) fn jacobian(grid: &Grid, h: &[f64], u: &[f64]) -> SparseOperator {
    let d: Vec<f64> = h.iter().zip(u).map(|(h, u)| -h * u.exp()).collect();
    stiffness_plus_weighted_diag(grid, &d)
}

/// Newton with backtracking on `Σ r²/w` starting from `u`.
pub(crate) fn damped_newton(
    grid: &Grid,
    k: &SparseOperator,
    h: &[f64],
    c: f64,
    mut u: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome, NewtonFailure> {
    let w = grid.weights();
    let mut res = weak_residual(k, w, h, c, &u);
    for iterations in 0..=max_iter {
        if res.norm <= tol {
            return Ok(NewtonOutcome {
                u,
                iterations,
                residual: res.norm,
            });
        }
        let fail = NewtonFailure {
            iterations,
            residual: res.norm,
        };
        if iterations == max_iter || !res.norm.is_finite() {
            return Err(fail);
        }
        let factor = GraphFactorization::new(grid, &jacobian(grid, h, &u), None).map_err(|_| fail)?;
        let neg: Vec<f64> = res.vector.iter().map(|r| -r).collect();
        let du = factor.solve(&neg).map_err(|_| fail)?;
        let phi = merit(&res.vector, w);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(u, d)| u + t * d).collect();
            if trial.iter().all(|x| x.is_finite()) {
                let r = weak_residual(k, w, h, c, &trial);
                if merit(&r.vector, w) <= (1.0 - 2.0 * ARMIJO_C1 * t) * phi {
                    u = trial;
                    res = r;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(fail);
            }
        }
    }
    unreachable!()
}
