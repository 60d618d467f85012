//! Negative `c`: upper/lower solutions and the monotone scheme.
//!
//! Sign conventions: `u` is an upper solution when
//! `∂²u − c + h·eᵘ ≤ 0`, a lower solution when `≥ 0`. In terms of the
//! discrete weak residual `r = K u + c·w − w⊙h⊙eᵘ` these read `r ≥ 0` and
//! `r ≤ 0` componentwise.

use crate::assembly::{assemble_stiffness, solve_poisson_meanzero, weak_residual, ShiftedSolver, SparseOperator};
use crate::graph::{Grid, GridFunction};
use crate::verify::identities;

use super::newton::{damped_newton, jacobian};
use super::{
    classify, finite_function, require_solvable, BarrierKind, KwProblem, Method, MonotoneStep, ShiftRule,
    SolveError, SolveOptions, Solution, SolveReport, UpperSolutionParams, UpperSource,
};
use crate::assembly::GraphFactorization;

/// Absolute slack on the ordering `u₋ ≤ u_{n+1} ≤ u_n`.
pub(crate) const ORDER_SLACK: f64 = 1e-12;

/// Constant lower solution `−A` with `−c − sup|h|·e^{−A} ≥ δ`.
pub fn build_lower(h: &GridFunction, c: f64, delta: f64) -> Result<GridFunction, SolveError> {
    if !(c < 0.0) {
        return Err(SolveError::InvalidInput(format!("c = {c} must be negative")));
    }
    if !(delta > 0.0 && delta < -c) {
        return Err(SolveError::MarginTooLarge { delta, limit: -c });
    }
    let sup = h.sup_norm();
    let a = if sup > 0.0 { (sup / (-c - delta)).ln().max(0.0) } else { 0.0 };
    Ok(GridFunction::constant(h.grid().clone(), -a))
}

/// Mean-zero `m` with `∂²m = mean(h) − h`.
fn auxiliary(h: &GridFunction) -> Result<GridFunction, SolveError> {
    let mean = h.mean();
    let rhs = h.map(|v| mean - v);
    if rhs.sup_norm() <= 16.0 * f64::EPSILON * h.sup_norm() {
        return Ok(GridFunction::zeros(h.grid().clone()));
    }
    Ok(solve_poisson_meanzero(&rhs)?)
}

/// `max |m|` below this multiple of `sup|h|·|Γ|²` counts as `m ≡ 0`.
const FLAT_M: f64 = 1e-12;

fn is_flat(m: &GridFunction, h: &GridFunction) -> bool {
    let len = h.grid().total_length();
    m.sup_norm() <= FLAT_M * h.sup_norm() * len * len
}

/// Analytic upper solution `a·m + ln a` for sign-changing or nonpositive `h`
/// with `∫h < 0`.
///
/// `a` is the largest value with `max |e^{a·m} − 1| ≤ ρ`,
/// `ρ = −mean(h) / (2 sup|h|)`, over the DOFs; then `a·m + ln a` is an upper
/// solution for every `c ≥ (a/2)·mean(h)`.
pub fn build_upper(h: &GridFunction) -> Result<UpperSolutionParams, SolveError> {
    let integral = h.integrate();
    if !(integral < 0.0) {
        return Err(SolveError::IntegralNotNegative(integral));
    }
    let mean = h.mean();
    let m = auxiliary(h)?;
    let rho = -mean / (2.0 * h.sup_norm());
    let a = if is_flat(&m, h) {
        1.0
    } else {
        let above = m.max().max(0.0);
        let below = (-m.min()).max(0.0);
        let t_above = if above > 0.0 { (1.0 + rho).ln() / above } else { f64::INFINITY };
        let t_below = if below > 0.0 && rho < 1.0 { -(1.0 - rho).ln() / below } else { f64::INFINITY };
        t_above.min(t_below)
    };
    Ok(UpperSolutionParams {
        m,
        a,
        b: a.ln(),
        implied_c: 0.5 * a * mean,
    })
}

/// Upper solution `a·m + b` for `h ≤ 0`, with `a = 2c / mean(h)` and
/// `b = ln a + a·max|m| + 1`.
pub fn build_upper_hneg(h: &GridFunction, c: f64) -> Result<GridFunction, SolveError> {
    let max_h = h.max();
    if max_h > 0.0 {
        return Err(SolveError::HNotNonpositive(max_h));
    }
    let integral = h.integrate();
    if !(integral < 0.0) {
        return Err(SolveError::IntegralNotNegative(integral));
    }
    if !(c < 0.0) {
        return Err(SolveError::InvalidInput(format!("c = {c} must be negative")));
    }
    let m = auxiliary(h)?;
    let a = 2.0 * c / h.mean();
    let m = if is_flat(&m, h) { m.map(|_| 0.0) } else { m };
    let b = a.ln() + a * m.sup_norm() + 1.0;
    Ok(m.map(|m| a * m + b))
}

/// Allowed residual sign defect when checking lower/upper solutions, in
/// units of `r_i / w_i`.
fn barrier_slack(grid: &Grid, h: &[f64], c: f64, u: &[f64]) -> f64 {
    let hmin = (0..grid.graph().num_edges())
        .map(|j| grid.spacing(j))
        .fold(f64::INFINITY, f64::min);
    let sup_u = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sup_he = h.iter().zip(u).fold(0.0f64, |m, (h, u)| m.max((h * u.exp()).abs()));
    1e-9 * (1.0 + c.abs() + sup_he) + 64.0 * f64::EPSILON * sup_u / (hmin * hmin)
}

fn check_barrier(
    k: &SparseOperator,
    grid: &Grid,
    h: &[f64],
    c: f64,
    u: &[f64],
    kind: BarrierKind,
) -> Result<(), SolveError> {
    let w = grid.weights();
    let r = weak_residual(k, w, h, c, u).vector;
    let slack = barrier_slack(grid, h, c, u);
    let sign = match kind {
        BarrierKind::Upper => 1.0,
        BarrierKind::Lower => -1.0,
    };
    for (dof, (r, w)) in r.iter().zip(w).enumerate() {
        let defect = sign * r / w;
        if !(defect >= -slack) {
            return Err(SolveError::InvalidBarrier { kind, dof, defect });
        }
    }
    Ok(())
}

/// Floor `κ` of [`ShiftRule::Tight`].
pub const TIGHT_FLOOR: f64 = 1e-6;

/// Monotone scheme `∂²u_{n+1} − k·u_{n+1} = c − h·e^{u_n} − k·u_n` from
/// `u₀ = u₊`, with the shift `k` chosen by [`ShiftRule`].
///
/// Checks the barrier residual signs and `u₋ ≤ u₊` first, then records every
/// step and fails with `OrderingViolated` as soon as
/// `u₋ ≤ u_{n+1} ≤ u_n` breaks by more than `1e-12`.
pub fn monotone_iterate(
    p: &KwProblem,
    u_minus: &GridFunction,
    u_plus: &GridFunction,
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    let h = &p.h;
    let c = p.c;
    if !h.same_grid(u_minus) || !h.same_grid(u_plus) {
        return Err(crate::assembly::AssemblyError::GridMismatch.into());
    }
    let grid = h.grid();
    let hv = h.values();
    let lo = u_minus.values();
    let hi = u_plus.values();
    for (dof, (l, u)) in lo.iter().zip(hi).enumerate() {
        if !(l <= u) {
            return Err(SolveError::OrderingViolated {
                iteration: 0,
                dof,
                gap: u - l,
            });
        }
    }
    let k = assemble_stiffness(grid);
    check_barrier(&k, grid, hv, c, lo, BarrierKind::Lower)?;
    check_barrier(&k, grid, hv, c, hi, BarrierKind::Upper)?;

    let w = grid.weights();
    let tight = opts.shift_rule == ShiftRule::Tight;
    let k1: Vec<f64> = hv.iter().map(|h| if tight { -h } else { (-h).max(1.0) }).collect();
    let shift_at = |u: &[f64]| -> Result<GridFunction, SolveError> {
        let k = k1.iter().zip(u).map(|(k, u)| {
            let k = k * u.exp();
            if tight {
                k.max(TIGHT_FLOOR)
            } else {
                k
            }
        });
        finite_function(h, k.collect())
    };
    let fixed = match opts.shift_rule {
        ShiftRule::Fixed => Some(ShiftedSolver::new(&shift_at(hi)?)?),
        ShiftRule::Refresh | ShiftRule::Tight => None,
    };

    let mut u = hi.to_vec();
    let mut history = Vec::new();
    let max_iter = opts.monotone_iters();
    let mut current = weak_residual(&k, w, hv, c, &u);
    let mut residual = current.norm;
    for n in 1..=max_iter {
        let refreshed;
        let solver: &ShiftedSolver = match &fixed {
            Some(s) => s,
            None => {
                refreshed = ShiftedSolver::new(&shift_at(&u)?)?;
                &refreshed
            }
        };
        // Increment form of `(K + M_k) u_{n+1} = M(k u_n − c + h e^{u_n})`.
        let scaled: Vec<f64> = current.vector.iter().zip(w).map(|(r, w)| r / w).collect();
        let delta = solver.solve(&finite_function(h, scaled)?)?.into_values();
        let next: Vec<f64> = u.iter().zip(&delta).map(|(u, d)| u + d).collect();

        let mut step = MonotoneStep {
            descent: f64::INFINITY,
            above_lower: f64::INFINITY,
            below_upper: f64::INFINITY,
            residual: 0.0,
        };
        let mut change = 0.0f64;
        for i in 0..u.len() {
            let d = u[i] - next[i];
            step.descent = step.descent.min(d);
            step.above_lower = step.above_lower.min(next[i] - lo[i]);
            step.below_upper = step.below_upper.min(hi[i] - next[i]);
            change = change.max(d.abs());
            if d < -ORDER_SLACK || next[i] - lo[i] < -ORDER_SLACK || !next[i].is_finite() {
                return Err(SolveError::OrderingViolated {
                    iteration: n,
                    dof: i,
                    gap: d.min(next[i] - lo[i]),
                });
            }
        }
        current = weak_residual(&k, w, hv, c, &next);
        residual = current.norm;
        step.residual = residual;
        history.push(step);
        u = next;
        if change <= opts.tol && residual <= opts.tol {
            let u = finite_function(h, u)?;
            let identities = identities(&u, h, c);
            return Ok(Solution {
                u,
                report: SolveReport {
                    method: Method::Monotone,
                    c,
                    verdict: Some(classify(h, c)),
                    iterations: n,
                    final_residual: residual,
                    multiplier: None,
                    functional: None,
                    identities,
                    upper_source: Some(UpperSource::Supplied),
                    monotone_history: Some(history),
                    critical: None,
                },
            });
        }
    }
    Err(SolveError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Solved points `(c, u)` along the stable branch of one `h`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Branch {
    points: Vec<(f64, Vec<f64>)>,
}

impl Branch {
    pub fn insert(&mut self, c: f64, u: Vec<f64>) {
        match self.points.iter().position(|(pc, _)| *pc == c) {
            Some(i) => self.points[i].1 = u,
            None => self.points.push((c, u)),
        }
    }

    fn nearest(&self, c: f64) -> Option<&(f64, Vec<f64>)> {
        self.points
            .iter()
            .min_by(|a, b| (a.0 - c).abs().total_cmp(&(b.0 - c).abs()))
    }
}

/// Solves `∂²u = c − h·eᵘ` for `c < 0` by monotone iteration.
///
/// The upper solution is `build_upper_hneg` when `h ≤ 0`, the analytic one
/// from `build_upper` when `c` is at or above its implied value, and
/// otherwise a solution at `c − η` (`η` below the tolerance) reached by
/// Newton continuation in `c` from the analytic point. Failure of the
/// continuation is reported as `NoUpperSolutionFound`: evidence that `c`
/// lies below the threshold, not a proof.
pub fn solve_negative(p: &KwProblem, opts: &SolveOptions) -> Result<Solution, SolveError> {
    solve_negative_in(p, opts, &mut Branch::default())
}

pub(crate) fn solve_negative_in(p: &KwProblem, opts: &SolveOptions, branch: &mut Branch) -> Result<Solution, SolveError> {
    if !(p.c < 0.0) {
        return Err(SolveError::InvalidInput(format!("c = {} must be negative", p.c)));
    }
    let verdict = require_solvable(p)?;
    let h = &p.h;
    let c = p.c;
    let (upper, source) = if verdict.max_h <= 0.0 {
        (build_upper_hneg(h, c)?, UpperSource::NonpositiveH)
    } else {
        let params = build_upper(h)?;
        if c >= params.implied_c {
            (params.upper(), UpperSource::Analytic)
        } else {
            let psi = continuation(p, &params, opts, branch)?;
            (finite_function(h, psi)?, UpperSource::Continuation)
        }
    };
    let sol = monotone_between(p, &upper, opts)?;
    branch.insert(c, sol.u.values().to_vec());
    let mut sol = sol;
    sol.report.upper_source = Some(source);
    Ok(sol)
}

/// Lower solution from [`build_lower`], lowered further if needed so that it
/// stays below `upper`.
pub(crate) fn lower_below(h: &GridFunction, c: f64, upper: &GridFunction, margin: Option<f64>) -> Result<GridFunction, SolveError> {
    let lower = build_lower(h, c, margin.unwrap_or(-0.5 * c))?;
    let level = lower.max().min(upper.min());
    Ok(GridFunction::constant(h.grid().clone(), level))
}

fn monotone_between(p: &KwProblem, upper: &GridFunction, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let lower = lower_below(&p.h, p.c, upper, opts.lower_margin)?;
    monotone_iterate(p, &lower, upper, opts)
}

/// Newton steps allowed per continuation point.
const CONTINUATION_NEWTON_ITERS: usize = 30;
/// Newton solves allowed per continuation.
const MAX_CONTINUATION_ATTEMPTS: usize = 10_000;

/// A solution at `c − η` with residual well inside `η`, so that it is an
/// upper solution at `c`.
fn continuation(
    p: &KwProblem,
    params: &UpperSolutionParams,
    opts: &SolveOptions,
    branch: &mut Branch,
) -> Result<Vec<f64>, SolveError> {
    let h = &p.h;
    let grid = h.grid();
    let hv = h.values();
    let k = assemble_stiffness(grid);
    let w = grid.weights();
    let eta = 0.25 * opts.tol;
    let target = p.c - eta;
    let newton_tol = 0.25 * eta;

    if branch.points.is_empty() {
        let anchor = p.with_c(params.implied_c);
        let sol = monotone_between(&anchor, &params.upper(), opts)?;
        branch.insert(anchor.c, sol.u.into_values());
    }
    let (mut c_prev, mut u_prev) = branch.nearest(target).cloned().expect("branch is non-empty");
    // Stored points may come from the monotone scheme, accurate only to `tol`.
    if let Ok(out) = damped_newton(grid, &k, hv, c_prev, u_prev.clone(), newton_tol, CONTINUATION_NEWTON_ITERS) {
        u_prev = out.u;
    }
    let min_step = 1e-10 * (1.0 + target.abs());
    let mut dc = target - c_prev;
    let mut attempts = 0;
    while c_prev != target {
        let c_try = if (target - c_prev).abs() <= dc.abs() { target } else { c_prev + dc };
        let step = c_try - c_prev;
        // Tangent predictor: J·∂u/∂c = −w.
        let predicted = GraphFactorization::new(grid, &jacobian(grid, hv, &u_prev), None)
            .and_then(|f| f.solve(&w.iter().map(|w| -w).collect::<Vec<_>>()))
            .map(|t| u_prev.iter().zip(&t).map(|(u, t)| u + step * t).collect::<Vec<_>>())
            .unwrap_or_else(|_| u_prev.clone());
        let attempt = damped_newton(grid, &k, hv, c_try, predicted, newton_tol, CONTINUATION_NEWTON_ITERS);
        attempts += 1;
        match attempt {
            Ok(out) => {
                c_prev = c_try;
                u_prev = out.u;
                branch.insert(c_prev, u_prev.clone());
                dc = 2.0 * step;
            }
            Err(_) => {
                dc = 0.5 * step;
                if dc.abs() < min_step || attempts >= MAX_CONTINUATION_ATTEMPTS {
                    return Err(SolveError::NoUpperSolutionFound { c: p.c, reached: c_prev });
                }
            }
        }
    }
    Ok(u_prev)
}
