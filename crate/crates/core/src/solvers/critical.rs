//! Threshold bracketing and the critical case `c = c(h)`.

use serde::Serialize;

use crate::assembly::{assemble_stiffness, weak_residual, ShiftedSolver};
use crate::graph::GridFunction;
use crate::verify::identities;

use super::negative::{build_upper, lower_below, solve_negative_in, Branch};
use super::{
    classify, finite_function, KwProblem, Method, SolveError, SolveOptions, Solution, SolveReport,
    ThresholdEstimate,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    /// Stop bisecting once `c_hi − c_lo` is at most this; `None` means
    /// `1e-4·|c_hi|` with `c_hi` the analytic bound.
    pub bracket_tol: Option<f64>,
    pub solve: SolveOptions,
    pub max_doublings: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            bracket_tol: None,
            solve: SolveOptions::default(),
            max_doublings: 60,
        }
    }
}

/// Brackets the threshold `c(h)` below which `∂²u = c − h·eᵘ` has no
/// solution.
///
/// `c(h) = −∞` exactly when `h ≤ 0`. Otherwise the search starts at the
/// analytic value `(a/2)·mean(h)`, doubles `c` until solving fails and then
/// bisects. A failed solve is evidence of unsolvability, not a proof.
pub fn estimate_threshold(h: &GridFunction, opts: &ThresholdOptions) -> Result<ThresholdEstimate, SolveError> {
    let params = build_upper(h)?;
    let analytic = params.implied_c;
    if h.max() <= 0.0 {
        return Ok(ThresholdEstimate {
            c_lo: f64::NEG_INFINITY,
            c_hi: f64::NEG_INFINITY,
            analytic_upper_bound: analytic,
            minus_infinity: true,
            solves: 0,
        });
    }
    let mut branch = Branch::default();
    let mut solves = 0;
    let mut attempt = |c: f64, branch: &mut Branch| -> Result<bool, SolveError> {
        solves += 1;
        let p = KwProblem::new(h.clone(), c)?;
        match solve_negative_in(&p, &opts.solve, branch) {
            Ok(_) => Ok(true),
            Err(SolveError::NoUpperSolutionFound { .. } | SolveError::NoConvergence { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if !attempt(analytic, &mut branch)? {
        return Err(SolveError::NoConvergence {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    let tol = opts.bracket_tol.unwrap_or(1e-4 * analytic.abs());
    if !(tol > 0.0) {
        return Err(SolveError::InvalidInput(format!("bracket tolerance {tol} must be positive")));
    }
    let mut c_hi = analytic;
    let mut c_lo = 2.0 * c_hi;
    let mut doublings = 0;
    while attempt(c_lo, &mut branch)? {
        c_hi = c_lo;
        c_lo *= 2.0;
        doublings += 1;
        if doublings > opts.max_doublings {
            return Err(SolveError::NoConvergence {
                iterations: doublings,
                residual: f64::NAN,
            });
        }
    }
    while c_hi - c_lo > tol {
        let mid = 0.5 * (c_lo + c_hi);
        if attempt(mid, &mut branch)? {
            c_hi = mid;
        } else {
            c_lo = mid;
        }
    }
    Ok(ThresholdEstimate {
        c_lo,
        c_hi,
        analytic_upper_bound: analytic,
        minus_infinity: false,
        solves,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalOptions {
    pub k_max: usize,
    pub tol: f64,
    /// Iteration cap per box problem; `None` means 20000.
    pub max_iter: Option<usize>,
    /// Largest admissible `max/min` ratio of the recorded `H¹` norms.
    pub blowup_ratio: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self {
            k_max: 8,
            tol: 1e-8,
            max_iter: None,
            blowup_ratio: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalReport {
    pub c_sequence: Vec<f64>,
    pub h1_norms: Vec<f64>,
    /// `|∫h·e^{u_k} − c_k|Γ||` per step.
    pub mass_defects: Vec<f64>,
    pub iterations: Vec<usize>,
    pub bracket: (f64, f64),
    /// Weak residual of the final iterate at the bracket midpoint.
    pub midpoint_residual: f64,
    /// `|∫h·eᵘ − c_mid|Γ||` for the final iterate.
    pub midpoint_mass_defect: f64,
}

const ARMIJO_C1: f64 = 1e-4;

/// Approaches the threshold from above along `c_k = c_hi + width·2^{−k}`.
///
/// For each `k` the solution `ψ_k` at `c_{k+1}` is an upper solution at
/// `c_k`; the functional `½∫|∂u|² + c_k∫u − ∫h·eᵘ` is minimized over the box
/// `−A ≤ u ≤ ψ_k` by projected gradient in the metric
/// `K + M·max(1, −h)e^{ψ_k}`, in which a unit step is one monotone step.
/// The last iterate is returned; its residual is reported both at `c_k` and
/// at the bracket midpoint.
pub fn solve_critical(
    h: &GridFunction,
    estimate: &ThresholdEstimate,
    opts: &CriticalOptions,
) -> Result<Solution, SolveError> {
    if estimate.minus_infinity {
        return Err(SolveError::MinusInfinity);
    }
    let width = estimate.width();
    if !(width > 0.0) || !estimate.c_hi.is_finite() {
        return Err(SolveError::InvalidInput("bracket must have positive finite width".into()));
    }
    let grid = h.grid();
    let hv = h.values();
    let w = grid.weights();
    let k = assemble_stiffness(grid);
    let len = grid.total_length();
    let c_seq: Vec<f64> = (0..=opts.k_max + 1)
        .map(|j| estimate.c_hi + width * 0.5f64.powi(j as i32))
        .collect();
    let solve_opts = SolveOptions::with_tol(opts.tol);
    let max_iter = opts.max_iter.unwrap_or(20_000);
    let k1: Vec<f64> = hv.iter().map(|h| (-h).max(1.0)).collect();

    let mut branch = Branch::default();
    let mut report = CriticalReport {
        c_sequence: Vec::new(),
        h1_norms: Vec::new(),
        mass_defects: Vec::new(),
        iterations: Vec::new(),
        bracket: (estimate.c_lo, estimate.c_hi),
        midpoint_residual: f64::NAN,
        midpoint_mass_defect: f64::NAN,
    };
    let mut last: Option<(Vec<f64>, f64, f64)> = None;
    for j in 0..=opts.k_max {
        let c_k = c_seq[j];
        let psi = solve_negative_in(&KwProblem::new(h.clone(), c_seq[j + 1])?, &solve_opts, &mut branch)?.u;
        let lower = lower_below(h, c_k, &psi, None)?.values()[0];
        let upper = psi.values();
        let shift = finite_function(h, k1.iter().zip(upper).map(|(k, p)| k * p.exp()).collect())?;
        let metric = ShiftedSolver::new(&shift)?;

        let functional_change = |a: &[f64], b: &[f64]| -> f64 {
            let mut lin = 0.0;
            let mut sum = vec![0.0; a.len()];
            let mut diff = vec![0.0; a.len()];
            for i in 0..a.len() {
                diff[i] = b[i] - a[i];
                sum[i] = b[i] + a[i];
                lin += w[i] * (c_k * diff[i] - hv[i] * a[i].exp() * diff[i].exp_m1());
            }
            let ks = k.matvec(&sum);
            0.5 * diff.iter().zip(&ks).map(|(d, s)| d * s).sum::<f64>() + lin
        };

        let mut u = upper.to_vec();
        let mut converged = None;
        for iter in 0..max_iter {
            let res = weak_residual(&k, w, hv, c_k, &u);
            // The metric solve of −r/w yields the G-gradient G⁻¹r.
            let rhs = finite_function(h, res.vector.iter().zip(w).map(|(r, w)| -r / w).collect())?;
            let d = metric.solve(&rhs)?.into_values();
            let mut t = 1.0;
            let (next, change) = loop {
                let trial: Vec<f64> = (0..u.len())
                    .map(|i| (u[i] - t * d[i]).clamp(lower, upper[i]))
                    .collect();
                let pairing: f64 = res.vector.iter().zip(&trial).zip(&u).map(|((r, x), y)| r * (x - y)).sum();
                if functional_change(&u, &trial) <= ARMIJO_C1 * pairing || t < 1e-14 {
                    let change = trial.iter().zip(&u).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                    break (trial, change);
                }
                t *= 0.5;
            };
            u = next;
            let r = weak_residual(&k, w, hv, c_k, &u).norm;
            if change <= opts.tol && r <= opts.tol {
                converged = Some((iter + 1, r));
                break;
            }
        }
        let (iters, residual) = converged.ok_or_else(|| SolveError::NoConvergence {
            iterations: max_iter,
            residual: weak_residual(&k, w, hv, c_k, &u).norm,
        })?;
        let uf = finite_function(h, u.clone())?;
        let mass: f64 = hv.iter().zip(&u).zip(w).map(|((h, u), w)| w * h * u.exp()).sum();
        report.c_sequence.push(c_k);
        report.h1_norms.push(uf.h1_norm());
        report.mass_defects.push((mass - c_k * len).abs());
        report.iterations.push(iters);
        last = Some((u, c_k, residual));
    }
    let (u, c_last, residual) = last.expect("at least one critical step");
    let lo = report.h1_norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = report.h1_norms.iter().cloned().fold(0.0, f64::max);
    let ratio = hi / lo;
    if !(ratio <= opts.blowup_ratio) {
        return Err(SolveError::BoundBlowup { ratio });
    }
    let c_mid = estimate.midpoint();
    report.midpoint_residual = weak_residual(&k, w, hv, c_mid, &u).norm;
    let u = finite_function(h, u)?;
    report.midpoint_mass_defect = identities(&u, h, c_mid).mass_defect;
    let identities = identities(&u, h, c_last);
    Ok(Solution {
        u,
        report: SolveReport {
            method: Method::Critical,
            c: c_last,
            verdict: Some(classify(h, c_last)),
            iterations: report.iterations.iter().sum(),
            final_residual: residual,
            multiplier: None,
            functional: None,
            identities,
            upper_source: None,
            monotone_history: None,
            critical: Some(report),
        },
    })
}
