//! Constrained minimization for `c = 0` and `c > 0`.
//!
//! Both solvers run projected gradient descent in a variable metric
//! `G = K + diag(w + max(0, -q))`, where `q` is the constraint curvature
//! `μ·w·h·eᵘ` from the previous accepted iterate (plain `H¹` on the first
//! step). The search direction is the `G`-gradient of the functional minus
//! its `G`-orthogonal projection onto the constraint normals; each trial
//! point is pulled back onto the constraint set, and the Armijo test is
//! applied to the change of the Lagrangian, which stays accurate when the
//! energy change itself is below rounding.

use crate::assembly::{assemble_stiffness, weak_residual, GraphFactorization, SparseOperator};
use crate::graph::{Grid, GridFunction};
use crate::verify::identities;

use super::bump::{increasing_root, Bump};
use super::{
    classify, finite_function, Method, SolveError, SolveOptions, Solution, SolveReport, VerdictStatus,
};

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Change of the Lagrangian `½vᵀKv + Σ lin_i·v_i − Σ q_i·e^{v_i − a_i}`
/// from `a` to `b`, where `q` is the multiplier-weighted exponential term at
/// `a`, summed node by node in terms of `Δ = b − a` so that it stays
/// resolvable near a critical point. Returns the change and a bound on its
/// rounding error.
fn lagrangian_change(k: &SparseOperator, a: &[f64], b: &[f64], lin: &[f64], q: &[f64]) -> (f64, f64) {
    let sum: Vec<f64> = b.iter().zip(a).map(|(x, y)| x + y).collect();
    let ks = k.matvec(&sum);
    let mut change = 0.0;
    let mut scale = 0.0;
    for i in 0..a.len() {
        let d = b[i] - a[i];
        let quad = 0.5 * d * ks[i];
        let linear = lin[i] * d;
        let expo = q[i] * d.exp_m1();
        change += quad + linear - expo;
        scale += quad.abs() + linear.abs() + expo.abs();
    }
    (change, 32.0 * f64::EPSILON * scale)
}

struct Workspace<'a> {
    grid: &'a Grid,
    h: &'a [f64],
    k: SparseOperator,
}

impl<'a> Workspace<'a> {
    fn new(grid: &'a Grid, h: &'a [f64]) -> Self {
        Self {
            grid,
            h,
            k: assemble_stiffness(grid),
        }
    }

    fn w(&self) -> &[f64] {
        self.grid.weights()
    }

    /// `w ⊙ h ⊙ eᵛ`
    fn weighted_exp(&self, v: &[f64]) -> Vec<f64> {
        self.w()
            .iter()
            .zip(self.h)
            .zip(v)
            .map(|((w, h), v)| w * h * v.exp())
            .collect()
    }

    /// The metric `K + diag(w ⊙ (1 + |q|/w))` for a multiplier-weighted
    /// exponential term `q`; `q = 0` gives the `H¹` metric.
    fn metric(&self, q: &[f64]) -> Result<Metric, SolveError> {
        let diag: Vec<f64> = self.w().iter().zip(q).map(|(w, q)| w + (-q).max(0.0)).collect();
        let factor = GraphFactorization::new(self.grid, &self.k.add_diagonal(&diag), None)?;
        Ok(Metric { diag, factor })
    }
}

/// Factorized metric `G = K + diag(diag)`.
struct Metric {
    diag: Vec<f64>,
    factor: GraphFactorization,
}

impl Metric {
    fn riesz(&self, dual: &[f64]) -> Result<Vec<f64>, SolveError> {
        Ok(self.factor.solve(dual)?)
    }

    /// `dᵀGd` computed without cancellation.
    fn norm2(&self, k: &SparseOperator, d: &[f64]) -> f64 {
        let kd = k.matvec(d);
        (0..d.len()).map(|i| d[i] * kd[i] + self.diag[i] * d[i] * d[i]).sum()
    }
}

fn finish(
    h: &GridFunction,
    c: f64,
    method: Method,
    u: Vec<f64>,
    iterations: usize,
    residual: f64,
    multiplier: f64,
    functional: f64,
) -> Result<Solution, SolveError> {
    let u = finite_function(h, u)?;
    let identities = identities(&u, h, c);
    Ok(Solution {
        u,
        report: SolveReport {
            method,
            c,
            verdict: Some(classify(h, c)),
            iterations,
            final_residual: residual,
            multiplier: Some(multiplier),
            functional: Some(functional),
            identities,
            upper_source: None,
            monotone_history: None,
            critical: None,
        },
    })
}

/// Solves `∂²u = −h·eᵘ` for sign-changing `h` with `∫h < 0`.
///
/// Minimizes `½∫|∂v|²` over `{∫v = 0, ∫h·eᵛ = 0}`, then recovers the
/// multiplier `λ = ∫(∂v)²e^{−v} / (−∫h)` and returns `u = v + ln λ`. The
/// weighted energy uses the discrete form `(e^{−v})ᵀKv`, for which the
/// identity is exact at a discrete critical point.
pub fn solve_zero(h: &GridFunction, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let verdict = classify(h, 0.0);
    if verdict.status == VerdictStatus::Violates {
        return Err(SolveError::NotSolvable(verdict.reason));
    }
    let grid = h.grid();
    let hv = h.values();
    let ws = Workspace::new(grid, hv);
    let w = ws.w();
    let int_h = verdict.integral_h;
    let bump = Bump::new(grid, hv)?;
    let b = &bump.values;

    // Restores ∫h·eᵛ = 0 along the bump, then ∫v = 0 by a constant shift.
    let retract = |v: &[f64]| -> Option<Vec<f64>> {
        let base = ws.weighted_exp(v);
        let s = increasing_root(
            |s| {
                base.iter().zip(b).fold((0.0, 0.0), |(f, df), (q, b)| {
                    let e = q * (s * b).exp();
                    (f + e, df + e * b)
                })
            },
            0.0,
        )?;
        let mut out: Vec<f64> = v.iter().zip(b).map(|(v, b)| v + s * b).collect();
        let mean = dot(&out, w) / grid.total_length();
        out.iter_mut().for_each(|x| *x -= mean);
        out.iter().all(|x| x.is_finite()).then_some(out)
    };

    let mut v = retract(&vec![0.0; grid.num_dofs()])
        .ok_or_else(|| SolveError::FeasibilityFailure("bump scaling found no root".into()))?;

    let multiplier = |v: &[f64], kv: &[f64]| -> f64 {
        let weighted: f64 = v.iter().zip(kv).map(|(v, k)| (-v).exp() * k).sum();
        weighted / int_h
    };

    let max_iter = opts.gradient_iters();
    let mut residual = f64::INFINITY;
    let mut curvature = vec![0.0; grid.num_dofs()];
    for iter in 0..=max_iter {
        let kv = ws.k.matvec(&v);
        let lambda = multiplier(&v, &kv);
        if lambda > 0.0 {
            let shift = lambda.ln();
            let u: Vec<f64> = v.iter().map(|v| v + shift).collect();
            residual = weak_residual(&ws.k, w, hv, 0.0, &u).norm;
            if residual <= opts.tol {
                let energy = 0.5 * dot(&v, &kv);
                return finish(h, 0.0, Method::Zero, u, iter, residual, lambda, energy);
            }
        }
        if iter == max_iter {
            break;
        }

        let q = ws.weighted_exp(&v);
        let metric = ws.metric(&curvature)?;
        let gq = metric.riesz(&q)?;
        let gw = metric.riesz(w)?;
        let gk = metric.riesz(&kv)?;
        let (a11, a12, a22) = (dot(&q, &gq), dot(&q, &gw), dot(w, &gw));
        let (r1, r2) = (dot(&q, &gk), dot(w, &gk));
        let det = a11 * a22 - a12 * a12;
        let alpha1 = (r1 * a22 - r2 * a12) / det;
        let alpha2 = (a11 * r2 - a12 * r1) / det;
        let d: Vec<f64> = (0..v.len())
            .map(|i| gk[i] - alpha1 * gq[i] - alpha2 * gw[i])
            .collect();
        let slope = metric.norm2(&ws.k, &d);
        if !(slope > 0.0) {
            break;
        }

        let lin: Vec<f64> = w.iter().map(|w| -alpha2 * w).collect();
        let qa: Vec<f64> = q.iter().map(|q| alpha1 * q).collect();
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = v.iter().zip(&d).map(|(v, d)| v - t * d).collect();
            if let Some(next) = retract(&trial) {
                let (change, floor) = lagrangian_change(&ws.k, &v, &next, &lin, &qa);
                if change <= -ARMIJO_C1 * t * slope || (t == 1.0 && change <= floor) {
                    break Some(next);
                }
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some(next) => v = next,
            None => break,
        }
        curvature = ws.weighted_exp(&v).iter().map(|q| alpha1 * q).collect();
    }
    Err(SolveError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Solves `∂²u = c − h·eᵘ` for `c > 0` and `h` positive somewhere.
///
/// Minimizes `½∫|∂u|² + c∫u` over `{∫h·eᵘ = c|Γ|}`; trial points are
/// projected back by the constant shift `ln(c|Γ| / ∫h·eᵘ)`.
pub fn solve_positive(h: &GridFunction, c: f64, opts: &SolveOptions) -> Result<Solution, SolveError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(SolveError::InvalidInput(format!("c = {c} must be positive")));
    }
    let verdict = classify(h, c);
    if verdict.status == VerdictStatus::Violates {
        return Err(SolveError::NotSolvable(verdict.reason));
    }
    let grid = h.grid();
    let hv = h.values();
    let ws = Workspace::new(grid, hv);
    let w = ws.w();
    let target = c * grid.total_length();

    let retract = |u: Vec<f64>| -> Option<Vec<f64>> {
        let mass: f64 = ws.weighted_exp(&u).iter().sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return None;
        }
        let t = (target / mass).ln();
        let out: Vec<f64> = u.into_iter().map(|x| x + t).collect();
        out.iter().all(|x| x.is_finite()).then_some(out)
    };

    let mut u = positive_start(grid, hv, target, &ws, &retract)?;

    let max_iter = opts.gradient_iters();
    let mut residual = f64::INFINITY;
    let mut curvature = vec![0.0; grid.num_dofs()];
    for iter in 0..=max_iter {
        let ku = ws.k.matvec(&u);
        let grad: Vec<f64> = ku.iter().zip(w).map(|(k, w)| k + c * w).collect();
        let q = ws.weighted_exp(&u);
        let metric = ws.metric(&curvature)?;
        let gq = metric.riesz(&q)?;
        let gg = metric.riesz(&grad)?;
        let alpha = dot(&q, &gg) / dot(&q, &gq);
        if alpha > 0.0 {
            let shift = alpha.ln();
            let cand: Vec<f64> = u.iter().map(|u| u + shift).collect();
            residual = weak_residual(&ws.k, w, hv, c, &cand).norm;
            // The shifted candidate has mass defect `|alpha - 1|·c|Γ|`.
            if residual <= opts.tol && (alpha - 1.0).abs() <= 0.1 * opts.tol {
                let value = 0.5 * dot(&cand, &ws.k.matvec(&cand)) + c * dot(&cand, w);
                return finish(h, c, Method::Positive, cand, iter, residual, alpha, value);
            }
        }
        if iter == max_iter {
            break;
        }
        let d: Vec<f64> = gg.iter().zip(&gq).map(|(g, q)| g - alpha * q).collect();
        let slope = metric.norm2(&ws.k, &d);
        if !(slope > 0.0) {
            break;
        }
        let lin: Vec<f64> = w.iter().map(|w| c * w).collect();
        let qa: Vec<f64> = q.iter().map(|q| alpha * q).collect();
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(u, d)| u - t * d).collect();
            if let Some(next) = retract(trial) {
                let (change, floor) = lagrangian_change(&ws.k, &u, &next, &lin, &qa);
                if change <= -ARMIJO_C1 * t * slope || (t == 1.0 && change <= floor) {
                    break Some(next);
                }
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some(next) => u = next,
            None => break,
        }
        curvature = ws.weighted_exp(&u).iter().map(|q| alpha * q).collect();
    }
    Err(SolveError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Feasible start via the scan `g(ℓ) = ∫h·e^{v_ℓ}`, where `v_ℓ = ℓ` for
/// `ℓ < 0` and `v_ℓ = ℓ·bump` for `ℓ ≥ 0`.
fn positive_start(
    grid: &Grid,
    h: &[f64],
    target: f64,
    ws: &Workspace<'_>,
    retract: &dyn Fn(Vec<f64>) -> Option<Vec<f64>>,
) -> Result<Vec<f64>, SolveError> {
    let n = grid.num_dofs();
    let g0: f64 = ws.weighted_exp(&vec![0.0; n]).iter().sum();
    if g0 >= target {
        // g(ℓ) = e^ℓ·∫h on ℓ < 0 reaches the target in closed form.
        return Ok(vec![(target / g0).ln(); n]);
    }
    let bump = Bump::new(grid, h)?;
    let b = &bump.values;
    let g = |l: f64| -> f64 {
        let v: Vec<f64> = b.iter().map(|b| l * b).collect();
        ws.weighted_exp(&v).iter().sum()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while g(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(SolveError::FeasibilityFailure("g(ℓ) never reaches c|Γ|".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    // The bisection lands within rounding of the constraint; the constant
    // shift makes it exact.
    retract(b.iter().map(|b| hi * b).collect())
        .ok_or_else(|| SolveError::FeasibilityFailure("scaled bump is not admissible".into()))
}
