//! Solvers for `∂²u = c − h·eᵘ` in the three regimes of `c`, the
//! upper/lower solution builders, the threshold estimator and the critical
//! continuation.

mod bump;
mod critical;
mod negative;
pub(crate) mod newton;
mod variational;

pub use critical::{estimate_threshold, solve_critical, CriticalOptions, CriticalReport, ThresholdOptions};
pub use negative::{build_lower, build_upper, build_upper_hneg, monotone_iterate, solve_negative};
pub use variational::{solve_positive, solve_zero};

use serde::Serialize;
use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::graph::{GraphError, GridFunction};
use crate::verify::IdentityReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("problem is not solvable: {0:?}")]
    NotSolvable(VerdictReason),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("could not construct a feasible starting point: {0}")]
    FeasibilityFailure(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("margin {delta} must lie in (0, {limit})")]
    MarginTooLarge { delta: f64, limit: f64 },
    #[error("∫h = {0} is not negative")]
    IntegralNotNegative(f64),
    #[error("h must be nonpositive; max h = {0}")]
    HNotNonpositive(f64),
    #[error("{kind} solution check failed at DOF {dof} (defect {defect:e})")]
    InvalidBarrier { kind: BarrierKind, dof: usize, defect: f64 },
    #[error("ordering violated at iteration {iteration}, DOF {dof} (gap {gap:e})")]
    OrderingViolated { iteration: usize, dof: usize, gap: f64 },
    #[error("no upper solution found at c = {c} (continuation reached c = {reached})")]
    NoUpperSolutionFound { c: f64, reached: f64 },
    #[error("threshold is minus infinity; there is no critical value")]
    MinusInfinity,
    #[error("H¹ norms grow by a factor {ratio:.3} across the critical sequence")]
    BoundBlowup { ratio: f64 },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BarrierKind {
    Lower,
    Upper,
}

impl std::fmt::Display for BarrierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BarrierKind::Lower => "lower",
            BarrierKind::Upper => "upper",
        })
    }
}

/// The data `(h, c)` on a fixed grid.
#[derive(Debug, Clone)]
pub struct KwProblem {
    pub h: GridFunction,
    pub c: f64,
}

impl KwProblem {
    pub fn new(h: GridFunction, c: f64) -> Result<Self, SolveError> {
        if !c.is_finite() {
            return Err(SolveError::InvalidInput(format!("c = {c} is not finite")));
        }
        Ok(Self { h, c })
    }

    pub fn with_c(&self, c: f64) -> Self {
        Self { h: self.h.clone(), c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictStatus {
    NecessaryOK,
    Violates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictReason {
    HZeroEverywhere,
    HDoesNotChangeSign,
    IntegralHNonneg,
    HNowherePositive,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolvabilityVerdict {
    pub status: VerdictStatus,
    pub reason: VerdictReason,
    pub integral_h: f64,
    pub max_h: f64,
    pub min_h: f64,
}

/// Checks the necessary sign conditions on `h` for the sign of `c`.
///
/// For `c < 0` and sign-changing `h`, `NecessaryOK` only means the problem
/// may be solvable: `c` must also lie above the threshold.
pub fn classify(h: &GridFunction, c: f64) -> SolvabilityVerdict {
    let integral_h = h.integrate();
    let max_h = h.max();
    let min_h = h.min();
    let reason = if max_h == 0.0 && min_h == 0.0 {
        VerdictReason::HZeroEverywhere
    } else if c == 0.0 {
        if !(max_h > 0.0 && min_h < 0.0) {
            VerdictReason::HDoesNotChangeSign
        } else if integral_h >= 0.0 {
            VerdictReason::IntegralHNonneg
        } else {
            VerdictReason::None
        }
    } else if c > 0.0 {
        if max_h > 0.0 {
            VerdictReason::None
        } else {
            VerdictReason::HNowherePositive
        }
    } else if integral_h >= 0.0 {
        VerdictReason::IntegralHNonneg
    } else {
        VerdictReason::None
    };
    SolvabilityVerdict {
        status: if reason == VerdictReason::None {
            VerdictStatus::NecessaryOK
        } else {
            VerdictStatus::Violates
        },
        reason,
        integral_h,
        max_h,
        min_h,
    }
}

pub(crate) fn require_solvable(p: &KwProblem) -> Result<SolvabilityVerdict, SolveError> {
    let v = classify(&p.h, p.c);
    match v.status {
        VerdictStatus::NecessaryOK => Ok(v),
        VerdictStatus::Violates => Err(SolveError::NotSolvable(v.reason)),
    }
}

/// How the monotone scheme picks its shift `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ShiftRule {
    /// `k₁ = max(1, −h)` and `ū` the current iterate; each iterate is itself
    /// an upper solution.
    Refresh,
    /// `k₁ = max(1, −h)` and `ū = u₊` throughout.
    Fixed,
    /// `k = max(−h·e^{ū}, κ)` with a small floor `κ` and `ū` the current
    /// iterate: the least shift that keeps `k·u + h·eᵘ` nondecreasing below
    /// `ū`.
    #[default]
    Tight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Bound on the weak residual `max |r_i| / w_i` of the returned solution.
    pub tol: f64,
    /// `None` uses 500 for the monotone scheme and 5000 for gradient descent.
    pub max_iter: Option<usize>,
    /// Margin `δ` of the constant lower solution; `None` means `−c/2`.
    pub lower_margin: Option<f64>,
    pub shift_rule: ShiftRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: None,
            lower_margin: None,
            shift_rule: ShiftRule::Tight,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub(crate) fn monotone_iters(&self) -> usize {
        self.max_iter.unwrap_or(500)
    }

    pub(crate) fn gradient_iters(&self) -> usize {
        self.max_iter.unwrap_or(5000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Zero,
    Positive,
    Monotone,
    Critical,
    Newton,
}

/// Where the upper solution of a negative-`c` solve came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UpperSource {
    /// `a·m + b` with `a∫h < c`, valid when `h ≤ 0`.
    NonpositiveH,
    /// `a·m + ln a` with `c` at or above the implied value.
    Analytic,
    /// A solution at a slightly smaller `c` reached by continuation.
    Continuation,
    Supplied,
}

/// One monotone step `u_n → u_{n+1}`; all gaps are minima over DOFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneStep {
    /// `min(u_n − u_{n+1})`
    pub descent: f64,
    /// `min(u_{n+1} − u₋)`
    pub above_lower: f64,
    /// `min(u₊ − u_{n+1})`
    pub below_upper: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub method: Method,
    pub c: f64,
    pub verdict: Option<SolvabilityVerdict>,
    pub iterations: usize,
    pub final_residual: f64,
    /// `λ` for `c = 0`, the constraint multiplier (≈ 1) for `c > 0`.
    pub multiplier: Option<f64>,
    pub functional: Option<f64>,
    pub identities: IdentityReport,
    pub upper_source: Option<UpperSource>,
    pub monotone_history: Option<Vec<MonotoneStep>>,
    pub critical: Option<CriticalReport>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridFunction,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdEstimate {
    /// Largest `c` where solving failed; `-inf` when `minus_infinity`.
    pub c_lo: f64,
    /// Smallest `c` where solving succeeded; `-inf` when `minus_infinity`.
    pub c_hi: f64,
    /// `(a/2)·mean(h)` from [`build_upper`].
    pub analytic_upper_bound: f64,
    pub minus_infinity: bool,
    pub solves: usize,
}

impl ThresholdEstimate {
    pub fn width(&self) -> f64 {
        self.c_hi - self.c_lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.c_lo + self.c_hi)
    }
}

/// Constants of the analytic upper solution `u₊ = a·m + b`.
#[derive(Debug, Clone)]
pub struct UpperSolutionParams {
    /// Mean-zero solution of `∂²m = mean(h) − h`.
    pub m: GridFunction,
    pub a: f64,
    pub b: f64,
    /// `u₊` is an upper solution for every `c ∈ [implied_c, 0)`.
    pub implied_c: f64,
}

impl UpperSolutionParams {
    pub fn upper(&self) -> GridFunction {
        self.m.map(|m| self.a * m + self.b)
    }
}

/// Dispatches on the sign of `c`.
pub fn solve(p: &KwProblem, opts: &SolveOptions) -> Result<Solution, SolveError> {
    if p.c == 0.0 {
        solve_zero(&p.h, opts)
    } else if p.c > 0.0 {
        solve_positive(&p.h, p.c, opts)
    } else {
        solve_negative(p, opts)
    }
}

pub(crate) fn finite_function(template: &GridFunction, values: Vec<f64>) -> Result<GridFunction, SolveError> {
    Ok(GridFunction::from_values(template.grid().clone(), values)?)
}
