//! C interface to `kwgraph`.
//!
//! Problems and solutions are opaque handles created by this library and
//! released with the matching `*_free` function. Every fallible function
//! returns a [`KwStatus`]; on failure [`kw_last_error`] describes what went
//! wrong. Panics never cross the boundary: they are reported as
//! `KW_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kwgraph::problem::{Problem, ProblemFile};
use kwgraph::solvers::{
    self, classify, estimate_threshold, SolveError, SolveOptions, ThresholdOptions, VerdictReason, VerdictStatus,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    /// A necessary condition on `h` fails for this sign of `c`.
    NotSolvable = 3,
    NoConvergence = 4,
    NoUpperSolution = 5,
    SolverFailure = 6,
    BufferTooSmall = 7,
    /// The requested quantity does not exist for this solution.
    Unavailable = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KwReason {
    None = 0,
    HZeroEverywhere = 1,
    HDoesNotChangeSign = 2,
    IntegralHNonneg = 3,
    HNowherePositive = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KwVerdict {
    /// True when the necessary conditions hold.
    pub necessary_ok: bool,
    pub reason: KwReason,
    pub integral_h: f64,
    pub max_h: f64,
    pub min_h: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KwThreshold {
    /// When true the threshold is minus infinity and `c_lo`, `c_hi` are `-inf`.
    pub minus_infinity: bool,
    pub c_lo: f64,
    pub c_hi: f64,
    pub analytic_upper_bound: f64,
    pub solves: usize,
}

/// A graph, a grid on it, the sampled `h` and an optional `c`.
pub struct KwProblem {
    inner: Problem,
}

/// A converged solution and its report.
pub struct KwSolution {
    inner: solvers::Solution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(KwStatus, String);

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        let status = match e {
            SolveError::NotSolvable(_) => KwStatus::NotSolvable,
            SolveError::NoConvergence { .. } => KwStatus::NoConvergence,
            SolveError::NoUpperSolutionFound { .. } => KwStatus::NoUpperSolution,
            SolveError::InvalidInput(_) | SolveError::MarginTooLarge { .. } | SolveError::Graph(_) => {
                KwStatus::InvalidInput
            }
            _ => KwStatus::SolverFailure,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(KwStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KwStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            KwStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or null if there was none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a problem in the JSON file format. `cells = 0` keeps the counts
/// from the file or the default spacing; otherwise every edge gets `cells`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kw_problem_from_json(json: *const c_char, cells: usize, out: *mut *mut KwProblem) -> KwStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(KwStatus::InvalidInput, format!("json is not UTF-8: {e}")))?;
        let cells = (cells > 0).then_some(cells);
        let inner = ProblemFile::parse(text)
            .and_then(|f| f.build(cells))
            .map_err(|e| Failure(KwStatus::InvalidInput, e.to_string()))?;
        *out = Box::into_raw(Box::new(KwProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from [`kw_problem_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kw_problem_free(problem: *mut KwProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kw_problem_num_dofs(problem: *const KwProblem, out: *mut usize) -> KwStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = p.inner.grid().num_dofs();
        Ok(())
    })
}

/// Edge index (file order) and arclength from the tail of a degree of
/// freedom. Vertices report their lowest-indexed incident edge.
///
/// # Safety
/// `problem` must be a live handle; `edge` and `s` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn kw_problem_dof_location(
    problem: *const KwProblem,
    dof: usize,
    edge: *mut usize,
    s: *mut f64,
) -> KwStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        if edge.is_null() || s.is_null() {
            return Err(null("edge/s"));
        }
        let grid = p.inner.grid();
        if dof >= grid.num_dofs() {
            return Err(Failure(
                KwStatus::InvalidInput,
                format!("dof {dof} out of range (grid has {})", grid.num_dofs()),
            ));
        }
        let (j, pos) = grid.locate(dof);
        *edge = j;
        *s = pos;
        Ok(())
    })
}

/// Sets `c`, replacing any value from the file.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kw_problem_set_c(problem: *mut KwProblem, c: f64) -> KwStatus {
    guard(|| {
        let p = problem.as_mut().ok_or_else(|| null("problem"))?;
        if !c.is_finite() {
            return Err(Failure(KwStatus::InvalidInput, format!("c = {c} is not finite")));
        }
        p.inner.c = Some(c);
        Ok(())
    })
}

/// Necessary sign conditions on `h` for the given `c`.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kw_classify(problem: *const KwProblem, c: f64, out: *mut KwVerdict) -> KwStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = classify(&p.inner.h, c);
        *out = KwVerdict {
            necessary_ok: v.status == VerdictStatus::NecessaryOK,
            reason: match v.reason {
                VerdictReason::None => KwReason::None,
                VerdictReason::HZeroEverywhere => KwReason::HZeroEverywhere,
                VerdictReason::HDoesNotChangeSign => KwReason::HDoesNotChangeSign,
                VerdictReason::IntegralHNonneg => KwReason::IntegralHNonneg,
                VerdictReason::HNowherePositive => KwReason::HNowherePositive,
            },
            integral_h: v.integral_h,
            max_h: v.max_h,
            min_h: v.min_h,
        };
        Ok(())
    })
}

/// Solves with the problem's `c`. `tol <= 0` and `max_iter = 0` select the
/// defaults.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kw_solve(
    problem: *const KwProblem,
    tol: f64,
    max_iter: usize,
    out: *mut *mut KwSolution,
) -> KwStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let c = p
            .inner
            .c_or(None)
            .map_err(|e| Failure(KwStatus::InvalidInput, e.to_string()))?;
        let mut opts = SolveOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        opts.max_iter = (max_iter > 0).then_some(max_iter);
        let kw = solvers::KwProblem::new(p.inner.h.clone(), c)?;
        let inner = solvers::solve(&kw, &opts)?;
        *out = Box::into_raw(Box::new(KwSolution { inner }));
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or a handle from [`kw_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kw_solution_free(solution: *mut KwSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Copies the nodal values into `buf`, which must hold `len` doubles, at
/// least the DOF count. DOFs are numbered vertices first, then the interior
/// nodes of every edge from tail to head.
///
/// # Safety
/// `solution` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn kw_solution_values(solution: *const KwSolution, buf: *mut f64, len: usize) -> KwStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let values = s.inner.u.values();
        if len < values.len() {
            return Err(Failure(
                KwStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// Weak residual `max |r_i| / w_i` of the solution and the iteration count.
///
/// # Safety
/// `solution` must be a live handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn kw_solution_stats(
    solution: *const KwSolution,
    residual: *mut f64,
    iterations: *mut usize,
) -> KwStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        if let Some(r) = residual.as_mut() {
            *r = s.inner.report.final_residual;
        }
        if let Some(i) = iterations.as_mut() {
            *i = s.inner.report.iterations;
        }
        Ok(())
    })
}

/// `λ` for `c = 0`, the constraint multiplier for `c > 0`;
/// `KW_STATUS_UNAVAILABLE` otherwise.
///
/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kw_solution_multiplier(solution: *const KwSolution, out: *mut f64) -> KwStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s
            .inner
            .report
            .multiplier
            .ok_or_else(|| Failure(KwStatus::Unavailable, "solution has no multiplier".into()))?;
        Ok(())
    })
}

/// The full report as JSON; release it with [`kw_string_free`]. Returns
/// null on failure.
///
/// # Safety
/// `solution` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kw_solution_report_json(solution: *const KwSolution) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let s = deref(solution, "solution")?;
        let text = serde_json::to_string(&s.inner.report).map_err(|e| Failure(KwStatus::SolverFailure, e.to_string()))?;
        result = CString::new(text)
            .map_err(|e| Failure(KwStatus::SolverFailure, e.to_string()))?
            .into_raw();
        Ok(())
    });
    result
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Brackets the threshold `c(h)`; `bracket_tol <= 0` selects the default.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kw_threshold(problem: *const KwProblem, bracket_tol: f64, out: *mut KwThreshold) -> KwStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let h = &p.inner.h;
        if h.integrate() >= 0.0 {
            return Err(Failure(
                KwStatus::NotSolvable,
                format!("∫h = {} must be negative", h.integrate()),
            ));
        }
        let opts = ThresholdOptions {
            bracket_tol: (bracket_tol > 0.0).then_some(bracket_tol),
            ..ThresholdOptions::default()
        };
        let est = estimate_threshold(h, &opts)?;
        *out = KwThreshold {
            minus_infinity: est.minus_infinity,
            c_lo: est.c_lo,
            c_hi: est.c_hi,
            analytic_upper_bound: est.analytic_upper_bound,
            solves: est.solves,
        };
        Ok(())
    })
}
