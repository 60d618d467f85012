//! The `kwgraph` command line: `solve`, `threshold` and `verify`.
//!
//! Exit codes: 0 success, 1 input error, 2 necessary condition violated,
//! 3 no convergence or no upper solution found, 4 verification defects
//! above tolerance.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::assembly::apply_residual;
use crate::graph::{EdgeProfile, GridFunction};
use crate::problem::{Problem, ProblemError, ProblemFile};
use crate::solvers::{
    classify, estimate_threshold, solve, KwProblem, SolvabilityVerdict, SolveError, SolveOptions, SolveReport,
    ThresholdEstimate, ThresholdOptions, VerdictStatus,
};
use crate::verify::identity_report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_SOLVABLE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_DEFECTS: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "kwgraph", version, about = "Solve ∂²u = c − h·eᵘ on metric graphs with Kirchhoff conditions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the `c` in the problem file (or `--c`).
    Solve(SolveArgs),
    /// Bracket the threshold `c(h)` of solvability for negative `c`.
    Threshold(ThresholdArgs),
    /// Check a solution CSV against a problem.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub problem: PathBuf,
    /// Override the problem's `c`.
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Cells on every edge, overriding the file.
    #[arg(long)]
    pub cells: Option<usize>,
    /// Output prefix; defaults to the problem path without extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    pub problem: PathBuf,
    #[arg(long)]
    pub bracket_tol: Option<f64>,
    /// Output prefix; defaults to the problem path without extension plus `.threshold`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub problem: PathBuf,
    pub solution: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Cells on every edge, as passed to `solve`.
    #[arg(long)]
    pub cells: Option<usize>,
    /// Output prefix; defaults to the solution path without extension plus `.verify`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
    #[error("cannot read solution {path}: {message}")]
    Solution { path: String, message: String },
    #[error("solution does not match the problem grid: {0}")]
    GridMismatch(String),
    #[error("invalid option: {0}")]
    Option(String),
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Threshold(a) => cmd_threshold(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn prefix_for(path: &Path, out: &Option<PathBuf>, suffix: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| {
        let mut p = path.with_extension("").into_os_string();
        p.push(suffix);
        PathBuf::from(p)
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut p = prefix.as_os_str().to_owned();
    p.push(suffix);
    PathBuf::from(p)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let fail = |message: String| CliError::Write {
        path: path.display().to_string(),
        message,
    };
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| fail(e.to_string()))
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    edge_id: &'a str,
    s: f64,
    u: f64,
}

/// Writes `edge_id,s,u` rows, edges sorted by id, nodes tail to head.
pub fn write_solution_csv(path: &Path, u: &GridFunction) -> Result<(), CliError> {
    let fail = |message: String| CliError::Write {
        path: path.display().to_string(),
        message,
    };
    let grid = u.grid();
    let graph = grid.graph();
    let mut order: Vec<usize> = (0..graph.num_edges()).collect();
    order.sort_by(|&a, &b| graph.edge(a).id.cmp(&graph.edge(b).id));
    let mut w = csv::Writer::from_path(path).map_err(|e| fail(e.to_string()))?;
    for j in order {
        let id = &graph.edge(j).id;
        for p in 0..=grid.cells(j) {
            w.serialize(CsvRow {
                edge_id: id,
                s: grid.position(j, p),
                u: u.values()[grid.node(j, p)],
            })
            .map_err(|e| fail(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| fail(e.to_string()))
}

#[derive(Debug, serde::Deserialize)]
struct CsvRecord {
    edge_id: String,
    s: f64,
    u: f64,
}

/// Reads a solution CSV onto the grid of `problem`; every edge must have
/// exactly one sample per node at the node positions.
pub fn read_solution_csv(path: &Path, problem: &Problem) -> Result<GridFunction, CliError> {
    let fail = |message: String| CliError::Solution {
        path: path.display().to_string(),
        message,
    };
    let grid = problem.grid();
    let graph = grid.graph();
    let mut per_edge: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    for record in reader.deserialize() {
        let r: CsvRecord = record.map_err(|e| fail(e.to_string()))?;
        per_edge.entry(r.edge_id).or_default().push((r.s, r.u));
    }
    if let Some(id) = per_edge.keys().find(|id| graph.edge_index(id).is_none()) {
        return Err(CliError::GridMismatch(format!("unknown edge `{id}`")));
    }
    let mut profiles = Vec::with_capacity(graph.num_edges());
    for (j, e) in graph.edges().iter().enumerate() {
        let samples = per_edge
            .get(&e.id)
            .ok_or_else(|| CliError::GridMismatch(format!("no samples for edge `{}`", e.id)))?;
        if samples.len() != grid.cells(j) + 1 {
            return Err(CliError::GridMismatch(format!(
                "edge `{}` has {} samples, the grid has {} nodes",
                e.id,
                samples.len(),
                grid.cells(j) + 1
            )));
        }
        for (p, (s, _)) in samples.iter().enumerate() {
            if (s - grid.position(j, p)).abs() > 1e-9 * e.length {
                return Err(CliError::GridMismatch(format!(
                    "edge `{}` sample {p} at s = {s}, expected {}",
                    e.id,
                    grid.position(j, p)
                )));
            }
        }
        profiles.push(EdgeProfile::Samples(samples.iter().map(|(_, u)| *u).collect()));
    }
    GridFunction::from_profiles(grid.clone(), &profiles).map_err(|e| CliError::GridMismatch(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    Converged,
    NotSolvable,
    NoConvergence,
    NoUpperSolutionFound,
    Failed,
}

#[derive(Debug, Serialize)]
struct SolveFile<'a> {
    status: RunStatus,
    c: f64,
    cells: &'a [usize],
    verdict: SolvabilityVerdict,
    /// `λ` for `c = 0`.
    lambda: Option<f64>,
    report: Option<SolveReport>,
    error: Option<String>,
}

fn solve_status(e: &SolveError) -> (RunStatus, i32) {
    match e {
        SolveError::NotSolvable(_) => (RunStatus::NotSolvable, EXIT_NOT_SOLVABLE),
        SolveError::NoConvergence { .. } => (RunStatus::NoConvergence, EXIT_NO_CONVERGENCE),
        SolveError::NoUpperSolutionFound { .. } => (RunStatus::NoUpperSolutionFound, EXIT_NO_CONVERGENCE),
        SolveError::InvalidInput(_) | SolveError::MarginTooLarge { .. } | SolveError::Graph(_) => {
            (RunStatus::Failed, EXIT_INPUT)
        }
        _ => (RunStatus::Failed, EXIT_NO_CONVERGENCE),
    }
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Option(format!("--tol must be positive, got {}", args.tol)));
    }
    let problem = ProblemFile::read(&args.problem)?.build(args.cells)?;
    let c = problem.c_or(args.c)?;
    let prefix = prefix_for(&args.problem, &args.out, "");
    let verdict = classify(&problem.h, c);
    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..SolveOptions::default()
    };
    let kw = KwProblem::new(problem.h.clone(), c).map_err(|e| CliError::Option(e.to_string()))?;
    let cells = problem.grid().cell_counts();
    let (file, code) = match solve(&kw, &opts) {
        Ok(sol) => {
            write_solution_csv(&with_suffix(&prefix, ".solution.csv"), &sol.u)?;
            let lambda = if c == 0.0 { sol.report.multiplier } else { None };
            println!(
                "converged: method {:?}, {} iterations, residual {:e}",
                sol.report.method, sol.report.iterations, sol.report.final_residual
            );
            (
                SolveFile {
                    status: RunStatus::Converged,
                    c,
                    cells,
                    verdict,
                    lambda,
                    report: Some(sol.report),
                    error: None,
                },
                EXIT_OK,
            )
        }
        Err(e) => {
            let (status, code) = solve_status(&e);
            eprintln!("{status:?}: {e}");
            (
                SolveFile {
                    status,
                    c,
                    cells,
                    verdict,
                    lambda: None,
                    report: None,
                    error: Some(e.to_string()),
                },
                code,
            )
        }
    };
    write_json(&with_suffix(&prefix, ".report"), &file)?;
    Ok(code)
}

#[derive(Debug, Serialize)]
struct ThresholdFile {
    status: RunStatus,
    integral_h: f64,
    minus_infinity: Option<bool>,
    c_lo: Option<f64>,
    c_hi: Option<f64>,
    analytic_upper_bound: Option<f64>,
    bracket_tol: Option<f64>,
    solves: Option<usize>,
    error: Option<String>,
}

pub fn cmd_threshold(args: &ThresholdArgs) -> Result<i32, CliError> {
    if let Some(t) = args.bracket_tol {
        if !(t > 0.0) {
            return Err(CliError::Option(format!("--bracket-tol must be positive, got {t}")));
        }
    }
    let problem = ProblemFile::read(&args.problem)?.build(None)?;
    let prefix = prefix_for(&args.problem, &args.out, ".threshold");
    let integral_h = problem.h.integrate();
    let mut file = ThresholdFile {
        status: RunStatus::Converged,
        integral_h,
        minus_infinity: None,
        c_lo: None,
        c_hi: None,
        analytic_upper_bound: None,
        bracket_tol: args.bracket_tol,
        solves: None,
        error: None,
    };
    let verdict = classify(&problem.h, -1.0);
    let code = if verdict.status == VerdictStatus::Violates {
        file.status = RunStatus::NotSolvable;
        file.error = Some(format!("∫h = {integral_h} must be negative ({:?})", verdict.reason));
        eprintln!("not solvable for any c < 0: ∫h = {integral_h}");
        EXIT_NOT_SOLVABLE
    } else {
        let opts = ThresholdOptions {
            bracket_tol: args.bracket_tol,
            ..ThresholdOptions::default()
        };
        match estimate_threshold(&problem.h, &opts) {
            Ok(est) => {
                fill_threshold(&mut file, &est, opts.bracket_tol);
                if est.minus_infinity {
                    println!("threshold: minus infinity (h ≤ 0)");
                } else {
                    println!(
                        "threshold in [{}, {}]; analytic bound {}",
                        est.c_lo, est.c_hi, est.analytic_upper_bound
                    );
                }
                EXIT_OK
            }
            Err(e) => {
                let (status, code) = solve_status(&e);
                eprintln!("{status:?}: {e}");
                file.status = status;
                file.error = Some(e.to_string());
                code
            }
        }
    };
    write_json(&with_suffix(&prefix, ".report"), &file)?;
    Ok(code)
}

fn fill_threshold(file: &mut ThresholdFile, est: &ThresholdEstimate, bracket_tol: Option<f64>) {
    file.minus_infinity = Some(est.minus_infinity);
    file.analytic_upper_bound = Some(est.analytic_upper_bound);
    file.solves = Some(est.solves);
    if !est.minus_infinity {
        file.c_lo = Some(est.c_lo);
        file.c_hi = Some(est.c_hi);
        file.bracket_tol = Some(bracket_tol.unwrap_or(1e-4 * est.analytic_upper_bound.abs()));
    }
}

#[derive(Debug, Serialize)]
struct Location {
    edge_id: String,
    s: f64,
}

#[derive(Debug, Serialize)]
struct VerifyFile {
    passed: bool,
    tol: f64,
    c: f64,
    residual_norm: f64,
    worst: Location,
    mass_defect: f64,
    mass_bound: f64,
    energy_defect: Option<f64>,
    energy_bound: Option<f64>,
}

/// Exit 0 when the weak residual is at most `tol` and both identity defects
/// are within the bounds that residual implies: `tol·|Γ|` for the mass
/// identity and `tol·∫e^{−u}` for the energy identity.
pub fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Option(format!("--tol must be positive, got {}", args.tol)));
    }
    let problem = ProblemFile::read(&args.problem)?.build(args.cells)?;
    let c = problem.c_or(args.c)?;
    let u = read_solution_csv(&args.solution, &problem)?;
    let prefix = prefix_for(&args.solution, &args.out, ".verify");
    let grid = problem.grid();
    let residual = apply_residual(&u, &problem.h, c).map_err(|e| CliError::GridMismatch(e.to_string()))?;
    let ids = identity_report(&u, &problem.h, c).map_err(|e| CliError::GridMismatch(e.to_string()))?;
    let mass_bound = args.tol * grid.total_length();
    let energy_bound = ids.energy_defect.map(|_| args.tol * u.map(|v| (-v).exp()).integrate());
    let (j, s) = grid.locate(residual.worst_dof);
    let passed = residual.norm <= args.tol
        && ids.mass_defect <= mass_bound
        && match (ids.energy_defect, energy_bound) {
            (Some(d), Some(b)) => d <= b,
            _ => true,
        };
    let file = VerifyFile {
        passed,
        tol: args.tol,
        c,
        residual_norm: residual.norm,
        worst: Location {
            edge_id: grid.graph().edge(j).id.clone(),
            s,
        },
        mass_defect: ids.mass_defect,
        mass_bound,
        energy_defect: ids.energy_defect,
        energy_bound,
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{}: residual {:e} (largest on edge {} at s = {}), mass defect {:e}",
        if passed { "passed" } else { "FAILED" },
        residual.norm,
        file.worst.edge_id,
        s,
        ids.mass_defect
    );
    write_json(&with_suffix(&prefix, ".report"), &file)?;
    Ok(if passed { EXIT_OK } else { EXIT_DEFECTS })
}
