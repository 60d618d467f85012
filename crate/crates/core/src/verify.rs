//! Independent checks of computed solutions: integral identities, gradient
//! checks, manufactured data and a brute-force Newton oracle.

use serde::Serialize;
use thiserror::Error;

use crate::assembly::{assemble_stiffness, AssemblyError};
use crate::graph::GridFunction;
use crate::solvers::newton::damped_newton;
use crate::solvers::{classify, Method, Solution, SolveReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("Kirchhoff defect at vertex {vertex}: discrete Laplacian {vertex_value:e} vs {neighbour_value:e} next to it")]
    KirchhoffDefect {
        vertex: String,
        vertex_value: f64,
        neighbour_value: f64,
    },
    #[error("edge {edge} has {cells} cells; at least 3 are needed")]
    TooCoarse { edge: String, cells: usize },
    #[error("Newton diverged after {iterations} iterations (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("finite-difference step must be positive, got {0}")]
    NonpositiveStep(f64),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `|∫h·eᵘ − c|Γ||`, the weak form tested against `φ ≡ 1`.
    pub mass_defect: f64,
    /// `|∫(∂u)²e^{−u} + ∫h|` with log-mean cell weights; only for `c = 0`.
    pub energy_defect: Option<f64>,
    /// `|∫h|`, the natural scale of `energy_defect`.
    pub energy_scale: Option<f64>,
}

/// Infallible form of [`identity_report`] for functions known to share a grid.
pub(crate) fn identities(u: &GridFunction, h: &GridFunction, c: f64) -> IdentityReport {
    let grid = u.grid();
    let w = grid.weights();
    let (uv, hv) = (u.values(), h.values());
    let mass: f64 = (0..uv.len()).map(|i| w[i] * hv[i] * uv[i].exp()).sum();
    let mass_defect = (mass - c * grid.total_length()).abs();
    if c != 0.0 {
        return IdentityReport {
            mass_defect,
            energy_defect: None,
            energy_scale: None,
        };
    }
    let int_h = h.integrate();
    let weighted = weighted_energy(u, Weighting::LogMean);
    IdentityReport {
        mass_defect,
        energy_defect: Some((weighted + int_h).abs()),
        energy_scale: Some(int_h.abs()),
    }
}

/// Cell weight for `e^{−u}` in [`weighted_energy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Weighting {
    /// `(e^{−a} − e^{−b}) / (b − a)`, the mean of `e^{−u}` over the cell.
    /// With it `∫(∂u)²e^{−u} = −(e^{−u})ᵀK u` holds exactly.
    #[default]
    LogMean,
    /// `e^{−(a + b)/2}`
    Midpoint,
}

/// `∫(∂u)²e^{−u}` on the piecewise-linear interpolant.
pub fn weighted_energy(u: &GridFunction, weighting: Weighting) -> f64 {
    let grid = u.grid();
    let uv = u.values();
    let mut total = 0.0;
    for j in 0..grid.graph().num_edges() {
        let hj = grid.spacing(j);
        for p in 0..grid.cells(j) {
            let a = uv[grid.node(j, p)];
            let b = uv[grid.node(j, p + 1)];
            let mid = (-(a + b) / 2.0).exp();
            let weight = match weighting {
                Weighting::Midpoint => mid,
                Weighting::LogMean => {
                    // sinh(x)/x about the midpoint, stable for small jumps.
                    let x = 0.5 * (b - a);
                    if x.abs() < 1e-4 {
                        mid * (1.0 + x * x / 6.0)
                    } else {
                        mid * x.sinh() / x
                    }
                }
            };
            total += (b - a) * (b - a) / hj * weight;
        }
    }
    total
}

pub fn identity_report(u: &GridFunction, h: &GridFunction, c: f64) -> Result<IdentityReport, VerifyError> {
    if !u.same_grid(h) {
        return Err(VerifyError::GridMismatch);
    }
    Ok(identities(u, h, c))
}

/// The three functionals minimized by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Functional {
    /// `½∫|∂u|²`
    Zero,
    /// `½∫|∂u|² + c∫u`
    Positive { c: f64 },
    /// `½∫|∂u|² + c∫u − ∫h·eᵘ`
    Box { c: f64 },
}

impl Functional {
    pub fn value(&self, u: &GridFunction, h: &GridFunction) -> f64 {
        let k = assemble_stiffness(u.grid());
        let uv = u.values();
        let energy = 0.5 * k.quad_form(uv);
        match *self {
            Functional::Zero => energy,
            Functional::Positive { c } => energy + c * u.integrate(),
            Functional::Box { c } => energy + c * u.integrate() - h.values().iter().zip(uv).zip(u.grid().weights()).map(|((h, u), w)| w * h * u.exp()).sum::<f64>(),
        }
    }

    /// Nodal gradient (a dual vector): pairing with `φ` gives the first
    /// variation in direction `φ`.
    pub fn gradient(&self, u: &GridFunction, h: &GridFunction) -> Vec<f64> {
        let mut g = assemble_stiffness(u.grid()).matvec(u.values());
        let w = u.grid().weights();
        match *self {
            Functional::Zero => {}
            Functional::Positive { c } => g.iter_mut().zip(w).for_each(|(g, w)| *g += c * w),
            Functional::Box { c } => {
                for i in 0..g.len() {
                    g[i] += w[i] * (c - h.values()[i] * u.values()[i].exp());
                }
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

/// Compares the assembled first variation with a central difference.
pub fn fd_gradient_check(
    functional: Functional,
    h: &GridFunction,
    u: &GridFunction,
    phi: &GridFunction,
    eps: f64,
) -> Result<GradientCheck, VerifyError> {
    if !(eps > 0.0) {
        return Err(VerifyError::NonpositiveStep(eps));
    }
    if !u.same_grid(h) || !u.same_grid(phi) {
        return Err(VerifyError::GridMismatch);
    }
    let analytic: f64 = functional.gradient(u, h).iter().zip(phi.values()).map(|(g, p)| g * p).sum();
    let shifted = |s: f64| u.with_values(u.values().iter().zip(phi.values()).map(|(u, p)| u + s * p).collect());
    let finite_difference = (functional.value(&shifted(eps), h) - functional.value(&shifted(-eps), h)) / (2.0 * eps);
    let scale = analytic.abs().max(finite_difference.abs());
    let rel_error = if scale == 0.0 { 0.0 } else { (analytic - finite_difference).abs() / scale };
    Ok(GradientCheck {
        analytic,
        finite_difference,
        rel_error,
    })
}

/// Data `h = (c − ∂²u*)·e^{−u*}` for which `u*` solves the discrete problem
/// exactly, with `∂²` the discrete weak Laplacian `−M⁻¹K`.
///
/// `u*` must satisfy the Kirchhoff condition: at every vertex the discrete
/// Laplacian has to match those of the adjacent interior nodes, up to
/// `0.25·(1 + max|∂²u*|)`.
pub fn manufacture(u_star: &GridFunction, c: f64) -> Result<GridFunction, VerifyError> {
    let grid = u_star.grid();
    let graph = grid.graph();
    for (j, e) in graph.edges().iter().enumerate() {
        if grid.cells(j) < 3 {
            return Err(VerifyError::TooCoarse {
                edge: e.id.clone(),
                cells: grid.cells(j),
            });
        }
    }
    let w = grid.weights();
    let ku = assemble_stiffness(grid).matvec(u_star.values());
    let lap: Vec<f64> = ku.iter().zip(w).map(|(k, w)| -k / w).collect();
    let bound = 0.25 * (1.0 + lap.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for v in 0..graph.num_vertices() {
        for &j in graph.incident(v) {
            let edge = graph.edge(j);
            let neighbour = if edge.tail == v { grid.node(j, 1) } else { grid.node(j, grid.cells(j) - 1) };
            if (lap[v] - lap[neighbour]).abs() > bound {
                return Err(VerifyError::KirchhoffDefect {
                    vertex: graph.vertex_ids()[v].clone(),
                    vertex_value: lap[v],
                    neighbour_value: lap[neighbour],
                });
            }
        }
    }
    let uv = u_star.values();
    Ok(u_star.with_values((0..uv.len()).map(|i| (c - lap[i]) * (-uv[i]).exp()).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Damped Newton on the full discrete system from `seed`, with backtracking
/// on `Σ r_i²/w_i`. Meant as an independent cross-check of the solvers.
pub fn oracle_newton(h: &GridFunction, c: f64, seed: &GridFunction, opts: &OracleOptions) -> Result<Solution, VerifyError> {
    if !h.same_grid(seed) {
        return Err(VerifyError::GridMismatch);
    }
    let grid = h.grid();
    let k = assemble_stiffness(grid);
    let out = damped_newton(grid, &k, h.values(), c, seed.values().to_vec(), opts.tol, opts.max_iter).map_err(|f| {
        VerifyError::Diverged {
            iterations: f.iterations,
            residual: f.residual,
        }
    })?;
    let u = GridFunction::from_values(grid.clone(), out.u).map_err(|_| VerifyError::Diverged {
        iterations: out.iterations,
        residual: f64::NAN,
    })?;
    let identities = identities(&u, h, c);
    Ok(Solution {
        u,
        report: SolveReport {
            method: Method::Newton,
            c,
            verdict: Some(classify(h, c)),
            iterations: out.iterations,
            final_residual: out.residual,
            multiplier: None,
            functional: None,
            identities,
            upper_source: None,
            monotone_history: None,
            critical: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{fixtures::*, Grid, Resolution};
    use std::f64::consts::PI;

    fn unit(n: usize) -> std::sync::Arc<Grid> {
        Grid::new(unit_edge(), &Resolution::Uniform(n)).unwrap()
    }

    #[test]
    fn identity_examples() {
        let g = unit(16);
        let r = identity_report(&GridFunction::zeros(g.clone()), &GridFunction::constant(g.clone(), 1.0), 1.0).unwrap();
        assert_eq!(r.mass_defect, 0.0);
        assert!(r.energy_defect.is_none());
        let r = identity_report(&GridFunction::constant(g.clone(), 2f64.ln()), &GridFunction::constant(g.clone(), -1.0), -2.0).unwrap();
        assert!(r.mass_defect < 1e-15);
        assert!(matches!(
            identity_report(&GridFunction::zeros(g), &GridFunction::zeros(unit(8)), 0.0),
            Err(VerifyError::GridMismatch)
        ));
    }

    #[test]
    fn gradient_examples() {
        let g = Grid::new(star3(), &Resolution::Uniform(8)).unwrap();
        let h = GridFunction::constant(g.clone(), 1.0);
        let zero = GridFunction::zeros(g.clone());
        let one = GridFunction::constant(g.clone(), 1.0);
        let chk = fd_gradient_check(Functional::Positive { c: 2.5 }, &h, &zero, &one, 1e-5).unwrap();
        assert!((chk.analytic - 7.5).abs() < 1e-13);
        let phi = GridFunction::from_fn(g.clone(), |_, s| (PI * s).cos()).unwrap();
        let phi = phi.map({
            let m = phi.mean();
            move |v| v - m
        });
        let chk = fd_gradient_check(Functional::Zero, &h, &GridFunction::constant(g, 3.0), &phi, 1e-5).unwrap();
        assert_eq!(chk.analytic, 0.0);
    }

    #[test]
    fn manufacture_examples() {
        let g = unit(128);
        let h = manufacture(&GridFunction::constant(g.clone(), 0.7), -2.0).unwrap();
        assert!(h.values().iter().all(|v| (v + 2.0 * (-0.7f64).exp()).abs() < 1e-14));

        let u = GridFunction::from_fn(g.clone(), |_, s| (PI * s).cos()).unwrap();
        let h = manufacture(&u, 0.0).unwrap();
        let exact = GridFunction::from_fn(g.clone(), |_, s| PI * PI * (PI * s).cos() * (-(PI * s).cos()).exp()).unwrap();
        let interior_err = (0..g.num_dofs())
            .filter(|&i| !g.is_vertex(i))
            .map(|i| (h.values()[i] - exact.values()[i]).abs())
            .fold(0.0, f64::max);
        assert!(interior_err < 1e-2);
        let r = crate::assembly::apply_residual(&u, &h, 0.0).unwrap();
        assert!(r.norm < 1e-9);

        let sloped = GridFunction::from_fn(g, |_, s| s).unwrap();
        assert!(matches!(manufacture(&sloped, 0.0), Err(VerifyError::KirchhoffDefect { .. })));
        assert!(matches!(
            manufacture(&GridFunction::zeros(unit(2)), 0.0),
            Err(VerifyError::TooCoarse { .. })
        ));
    }

    #[test]
    fn oracle_examples() {
        let g = unit(16);
        let sol = oracle_newton(&GridFunction::constant(g.clone(), -1.0), -2.0, &GridFunction::zeros(g.clone()), &OracleOptions::default()).unwrap();
        assert!(sol.report.iterations <= 10);
        assert!(sol.u.values().iter().all(|u| (u - 2f64.ln()).abs() < 1e-12));
        match oracle_newton(&GridFunction::constant(g.clone(), 1.0), 1.0, &GridFunction::constant(g, 50.0), &OracleOptions::default()) {
            Ok(sol) => assert!(sol.u.sup_norm() < 1e-9),
            Err(e) => assert!(matches!(e, VerifyError::Diverged { .. })),
        }
    }
}
