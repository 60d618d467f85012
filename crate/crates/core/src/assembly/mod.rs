//! P1 finite-element operators on a [`Grid`] and the linear solves built on them.
//!
//! The Kirchhoff condition is the natural boundary condition of the weak
//! form: edge blocks are simply accumulated into the shared vertex DOFs, and
//! no vertex stencil is needed. Mass is lumped (trapezoid weights), so
//! `K + diag(w·k)` with `k > 0` is an M-matrix.

mod factor;
mod sparse;

pub use factor::GraphFactorization;
pub use sparse::SparseOperator;

use thiserror::Error;

use crate::graph::{Grid, GridFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("shift must be positive everywhere; found {value} at DOF {dof}")]
    NonpositiveShift { dof: usize, value: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("right-hand side is not compatible: ∫rhs = {integral:e} (scale {scale:e})")]
    IncompatibleRHS { integral: f64, scale: f64 },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("entry ({row}, {col}) is outside the grid stencil")]
    PatternMismatch { row: usize, col: usize },
    #[error("operator is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
}

/// Relative tolerance on `∫rhs` for [`solve_poisson_meanzero`].
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Stiffness matrix: `uᵀKu = ∫|∂u|²` for the piecewise-linear interpolant.
pub fn assemble_stiffness(grid: &Grid) -> SparseOperator {
    let mut t = Vec::with_capacity(4 * grid.num_dofs());
    for j in 0..grid.graph().num_edges() {
        let k = 1.0 / grid.spacing(j);
        for p in 0..grid.cells(j) {
            let a = grid.node(j, p);
            let b = grid.node(j, p + 1);
            t.extend([(a, a, k), (b, b, k), (a, b, -k), (b, a, -k)]);
        }
    }
    SparseOperator::from_triplets(grid.num_dofs(), t)
}

/// Lumped mass matrix: the diagonal of trapezoid weights.
pub fn assemble_mass(grid: &Grid) -> SparseOperator {
    SparseOperator::diagonal_matrix(grid.weights())
}

/// Factorized `K + M_k` for repeated solves of `∂²u − k u = rhs`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    factor: GraphFactorization,
    grid: std::sync::Arc<Grid>,
}

impl ShiftedSolver {
    pub fn new(k: &GridFunction) -> Result<Self, AssemblyError> {
        let grid = k.grid().clone();
        if let Some((dof, &value)) = k
            .values()
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(AssemblyError::NonpositiveShift { dof, value });
        }
        let shift: Vec<f64> = grid.weights().iter().zip(k.values()).map(|(w, k)| w * k).collect();
        let op = assemble_stiffness(&grid).add_diagonal(&shift);
        Ok(Self {
            factor: GraphFactorization::new(&grid, &op, None)?,
            grid,
        })
    }

    /// Weak solution of `∂²u − k u = rhs` with Kirchhoff vertex conditions,
    /// i.e. `(K + M_k) u = −M rhs`.
    pub fn solve(&self, rhs: &GridFunction) -> Result<GridFunction, AssemblyError> {
        if !self.grid.same_as(rhs.grid()) {
            return Err(AssemblyError::GridMismatch);
        }
        let b: Vec<f64> = self
            .grid
            .weights()
            .iter()
            .zip(rhs.values())
            .map(|(w, r)| -w * r)
            .collect();
        let u = self.factor.solve(&b)?;
        Ok(rhs.with_values(u))
    }
}

/// One-shot form of [`ShiftedSolver`].
pub fn solve_shifted(k: &GridFunction, rhs: &GridFunction) -> Result<GridFunction, AssemblyError> {
    if !k.same_grid(rhs) {
        return Err(AssemblyError::GridMismatch);
    }
    ShiftedSolver::new(k)?.solve(rhs)
}

/// The unique mean-zero `m` with `∂²m = rhs` weakly and Kirchhoff vertex
/// conditions. `rhs` must integrate to zero up to [`COMPATIBILITY_TOL`];
/// its residual mean is projected out before solving.
pub fn solve_poisson_meanzero(rhs: &GridFunction) -> Result<GridFunction, AssemblyError> {
    let grid = rhs.grid();
    let integral = rhs.integrate();
    let scale = rhs.map(f64::abs).integrate();
    if integral.abs() > COMPATIBILITY_TOL * scale {
        return Err(AssemblyError::IncompatibleRHS { integral, scale });
    }
    let mean = integral / grid.total_length();
    let w = grid.weights();
    let mut b: Vec<f64> = w.iter().zip(rhs.values()).map(|(w, r)| -w * (r - mean)).collect();
    b.push(0.0);
    let factor = GraphFactorization::new(grid, &assemble_stiffness(grid), Some(w))?;
    let mut m = factor.solve(&b)?;
    m.truncate(grid.num_dofs());
    Ok(rhs.with_values(m))
}

/// Discrete weak residual `r = K u + c·M·1 − M(h ⊙ eᵘ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub vector: Vec<f64>,
    /// `max_i |r_i| / w_i`: the residual read as a pointwise defect.
    pub norm: f64,
    pub worst_dof: usize,
}

pub fn apply_residual(u: &GridFunction, h: &GridFunction, c: f64) -> Result<Residual, AssemblyError> {
    if !u.same_grid(h) {
        return Err(AssemblyError::GridMismatch);
    }
    let grid = u.grid();
    Ok(weak_residual(&assemble_stiffness(grid), grid.weights(), h.values(), c, u.values()))
}

pub(crate) fn weak_residual(k: &SparseOperator, w: &[f64], h: &[f64], c: f64, u: &[f64]) -> Residual {
    let mut r = k.matvec(u);
    let mut norm = 0.0;
    let mut worst_dof = 0;
    for i in 0..r.len() {
        r[i] += w[i] * (c - h[i] * u[i].exp());
        let scaled = r[i].abs() / w[i];
        // NaN propagates as the worst entry.
        if scaled > norm || scaled.is_nan() {
            norm = scaled;
            worst_dof = i;
        }
    }
    Residual {
        vector: r,
        norm,
        worst_dof,
    }
}

/// `K + diag(w ⊙ d)`: the Jacobian shape shared by every nonlinear solve.
pub(crate) fn stiffness_plus_weighted_diag(grid: &Grid, d: &[f64]) -> SparseOperator {
    let shift: Vec<f64> = grid.weights().iter().zip(d).map(|(w, v)| w * v).collect();
    assemble_stiffness(grid).add_diagonal(&shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{fixtures::*, Resolution};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn unit(n: usize) -> Arc<Grid> {
        Grid::new(unit_edge(), &Resolution::Uniform(n)).unwrap()
    }

    #[test]
    fn stiffness_unit_edge() {
        let k = assemble_stiffness(&unit(2));
        // DOF order: v0, v1, interior.
        let expect = [[2.0, 0.0, -2.0], [0.0, 2.0, -2.0], [-2.0, -2.0, 4.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k.get(i, j), expect[i][j]);
            }
        }
    }

    #[test]
    fn stiffness_properties() {
        let g = Grid::new(star3(), &Resolution::Uniform(2)).unwrap();
        let k = assemble_stiffness(&g);
        assert_eq!(k.get(0, 0), 6.0);
        assert!(k.matvec(&vec![1.0; g.num_dofs()]).iter().all(|&v| v == 0.0));
        assert!(k.is_symmetric());
        assert!(k.triplets().all(|(i, j, v)| i == j || v <= 0.0));
    }

    #[test]
    fn mass_weights() {
        let m = assemble_mass(&unit(2));
        assert_eq!(m.diagonal(), vec![0.25, 0.25, 0.5]);
        let g = Grid::new(star3(), &Resolution::Uniform(2)).unwrap();
        let m = assemble_mass(&g);
        assert_eq!(m.get(0, 0), 0.75);
        assert_abs_diff_eq!(m.diagonal().iter().sum::<f64>(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn shifted_constants() {
        let g = Grid::new(star3(), &Resolution::Uniform(6)).unwrap();
        let u = solve_shifted(&GridFunction::constant(g.clone(), 1.0), &GridFunction::constant(g.clone(), -1.0)).unwrap();
        assert!(u.values().iter().all(|&v| (v - 1.0).abs() < 1e-13));
        let u = solve_shifted(&GridFunction::constant(g.clone(), 4.0), &GridFunction::constant(g, -8.0)).unwrap();
        assert!(u.values().iter().all(|&v| (v - 2.0).abs() < 1e-13));
    }

    #[test]
    fn shifted_rejects_nonpositive() {
        let g = unit(4);
        let k = GridFunction::from_fn(g.clone(), |_, s| s - 0.5).unwrap();
        assert!(matches!(
            solve_shifted(&k, &GridFunction::zeros(g)),
            Err(AssemblyError::NonpositiveShift { .. })
        ));
    }

    #[test]
    fn shifted_manufactured_second_order() {
        let err = |n: usize| {
            let g = unit(n);
            let k = GridFunction::constant(g.clone(), 1.0);
            let rhs = GridFunction::from_fn(g.clone(), |_, s| -(PI * PI + 1.0) * (PI * s).cos()).unwrap();
            let u = solve_shifted(&k, &rhs).unwrap();
            let exact = GridFunction::from_fn(g, |_, s| (PI * s).cos()).unwrap();
            u.values()
                .iter()
                .zip(exact.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(32), err(64), err(128));
        assert!(e1 < 1e-2);
        assert!((e1 / e2 - 4.0).abs() < 0.3 && (e2 / e3 - 4.0).abs() < 0.3, "{e1} {e2} {e3}");
    }

    #[test]
    fn poisson_meanzero_examples() {
        let g = unit(256);
        let m = solve_poisson_meanzero(&GridFunction::zeros(g.clone())).unwrap();
        assert!(m.sup_norm() < 1e-14);

        let rhs = GridFunction::from_fn(g.clone(), |_, s| 0.5 - s).unwrap();
        let m = solve_poisson_meanzero(&rhs).unwrap();
        let exact = GridFunction::from_fn(g.clone(), |_, s| s * s / 4.0 - s * s * s / 6.0 - 1.0 / 24.0).unwrap();
        let err = m
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "err {err}");
        assert!(m.mean().abs() < 1e-12);
        let km = assemble_stiffness(&g).matvec(m.values());
        let compat: f64 = km.iter().zip(g.weights()).zip(rhs.values()).map(|((k, w), r)| k + w * r).sum();
        assert!(compat.abs() < 1e-12);

        assert!(matches!(
            solve_poisson_meanzero(&GridFunction::constant(g, 1.0)),
            Err(AssemblyError::IncompatibleRHS { .. })
        ));
    }

    #[test]
    fn residual_examples() {
        let g = Grid::new(star3(), &Resolution::Uniform(4)).unwrap();
        let r = apply_residual(
            &GridFunction::constant(g.clone(), 2f64.ln()),
            &GridFunction::constant(g.clone(), -1.0),
            -2.0,
        )
        .unwrap();
        assert!(r.norm < 1e-14);
        let r = apply_residual(&GridFunction::zeros(g.clone()), &GridFunction::constant(g.clone(), 1.0), 1.0).unwrap();
        assert_eq!(r.norm, 0.0);
        let r = apply_residual(&GridFunction::zeros(g.clone()), &GridFunction::zeros(g.clone()), 1.0).unwrap();
        assert_abs_diff_eq!(r.norm, 1.0, epsilon = 1e-15);

        let other = unit(4);
        assert!(matches!(
            apply_residual(&GridFunction::zeros(g), &GridFunction::zeros(other), 1.0),
            Err(AssemblyError::GridMismatch)
        ));
    }
}
