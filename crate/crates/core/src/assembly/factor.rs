//! Direct solver exploiting the edge/vertex structure of graph operators.
//!
//! For an operator whose pattern is the P1 stencil of a [`Grid`], the
//! interior nodes of each edge form a tridiagonal block coupled only to the
//! two endpoint vertices. Eliminating those blocks leaves a dense Schur
//! complement on the vertices (plus an optional bordering row), which is tiny
//! for any realistic network. Elimination is exact, so the whole solve costs
//! `O(DOFs + |V|³)`.

use nalgebra::{DMatrix, DVector};

use super::{AssemblyError, SparseOperator};
use crate::graph::Grid;

/// LU factors of a tridiagonal matrix with partial pivoting.
#[derive(Debug, Clone)]
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(mut dl: Vec<f64>, mut d: Vec<f64>, mut du: Vec<f64>) -> Option<Self> {
        let m = d.len();
        let mut du2 = vec![0.0; m.saturating_sub(2)];
        let mut swapped = vec![false; m.saturating_sub(1)];
        for i in 0..m.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < m {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d.iter().any(|&p| p == 0.0 || !p.is_finite()) {
            return None;
        }
        Some(Self {
            dl,
            d,
            du,
            du2,
            swapped,
        })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let m = self.d.len();
        for i in 0..m - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[m - 1] /= self.d[m - 1];
        if m > 1 {
            b[m - 2] = (b[m - 2] - self.du[m - 2] * b[m - 1]) / self.d[m - 2];
        }
        for i in (0..m.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[derive(Debug, Clone)]
struct EdgeBlock {
    tail: usize,
    head: usize,
    first: usize,
    len: usize,
    lu: TridiagLu,
    /// A[first interior, tail] and A[last interior, head].
    a_tail: f64,
    a_head: f64,
    /// T⁻¹ applied to the tail, head and border coupling columns.
    x_tail: Vec<f64>,
    x_head: Vec<f64>,
    x_border: Vec<f64>,
}

/// Factorization of `A` (or of the bordered `[[A, b], [bᵀ, 0]]`) for an
/// operator `A` with the grid's P1 sparsity pattern.
#[derive(Debug, Clone)]
pub struct GraphFactorization {
    n: usize,
    nv: usize,
    border: Option<Vec<f64>>,
    blocks: Vec<EdgeBlock>,
    schur: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Symmetric scaling `D` with the factored Schur matrix `D S D`.
    equilibration: Vec<f64>,
    op: SparseOperator,
}

impl GraphFactorization {
    pub fn new(grid: &Grid, op: &SparseOperator, border: Option<&[f64]>) -> Result<Self, AssemblyError> {
        let n = grid.num_dofs();
        if op.dim() != n {
            return Err(AssemblyError::GridMismatch);
        }
        if let Some(b) = border {
            assert_eq!(b.len(), n, "border vector must have one entry per DOF");
        }
        for (i, j, v) in op.triplets() {
            if i != j && !grid.adjacent(i, j) {
                return Err(AssemblyError::PatternMismatch { row: i, col: j });
            }
            if op.get(j, i) != v {
                return Err(AssemblyError::NotSymmetric { row: i, col: j });
            }
        }

        let graph = grid.graph();
        let nv = graph.num_vertices();
        let ng = nv + usize::from(border.is_some());
        let mut s = DMatrix::<f64>::zeros(ng, ng);
        for v in 0..nv {
            s[(v, v)] = op.get(v, v);
        }
        if let Some(b) = border {
            for v in 0..nv {
                s[(v, nv)] = b[v];
                s[(nv, v)] = b[v];
            }
        }

        let mut blocks = Vec::with_capacity(graph.num_edges());
        for j in 0..graph.num_edges() {
            let cells = grid.cells(j);
            let len = cells - 1;
            let first = grid.node(j, 1);
            let nodes: Vec<usize> = grid.edge_nodes(j).collect();
            let d: Vec<f64> = (1..cells).map(|p| op.get(nodes[p], nodes[p])).collect();
            let off: Vec<f64> = (1..cells - 1).map(|p| op.get(nodes[p], nodes[p + 1])).collect();
            let lu = TridiagLu::factor(off.clone(), d, off).ok_or_else(|| {
                AssemblyError::LinearSolveFailure(format!("singular interior block on edge `{}`", graph.edge(j).id))
            })?;
            let tail = nodes[0];
            let head = nodes[cells];
            let a_tail = op.get(nodes[1], tail);
            let a_head = op.get(nodes[cells - 1], head);

            let mut x_tail = vec![0.0; len];
            x_tail[0] = a_tail;
            lu.solve_in_place(&mut x_tail);
            let mut x_head = vec![0.0; len];
            x_head[len - 1] = a_head;
            lu.solve_in_place(&mut x_head);
            let mut x_border = match border {
                Some(b) => b[first..first + len].to_vec(),
                None => Vec::new(),
            };
            if border.is_some() {
                lu.solve_in_place(&mut x_border);
            }

            s[(tail, tail)] -= a_tail * x_tail[0];
            s[(tail, head)] -= a_tail * x_head[0];
            s[(head, tail)] -= a_head * x_tail[len - 1];
            s[(head, head)] -= a_head * x_head[len - 1];
            if let Some(b) = border {
                let bi = &b[first..first + len];
                let dot = |x: &[f64]| -> f64 { bi.iter().zip(x).map(|(p, q)| p * q).sum() };
                s[(tail, nv)] -= a_tail * x_border[0];
                s[(head, nv)] -= a_head * x_border[len - 1];
                s[(nv, tail)] -= dot(&x_tail);
                s[(nv, head)] -= dot(&x_head);
                s[(nv, nv)] -= dot(&x_border);
            }

            blocks.push(EdgeBlock {
                tail,
                head,
                first,
                len,
                lu,
                a_tail,
                a_head,
                x_tail,
                x_head,
                x_border,
            });
        }

        let equilibration: Vec<f64> = (0..ng)
            .map(|i| {
                let row = s.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if row > 0.0 && row.is_finite() {
                    row.sqrt().recip()
                } else {
                    1.0
                }
            })
            .collect();
        for i in 0..ng {
            for j in 0..ng {
                s[(i, j)] *= equilibration[i] * equilibration[j];
            }
        }
        let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let schur = s.lu();
        let u = schur.u();
        if (0..ng).any(|i| !(u[(i, i)].abs() > 1e-14 * scale)) {
            return Err(AssemblyError::LinearSolveFailure(
                "vertex Schur complement is singular".into(),
            ));
        }

        Ok(Self {
            n,
            nv,
            border: border.map(<[f64]>::to_vec),
            blocks,
            schur,
            equilibration,
            op: op.clone(),
        })
    }

    /// Length of the unknown vector: DOFs, plus one when bordered.
    pub fn system_len(&self) -> usize {
        self.n + usize::from(self.border.is_some())
    }

    fn solve_once(&self, rhs: &[f64]) -> Vec<f64> {
        let nv = self.nv;
        let bordered = self.border.is_some();
        let mut x = rhs.to_vec();
        let mut g = DVector::<f64>::zeros(nv + usize::from(bordered));
        for v in 0..nv {
            g[v] = rhs[v];
        }
        if bordered {
            g[nv] = rhs[self.n];
        }
        for b in &self.blocks {
            let y = &mut x[b.first..b.first + b.len];
            b.lu.solve_in_place(y);
            g[b.tail] -= b.a_tail * y[0];
            g[b.head] -= b.a_head * y[b.len - 1];
            if let Some(border) = &self.border {
                let bi = &border[b.first..b.first + b.len];
                g[nv] -= bi.iter().zip(y.iter()).map(|(p, q)| p * q).sum::<f64>();
            }
        }
        let d = &self.equilibration;
        let g = DVector::from_iterator(g.len(), g.iter().zip(d).map(|(g, d)| g * d));
        let mut xg = self.schur.solve(&g).expect("Schur complement checked non-singular");
        xg.iter_mut().zip(d).for_each(|(x, d)| *x *= d);
        for b in &self.blocks {
            let y = &mut x[b.first..b.first + b.len];
            for k in 0..b.len {
                y[k] -= b.x_tail[k] * xg[b.tail] + b.x_head[k] * xg[b.head];
                if bordered {
                    y[k] -= b.x_border[k] * xg[nv];
                }
            }
        }
        x[..nv].copy_from_slice(&xg.as_slice()[..nv]);
        if bordered {
            x[self.n] = xg[nv];
        }
        x
    }

    /// Applies the system matrix (bordered if applicable).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.op.matvec(&x[..self.n]);
        if let Some(b) = &self.border {
            let lam = x[self.n];
            for (yi, bi) in y.iter_mut().zip(b) {
                *yi += bi * lam;
            }
            y.push(b.iter().zip(&x[..self.n]).map(|(p, q)| p * q).sum());
        }
        y
    }

    /// Direct solve followed by one step of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        assert_eq!(rhs.len(), self.system_len());
        let mut x = self.solve_once(rhs);
        let r: Vec<f64> = rhs.iter().zip(self.apply(&x)).map(|(b, ax)| b - ax).collect();
        let dx = self.solve_once(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AssemblyError::LinearSolveFailure("non-finite solution".into()));
        }
        Ok(x)
    }
}
