use std::sync::Arc;

use super::{GraphError, MetricGraph};

/// How finely to split each edge.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    /// The same number of cells on every edge.
    Uniform(usize),
    /// Explicit cell count per edge, in edge order.
    PerEdge(Vec<usize>),
    /// `n_j = ceil(l_j / spacing)`.
    TargetSpacing(f64),
}

/// Uniform per-edge discretization with one shared degree of freedom per vertex.
///
/// Vertex `v` owns DOF `v`; the `n_j - 1` interior nodes of edge `j` follow
/// after all vertices, edge by edge, ordered tail to head.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    graph: MetricGraph,
    cells: Vec<usize>,
    spacing: Vec<f64>,
    interior_offset: Vec<usize>,
    weights: Vec<f64>,
    num_dofs: usize,
}

impl Grid {
    pub fn new(graph: MetricGraph, resolution: &Resolution) -> Result<Arc<Self>, GraphError> {
        let cells: Vec<usize> = match resolution {
            Resolution::Uniform(n) => vec![*n; graph.num_edges()],
            Resolution::PerEdge(v) => {
                if v.len() != graph.num_edges() {
                    return Err(GraphError::ResolutionLength {
                        given: v.len(),
                        expected: graph.num_edges(),
                    });
                }
                v.clone()
            }
            Resolution::TargetSpacing(h) => graph
                .edges()
                .iter()
                .map(|e| {
                    let n = (e.length / h).ceil();
                    if n.is_finite() && n >= 0.0 {
                        n as usize
                    } else {
                        0
                    }
                })
                .collect(),
        };
        for (e, &n) in graph.edges().iter().zip(&cells) {
            if n < 2 {
                return Err(GraphError::ResolutionTooCoarse {
                    edge: e.id.clone(),
                    cells: n,
                });
            }
        }

        let spacing: Vec<f64> = graph
            .edges()
            .iter()
            .zip(&cells)
            .map(|(e, &n)| e.length / n as f64)
            .collect();
        let mut interior_offset = Vec::with_capacity(cells.len());
        let mut next = graph.num_vertices();
        for &n in &cells {
            interior_offset.push(next);
            next += n - 1;
        }
        let num_dofs = next;

        let mut weights = vec![0.0; num_dofs];
        for (j, e) in graph.edges().iter().enumerate() {
            let h = spacing[j];
            weights[e.tail] += 0.5 * h;
            weights[e.head] += 0.5 * h;
            for k in 0..cells[j] - 1 {
                weights[interior_offset[j] + k] = h;
            }
        }

        Ok(Arc::new(Self {
            graph,
            cells,
            spacing,
            interior_offset,
            weights,
            num_dofs,
        }))
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn cells(&self, edge: usize) -> usize {
        self.cells[edge]
    }

    pub fn cell_counts(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self, edge: usize) -> f64 {
        self.spacing[edge]
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Global DOF of node `p` (0 = tail, `n_j` = head) on edge `edge`.
    pub fn node(&self, edge: usize, p: usize) -> usize {
        let n = self.cells[edge];
        debug_assert!(p <= n);
        if p == 0 {
            self.graph.edge(edge).tail
        } else if p == n {
            self.graph.edge(edge).head
        } else {
            self.interior_offset[edge] + p - 1
        }
    }

    /// DOFs of edge `edge`, tail to head.
    pub fn edge_nodes(&self, edge: usize) -> impl Iterator<Item = usize> + '_ {
        (0..=self.cells[edge]).map(move |p| self.node(edge, p))
    }

    /// Arclength coordinate of node `p` on `edge`.
    pub fn position(&self, edge: usize, p: usize) -> f64 {
        if p == self.cells[edge] {
            self.graph.edge(edge).length
        } else {
            p as f64 * self.spacing[edge]
        }
    }

    pub fn is_vertex(&self, dof: usize) -> bool {
        dof < self.graph.num_vertices()
    }

    /// For an interior DOF, the owning edge and local node index.
    pub fn locate_interior(&self, dof: usize) -> Option<(usize, usize)> {
        if self.is_vertex(dof) || dof >= self.num_dofs {
            return None;
        }
        let j = self.interior_offset.partition_point(|&o| o <= dof) - 1;
        Some((j, dof - self.interior_offset[j] + 1))
    }

    /// An (edge, arclength) location for any DOF; vertices report their
    /// lowest-indexed incident edge.
    pub fn locate(&self, dof: usize) -> (usize, f64) {
        match self.locate_interior(dof) {
            Some((j, p)) => (j, self.position(j, p)),
            None => {
                let j = self.graph.incident(dof)[0];
                let e = self.graph.edge(j);
                let s = if e.tail == dof { 0.0 } else { e.length };
                (j, s)
            }
        }
    }

    /// True when `a` and `b` are neighbouring nodes of some edge.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        if let Some((j, p)) = self.locate_interior(a) {
            return self.node(j, p - 1) == b || self.node(j, p + 1) == b;
        }
        if let Some((j, p)) = self.locate_interior(b) {
            return self.node(j, p - 1) == a || self.node(j, p + 1) == a;
        }
        false
    }

    /// Trapezoid weight of every DOF; also the lumped mass diagonal.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_length(&self) -> f64 {
        self.graph.total_length()
    }

    pub(crate) fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

/// Values of a function along one edge, used to build a [`GridFunction`].
pub enum EdgeProfile<'a> {
    Function(Box<dyn Fn(f64) -> f64 + 'a>),
    /// Equally spaced samples from tail to head, linearly interpolated.
    Samples(Vec<f64>),
}

impl EdgeProfile<'_> {
    fn eval(&self, s: f64, length: f64) -> f64 {
        match self {
            EdgeProfile::Function(f) => f(s),
            EdgeProfile::Samples(v) => {
                let m = v.len() - 1;
                let x = (s / length * m as f64).clamp(0.0, m as f64);
                let i = (x.floor() as usize).min(m.saturating_sub(1));
                let t = x - i as f64;
                if m == 0 {
                    v[0]
                } else {
                    v[i] * (1.0 - t) + v[i + 1] * t
                }
            }
        }
    }
}

const CONTINUITY_TOL: f64 = 1e-10;

/// Nodal values of a continuous function on a [`Grid`].
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Norms {
    pub l2: f64,
    pub h1_seminorm: f64,
    pub sup: f64,
    pub mean: f64,
}

impl GridFunction {
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GraphError> {
        assert_eq!(values.len(), grid.num_dofs(), "value count must match DOF count");
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GraphError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let n = grid.num_dofs();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples one profile per edge; profiles meeting at a vertex must agree
    /// there, and the shared value is taken from the lowest-indexed edge.
    pub fn from_profiles(grid: Arc<Grid>, profiles: &[EdgeProfile<'_>]) -> Result<Self, GraphError> {
        let graph = grid.graph();
        assert_eq!(profiles.len(), graph.num_edges(), "one profile per edge");
        for (j, p) in profiles.iter().enumerate() {
            if let EdgeProfile::Samples(v) = p {
                if v.is_empty() {
                    return Err(GraphError::BadProfile {
                        edge: graph.edge(j).id.clone(),
                        reason: "empty sample list".into(),
                    });
                }
            }
        }
        let mut values = vec![0.0; grid.num_dofs()];
        let mut vertex_set: Vec<Option<f64>> = vec![None; graph.num_vertices()];
        for (j, profile) in profiles.iter().enumerate() {
            let len = graph.edge(j).length;
            let n = grid.cells(j);
            for p in 0..=n {
                let dof = grid.node(j, p);
                let s = grid.position(j, p);
                let value = profile.eval(s, len);
                if !value.is_finite() {
                    return Err(GraphError::BadProfile {
                        edge: graph.edge(j).id.clone(),
                        reason: format!("non-finite value at s = {s}"),
                    });
                }
                if p == 0 || p == n {
                    match vertex_set[dof] {
                        None => {
                            vertex_set[dof] = Some(value);
                            values[dof] = value;
                        }
                        Some(first) => {
                            let scale = first.abs().max(value.abs()).max(1.0);
                            if (first - value).abs() > CONTINUITY_TOL * scale {
                                return Err(GraphError::ContinuityMismatch {
                                    vertex: graph.vertex_ids()[dof].clone(),
                                    first,
                                    second: value,
                                });
                            }
                        }
                    }
                } else {
                    values[dof] = value;
                }
            }
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(edge, s)` on every edge.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(usize, f64) -> f64) -> Result<Self, GraphError> {
        let f = &f;
        let profiles: Vec<EdgeProfile<'_>> = (0..grid.graph().num_edges())
            .map(|j| EdgeProfile::Function(Box::new(move |s| f(j, s))))
            .collect();
        Self::from_profiles(grid.clone(), &profiles)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.grid.same_as(&other.grid)
    }

    /// Restriction to edge `j`, tail to head.
    pub fn edge_trace(&self, j: usize) -> Vec<f64> {
        self.grid.edge_nodes(j).map(|d| self.values[d]).collect()
    }

    /// Pointwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Edge-wise trapezoid rule.
    pub fn integrate(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.total_length()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫|∂f|²` for the piecewise-linear interpolant.
    pub fn dirichlet_energy(&self) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for j in 0..g.graph().num_edges() {
            let h = g.spacing(j);
            let mut prev = self.values[g.node(j, 0)];
            for p in 1..=g.cells(j) {
                let cur = self.values[g.node(j, p)];
                acc += (cur - prev) * (cur - prev) / h;
                prev = cur;
            }
        }
        acc
    }

    pub fn norms(&self) -> Norms {
        let l2sq: f64 = self
            .grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum();
        Norms {
            l2: l2sq.sqrt(),
            h1_seminorm: self.dirichlet_energy().sqrt(),
            sup: self.sup_norm(),
            mean: self.mean(),
        }
    }

    /// `sqrt(‖f‖₂² + ‖∂f‖₂²)`.
    pub fn h1_norm(&self) -> f64 {
        let n = self.norms();
        (n.l2 * n.l2 + n.h1_seminorm * n.h1_seminorm).sqrt()
    }
}
