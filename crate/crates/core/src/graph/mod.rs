//! Metric graphs, their uniform per-edge discretization, and functions on them.
//!
//! A [`MetricGraph`] is a finite connected multigraph whose edges carry a
//! length. Each edge `j` is identified with the interval `[0, l_j]`, the
//! coordinate running from its tail to its head. A [`Grid`] splits every edge
//! into `n_j` equal cells and numbers the nodes so that each vertex owns one
//! degree of freedom shared by all incident edges; a [`GridFunction`] is then
//! continuous on the graph by construction.

mod grid;
mod inequality;

pub use grid::{EdgeProfile, Grid, GridFunction, Norms, Resolution};
pub use inequality::{check_moser, check_poincare, MoserCheck, PoincareCheck};

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no edges")]
    Empty,
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("edge `{edge}` refers to unknown vertex `{vertex}`")]
    DanglingEndpoint { edge: String, vertex: String },
    #[error("edge `{0}` is a self-loop; split it with an extra degree-2 vertex")]
    SelfLoop(String),
    #[error("edge `{edge}` has non-positive or non-finite length {length}")]
    NonpositiveLength { edge: String, length: f64 },
    #[error("graph is disconnected: vertex `{0}` is unreachable")]
    DisconnectedGraph(String),
    #[error("edge `{edge}` would have {cells} cells; at least 2 are required")]
    ResolutionTooCoarse { edge: String, cells: usize },
    #[error("resolution lists {given} cell counts for {expected} edges")]
    ResolutionLength { given: usize, expected: usize },
    #[error("profiles disagree at vertex `{vertex}`: {first} vs {second}")]
    ContinuityMismatch {
        vertex: String,
        first: f64,
        second: f64,
    },
    #[error("edge `{edge}`: {reason}")]
    BadProfile { edge: String, reason: String },
    #[error("non-finite value at degree of freedom {0}")]
    NonFinite(usize),
    #[error("function is not mean-zero (mean {0:e})")]
    NotMeanZero(f64),
    #[error("Dirichlet energy {energy} exceeds delta {delta}")]
    SeminormExceedsDelta { energy: f64, delta: f64 },
    #[error("delta must be positive, got {0}")]
    NonpositiveDelta(f64),
    #[error("grid functions live on different grids")]
    GridMismatch,
}

/// One edge of the input description: endpoints are vertex ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub length: f64,
}

impl EdgeSpec {
    pub fn new(id: impl Into<String>, tail: impl Into<String>, head: impl Into<String>, length: f64) -> Self {
        Self {
            id: id.into(),
            tail: tail.into(),
            head: head.into(),
            length,
        }
    }
}

/// A validated edge; endpoints are vertex indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertex_ids: Vec<String>,
    edges: Vec<Edge>,
    incidence: Vec<Vec<usize>>,
    total_length: f64,
}

impl MetricGraph {
    /// Validates a vertex list and edge list into a connected metric graph.
    pub fn new<S: AsRef<str>>(vertices: &[S], edges: &[EdgeSpec]) -> Result<Self, GraphError> {
        if edges.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut index = HashMap::with_capacity(vertices.len());
        let mut vertex_ids = Vec::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            let v = v.as_ref();
            if index.insert(v.to_string(), i).is_some() {
                return Err(GraphError::DuplicateVertex(v.to_string()));
            }
            vertex_ids.push(v.to_string());
        }

        let mut seen_edges = HashMap::with_capacity(edges.len());
        let mut validated = Vec::with_capacity(edges.len());
        let mut incidence = vec![Vec::new(); vertex_ids.len()];
        for (j, e) in edges.iter().enumerate() {
            if seen_edges.insert(e.id.clone(), j).is_some() {
                return Err(GraphError::DuplicateEdge(e.id.clone()));
            }
            let lookup = |v: &str| {
                index.get(v).copied().ok_or_else(|| GraphError::DanglingEndpoint {
                    edge: e.id.clone(),
                    vertex: v.to_string(),
                })
            };
            let tail = lookup(&e.tail)?;
            let head = lookup(&e.head)?;
            if tail == head {
                return Err(GraphError::SelfLoop(e.id.clone()));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(GraphError::NonpositiveLength {
                    edge: e.id.clone(),
                    length: e.length,
                });
            }
            incidence[tail].push(j);
            incidence[head].push(j);
            validated.push(Edge {
                id: e.id.clone(),
                tail,
                head,
                length: e.length,
            });
        }

        let graph = Self {
            total_length: validated.iter().map(|e| e.length).sum(),
            vertex_ids,
            edges: validated,
            incidence,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let n = self.vertex_ids.len();
        let mut reached = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(v) = queue.pop_front() {
            for &j in &self.incidence[v] {
                let w = self.other_end(j, v);
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        match reached.iter().position(|r| !r) {
            Some(v) => Err(GraphError::DisconnectedGraph(self.vertex_ids[v].clone())),
            None => Ok(()),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertex_ids
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertex_ids.iter().position(|v| v == id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, j: usize) -> &Edge {
        &self.edges[j]
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Edges incident to vertex `v`, in increasing edge index.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incidence[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incidence[v].len()
    }

    /// Total length `|Γ|`.
    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    fn other_end(&self, j: usize, v: usize) -> usize {
        let e = &self.edges[j];
        if e.tail == v {
            e.head
        } else {
            e.tail
        }
    }
}
