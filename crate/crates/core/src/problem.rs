//! Problem files: a metric graph, the data `h` and the constant `c` in JSON.
//!
//! ```json
//! {
//!   "vertices": ["v0", {"id": "v1", "coords": [1.0, 0.0]}],
//!   "edges": [{"id": "e0", "tail": "v0", "head": "v1", "length": 1.0, "cells": 64}],
//!   "h": {"e0": "cos(pi*s) - 0.1"},
//!   "c": -0.5
//! }
//! ```
//!
//! `h` is either one profile for every edge or a map from edge id to a
//! profile. A profile is a number, an expression in the arclength `s` from
//! the tail, or an array of equally spaced samples from tail to head.
//! Expressions support `+ - * / ^`, `sin`, `cos`, `exp`, `log` (natural),
//! `sqrt` and the constants `pi` and `e`. `cells` is optional; by default
//! every spacing is at most a 32nd of the shortest edge.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::graph::{EdgeProfile, EdgeSpec, GraphError, Grid, GridFunction, MetricGraph, Resolution};

/// Cells per shortest edge when a file gives no counts.
pub const DEFAULT_CELLS_PER_SHORTEST_EDGE: f64 = 32.0;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("edge `{edge}`: cannot parse h expression `{expression}`: {message}")]
    Expression {
        edge: String,
        expression: String,
        message: String,
    },
    #[error("h gives no profile for edge `{0}`")]
    MissingProfile(String),
    #[error("h gives a profile for unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("problem file has no `c` and none was supplied")]
    MissingC,
    #[error("c = {0} is not finite")]
    NonFiniteC(f64),
    #[error("cell count must be at least 2, got {0}")]
    BadCells(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum VertexEntry {
    Id(String),
    Object {
        id: String,
        #[serde(default)]
        coords: Option<Vec<f64>>,
    },
}

impl VertexEntry {
    pub fn id(&self) -> &str {
        match self {
            VertexEntry::Id(id) | VertexEntry::Object { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub length: f64,
    #[serde(default)]
    pub cells: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    Expression(String),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum HSpec {
    All(Profile),
    PerEdge(BTreeMap<String, Profile>),
}

/// The file as written, before validation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub vertices: Vec<VertexEntry>,
    pub edges: Vec<EdgeEntry>,
    pub h: HSpec,
    #[serde(default)]
    pub c: Option<f64>,
}

/// A validated problem on a concrete grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub h: GridFunction,
    pub c: Option<f64>,
}

impl Problem {
    pub fn grid(&self) -> &Arc<Grid> {
        self.h.grid()
    }

    /// `c` from the override if given, else from the file.
    pub fn c_or(&self, c_override: Option<f64>) -> Result<f64, ProblemError> {
        let c = c_override.or(self.c).ok_or(ProblemError::MissingC)?;
        if c.is_finite() {
            Ok(c)
        } else {
            Err(ProblemError::NonFiniteC(c))
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, ProblemError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn graph(&self) -> Result<MetricGraph, ProblemError> {
        let vertices: Vec<&str> = self.vertices.iter().map(VertexEntry::id).collect();
        let edges: Vec<EdgeSpec> = self
            .edges
            .iter()
            .map(|e| EdgeSpec::new(&e.id, &e.tail, &e.head, e.length))
            .collect();
        Ok(MetricGraph::new(&vertices, &edges)?)
    }

    /// Cell counts: `cells` overrides everything, then per-edge counts from
    /// the file, then the default spacing.
    pub fn resolution(&self, graph: &MetricGraph, cells: Option<usize>) -> Result<Resolution, ProblemError> {
        if let Some(n) = cells {
            if n < 2 {
                return Err(ProblemError::BadCells(n));
            }
            return Ok(Resolution::Uniform(n));
        }
        let shortest = graph.edges().iter().map(|e| e.length).fold(f64::INFINITY, f64::min);
        let counts = self
            .edges
            .iter()
            .map(|e| {
                e.cells
                    .unwrap_or_else(|| (DEFAULT_CELLS_PER_SHORTEST_EDGE * e.length / shortest).ceil() as usize)
            })
            .collect();
        Ok(Resolution::PerEdge(counts))
    }

    pub fn build(&self, cells: Option<usize>) -> Result<Problem, ProblemError> {
        let graph = self.graph()?;
        let resolution = self.resolution(&graph, cells)?;
        let grid = Grid::new(graph, &resolution)?;
        let h = sample_h(&grid, &self.h)?;
        Ok(Problem { h, c: self.c })
    }
}

fn normalize(expression: &str) -> String {
    expression.replace('\u{2212}', "-").replace('\u{00b7}', "*")
}

fn compile(edge: &str, expression: &str) -> Result<Box<dyn Fn(f64) -> f64>, ProblemError> {
    let fail = |message: String| ProblemError::Expression {
        edge: edge.to_string(),
        expression: expression.to_string(),
        message,
    };
    let expr: meval::Expr = normalize(expression).parse().map_err(|e: meval::Error| fail(e.to_string()))?;
    let mut ctx = meval::Context::new();
    ctx.func("log", f64::ln);
    let f = expr.bind_with_context(ctx, "s").map_err(|e| fail(e.to_string()))?;
    Ok(Box::new(f))
}

fn edge_profile(edge: &str, profile: &Profile) -> Result<EdgeProfile<'static>, ProblemError> {
    Ok(match profile {
        Profile::Constant(v) => {
            let v = *v;
            EdgeProfile::Function(Box::new(move |_| v))
        }
        Profile::Expression(text) => EdgeProfile::Function(compile(edge, text)?),
        Profile::Samples(v) => EdgeProfile::Samples(v.clone()),
    })
}

/// Samples `h` on `grid` according to the file's profile(s).
pub fn sample_h(grid: &Arc<Grid>, spec: &HSpec) -> Result<GridFunction, ProblemError> {
    let graph = grid.graph();
    let profiles = match spec {
        HSpec::All(p) => graph
            .edges()
            .iter()
            .map(|e| edge_profile(&e.id, p))
            .collect::<Result<Vec<_>, _>>()?,
        HSpec::PerEdge(map) => {
            if let Some(unknown) = map.keys().find(|id| graph.edge_index(id).is_none()) {
                return Err(ProblemError::UnknownEdge(unknown.clone()));
            }
            graph
                .edges()
                .iter()
                .map(|e| {
                    let p = map.get(&e.id).ok_or_else(|| ProblemError::MissingProfile(e.id.clone()))?;
                    edge_profile(&e.id, p)
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    Ok(GridFunction::from_profiles(grid.clone(), &profiles)?)
}
