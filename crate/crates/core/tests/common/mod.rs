#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use kwgraph::graph::{EdgeSpec, Grid, GridFunction, MetricGraph, Resolution};
use kwgraph::solvers::build_upper;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn graph(vertices: &[&str], edges: &[(&str, &str, f64)]) -> MetricGraph {
    let specs: Vec<EdgeSpec> = edges
        .iter()
        .enumerate()
        .map(|(i, (t, h, l))| EdgeSpec::new(format!("e{i}"), *t, *h, *l))
        .collect();
    MetricGraph::new(vertices, &specs).unwrap()
}

pub fn unit_edge() -> MetricGraph {
    graph(&["a", "b"], &[("a", "b", 1.0)])
}

/// Star with unit edges, all oriented away from the centre.
pub fn star(arms: usize) -> MetricGraph {
    let names: Vec<String> = (0..=arms).map(|i| format!("v{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let edges: Vec<(&str, &str, f64)> = (1..=arms).map(|i| (refs[0], refs[i], 1.0)).collect();
    graph(&refs, &edges)
}

/// The five fixed topologies, with unequal lengths where the shape allows.
pub fn topologies() -> Vec<(&'static str, MetricGraph)> {
    vec![
        ("edge", unit_edge()),
        ("path", graph(&["a", "b", "c"], &[("a", "b", 0.7), ("b", "c", 1.3)])),
        ("star", star(3)),
        ("triangle", graph(&["a", "b", "c"], &[("a", "b", 1.0), ("b", "c", 0.8), ("c", "a", 1.2)])),
        (
            "theta",
            graph(&["a", "b", "c"], &[("a", "b", 0.6), ("a", "b", 1.0), ("b", "a", 1.4), ("b", "c", 0.5)]),
        ),
    ]
}

/// A connected graph with 1 to 6 edges: a random tree plus up to two extra
/// (possibly parallel) edges.
pub fn random_graph(rng: &mut TestRng) -> MetricGraph {
    let edges = rng.gen_range(1..=6usize);
    let extra = if edges >= 3 { rng.gen_range(0..=2usize.min(edges - 2)) } else { 0 };
    let tree_edges = edges - extra;
    let n = tree_edges + 1;
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut specs = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let (t, h) = if rng.gen_bool(0.5) { (parent, i) } else { (i, parent) };
        specs.push(EdgeSpec::new(format!("e{}", specs.len()), &names[t], &names[h], rng.gen_range(0.4..1.6)));
    }
    for _ in 0..extra {
        let t = rng.gen_range(0..n);
        let mut h = rng.gen_range(0..n - 1);
        if h >= t {
            h += 1;
        }
        specs.push(EdgeSpec::new(format!("e{}", specs.len()), &names[t], &names[h], rng.gen_range(0.4..1.6)));
    }
    MetricGraph::new(&names, &specs).unwrap()
}

pub fn random_grid(rng: &mut TestRng, min_cells: usize, max_cells: usize) -> Arc<Grid> {
    let g = random_graph(rng);
    let cells = (0..g.num_edges()).map(|_| rng.gen_range(min_cells..=max_cells)).collect();
    Grid::new(g, &Resolution::PerEdge(cells)).unwrap()
}

/// Smooth continuous function: linear between random vertex values plus a
/// few random sine modes vanishing at both ends of every edge.
pub fn random_smooth(rng: &mut TestRng, grid: &Arc<Grid>, amplitude: f64) -> GridFunction {
    let graph = grid.graph();
    let vertex: Vec<f64> = (0..graph.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let modes: Vec<[f64; 3]> = (0..graph.num_edges())
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5), rng.gen_range(-0.25..0.25)])
        .collect();
    GridFunction::from_fn(grid.clone(), |j, s| {
        let e = graph.edge(j);
        let t = s / e.length;
        let base = vertex[e.tail] * (1.0 - t) + vertex[e.head] * t;
        let bumps: f64 = modes[j]
            .iter()
            .enumerate()
            .map(|(k, a)| a * ((k + 1) as f64 * PI * t).sin())
            .sum();
        amplitude * (base + bumps)
    })
    .unwrap()
}

/// Random mean-zero function with a nonzero range.
pub fn random_mean_zero(rng: &mut TestRng, grid: &Arc<Grid>) -> GridFunction {
    let amp = rng.gen_range(0.1..3.0);
    let f = random_smooth(rng, grid, amp);
    let mean = f.mean();
    f.map(|v| v - mean)
}

/// Sign-changing `h` with `∫h < 0`.
pub fn random_sign_changing(rng: &mut TestRng, grid: &Arc<Grid>) -> GridFunction {
    loop {
        let f = random_mean_zero(rng, grid);
        let t = rng.gen_range(0.05..0.6);
        let h = f.map(|v| v - t * f.max());
        if h.max() > 0.0 && h.integrate() < 0.0 {
            return h;
        }
    }
}

/// `h ≤ 0` with `∫h < 0`, sometimes vanishing somewhere.
pub fn random_nonpositive(rng: &mut TestRng, grid: &Arc<Grid>) -> GridFunction {
    let amp = rng.gen_range(0.2..2.0);
    let f = random_smooth(rng, grid, amp);
    let floor = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.05..1.0) };
    let top = f.max();
    f.map(|v| -(top - v) - floor)
}

/// `h` positive somewhere, with `max h` at least a fifth of its range.
pub fn random_somewhere_positive(rng: &mut TestRng, grid: &Arc<Grid>) -> GridFunction {
    let amp = rng.gen_range(0.2..2.0);
    let f = random_smooth(rng, grid, amp);
    let shift = rng.gen_range(-0.3..0.8) * (f.max() - f.min());
    let h = f.map(|v| v - f.min() - 0.5 * (f.max() - f.min()) + shift);
    if h.max() > 0.0 {
        h
    } else {
        h.map(|v| v - h.max() + 0.1)
    }
}

/// `(h, c)` with `c < 0` at or above the analytic value, so the analytic
/// upper solution applies.
pub fn random_negative_analytic(rng: &mut TestRng, grid: &Arc<Grid>) -> (GridFunction, f64) {
    let h = random_sign_changing(rng, grid);
    let implied = build_upper(&h).unwrap().implied_c;
    let c = implied * rng.gen_range(0.1..=1.0);
    (h, c)
}

pub fn sup_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `∫h·eᵘ` by the trapezoid rule, edge by edge.
pub fn trapezoid_h_exp_u(u: &GridFunction, h: &GridFunction) -> f64 {
    let grid = u.grid();
    let (uv, hv) = (u.values(), h.values());
    let mut total = 0.0;
    for j in 0..grid.graph().num_edges() {
        let dx = grid.spacing(j);
        for p in 0..grid.cells(j) {
            let (a, b) = (grid.node(j, p), grid.node(j, p + 1));
            total += 0.5 * dx * (hv[a] * uv[a].exp() + hv[b] * uv[b].exp());
        }
    }
    total
}

/// `∫(∂u)²e^{−u}` for the piecewise-linear interpolant of `u`, integrated
/// exactly cell by cell.
pub fn exact_weighted_energy(u: &GridFunction) -> f64 {
    let grid = u.grid();
    let uv = u.values();
    let mut total = 0.0;
    for j in 0..grid.graph().num_edges() {
        let dx = grid.spacing(j);
        for p in 0..grid.cells(j) {
            let (a, b) = (uv[grid.node(j, p)], uv[grid.node(j, p + 1)]);
            let d = b - a;
            // ∫₀¹ e^{−(a + d t)} dt
            let mean_exp = if d.abs() < 1e-8 {
                (-a).exp() * (1.0 - d / 2.0 + d * d / 6.0)
            } else {
                ((-a).exp() - (-b).exp()) / d
            };
            total += d * d / dx * mean_exp;
        }
    }
    total
}
