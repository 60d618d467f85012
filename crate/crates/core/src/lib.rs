//! Kazdan-Warner equation `∂²u = c − h·eᵘ` on compact metric graphs with
//! continuity and Kirchhoff conditions at the vertices.
//!
//! Functions are discretized with continuous piecewise-linear elements on a
//! uniform grid per edge; see [`graph::Grid`].

pub mod assembly;
pub mod graph;
pub mod solvers;
pub mod verify;
pub mod cli;
pub mod problem;
