//! Geometry of equidistant foliations around a reference surface in a
//! hyperbolic three-manifold, and volume-preserving mean curvature flow of
//! graph surfaces over the reference leaf.

pub mod chart;
pub mod commands;
pub mod config;
pub mod datagen;
pub mod flow;
pub mod error;
pub mod foliation;
pub mod graph;
pub mod grid;
pub mod io;
pub mod laplacian;
pub mod oracle;
pub mod stability;
pub mod tensor;

pub use error::{Error, Result};
