//! Numerical toolkit for SRB measures of hyperbolic attractors.

pub mod cocycle;
pub mod dynsys;
pub mod error;
pub mod graph_transform;
pub mod holonomy;
pub mod linalg;
pub mod shooting;
pub mod srb;
pub mod symbolic;
pub mod thermo;
pub mod splitting;

pub use error::{Error, Result};
