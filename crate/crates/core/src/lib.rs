//! Numerical geometry of graphs of maps between surfaces.
//!
//! A map `f: (M, g_M) -> (N, g_N)` between two conformal surface charts is
//! sampled on a grid. From the samples the crate computes singular values,
//! Kähler angles, the second fundamental form of the graph in `M x N`,
//! residuals of the structure identities that govern minimal graphs, and a
//! discrete mean curvature flow that drives the graph toward a minimal one.

pub mod error;
pub mod expr;
pub mod flow;
pub mod graph_geometry;
pub mod map;
pub mod pointwise;
pub mod surface;
pub mod verifier;

pub use error::{Error, Result};
pub use map::{Bump, MapField, MapFormula};
pub use surface::{BoundaryMode, ConformalMetric, GridChart};
