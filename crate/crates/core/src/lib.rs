//! Point-wise affine analysis of locally linear networks.
//!
//! A network built from linear layers and piecewise-linear (or secant-linearized smooth)
//! activations is, at each input `x`, exactly `f(x) = u x + b`. This crate extracts
//! that form, splits the operator chain at a chosen layer, and uses the SVD of the
//! right-hand piece to write any output as an additive sum over singular vectors.

pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod netgraph;
pub mod pwa;
pub mod spectral;
pub mod toylab;
pub mod zoo;

pub use error::{Error, FormatError, Result};
pub use linalg::{Matrix, Operator, SvdResult, Tensor};
pub use netgraph::{LayerSpec, LinearizeOptions, NetworkModel, SmoothMode};
pub use pwa::{extract_affine, AffineOperator};
