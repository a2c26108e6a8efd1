//! Multi-resolution PDE-preserving neural networks for parametric
//! spatiotemporal dynamics.
//!
//! A coarse-grid discretization of the governing equations runs inside the
//! residual connection of a convolutional next-step model. This crate holds
//! the finite-difference solvers used both to generate reference data and as
//! the fixed PDE branch, a small reverse-mode autodiff engine, the network,
//! its training loop and the rollout error analysis.

pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod field;
pub mod io;
pub mod model;
pub mod physics;
pub mod rollout;
pub mod stencil;
pub mod train;

pub use error::{Error, FormatError, Result};
pub use field::{Field, Grid2D, ParamVector};
