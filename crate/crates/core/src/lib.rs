//! Simulation and diagnostics for Kimura diffusions with singular drift on
//! the corner `[0, ∞)^n × ℝ^m`.

pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod girsanov;
pub mod holder;
pub mod linalg;
pub mod model;
pub mod stats;

pub use error::{Error, Result};
