//! Coefficient bundles `(b, e, σ, f, h)`, the matrices derived from them, and
//! the validators for the standing assumptions on the coefficients.

mod catalog;
mod closure;
mod ops;
mod params;
pub mod sampling;
mod test_function;
mod validate;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::{Dims, StatePoint};

pub use catalog::{
    ConstWf1d, CirLike, ConstantModel, IndefiniteEllipticity, LogDrift, ModelFactory, ModelRegistry,
    NegativeDrift, RoughDrift, RunningMax, WfWithFreeCoord,
};
pub use closure::{FnModel, FnModelBuilder};
pub use ops::{
    apply_generator, apply_generator_decomposed, assemble_a, assemble_d, assemble_varsigma, compute_q0,
    invert_sigma, reassemble_a,
};
pub use params::{ModelParams, ParamReader};
pub use test_function::{smooth_cutoff, ConstantFunction, SmoothBump, TestFunction};
pub use validate::{
    check_decomposition, check_drift_boundary, check_ellipticity, check_ellipticity_surrogate,
    check_model_ellipticity, check_singular_bounds, default_lambda, estimate_k, BoundaryMode,
};

/// Constants a model declares about itself. Validators compare them with
/// sampled evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    /// Lower bound of `b_i` on the face `{x_i = 0}`.
    pub b0: f64,
    /// Bound on `|b_i|` and `|σ_jl|`.
    pub k: f64,
    /// Bound on `|f|`, `|σ⁻¹ f|` and `|h_ij(s)| s^q`.
    pub k0: f64,
    /// Singularity exponent of `h`.
    pub q: f64,
    /// Hölder exponent of the coefficients.
    pub alpha: f64,
}

impl DeclaredConstants {
    pub fn q0(&self, dims: Dims) -> f64 {
        compute_q0(self.b0, self.k, dims.n, dims.m)
    }
}

/// Path-dependent quantities available to non-Markov drifts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathMemory {
    /// Running maximum of each orthant coordinate.
    pub running_max: Vec<f64>,
}

/// The coefficients of a standard Kimura equation, optionally carrying a
/// singular drift and an analytic decomposition of `a = σσ*/2`.
///
/// Implementations must be immutable after construction: the engine shares
/// one instance across worker threads.
pub trait CoefficientModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dims(&self) -> Dims;

    fn constants(&self) -> &DeclaredConstants;

    fn default_start(&self) -> StatePoint;

    /// `b(z)` into `out` (length `n`).
    fn drift_x(&self, z: &StatePoint, out: &mut [f64]);

    /// `e(z)` into `out` (length `m`).
    fn drift_y(&self, z: &StatePoint, out: &mut [f64]) {
        let _ = z;
        out.fill(0.0);
    }

    /// `σ(z)` into a square `(n+m)×(n+m)` matrix.
    fn sigma(&self, z: &StatePoint, out: &mut DMatrix<f64>);

    /// Drift for models whose coefficients read the path history.
    fn drift_x_with_memory(&self, z: &StatePoint, memory: &PathMemory, out: &mut [f64]) {
        let _ = memory;
        self.drift_x(z, out);
    }

    fn is_markov(&self) -> bool {
        true
    }

    fn singular(&self) -> Option<&dyn SingularDrift> {
        None
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        None
    }
}

/// The singular part `Σ_j f_ij(z) h_ij(x_j)` of the drift.
pub trait SingularDrift: Send + Sync {
    /// `f(z)` into an `(n+m)×n` matrix.
    fn mixing(&self, z: &StatePoint, out: &mut DMatrix<f64>);

    /// `h_ij(s)` for row `i` in `0..n+m` and column `j` in `0..n`.
    fn factor(&self, i: usize, j: usize, s: f64) -> f64;
}

/// Analytic factors with `a_ij = δ_ij α_ii + ᾱ_ij √(x_i x_j)`,
/// `a_{i,n+l} = c_il √x_i / 2` and the free block `a_{n+k,n+l}`.
pub trait DecomposedDiffusion: Send + Sync {
    fn alpha_diag(&self, z: &StatePoint, i: usize) -> f64;

    fn alpha_cross(&self, z: &StatePoint, i: usize, j: usize) -> f64;

    fn mixed(&self, z: &StatePoint, i: usize, l: usize) -> f64;

    fn free(&self, z: &StatePoint, k: usize, l: usize) -> f64;
}

/// `ξ(z)` with `h` evaluated at `max(x_j, floor)`. Rows `i < n` get no `√x_i`
/// prefactor here. `mixing` is scratch of shape `(n+m)×n`.
pub(crate) fn singular_xi(
    sing: &dyn SingularDrift,
    z: &StatePoint,
    floor: f64,
    mixing: &mut DMatrix<f64>,
    out: &mut [f64],
) {
    sing.mixing(z, mixing);
    let n = z.x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..n {
            let f = mixing[(i, j)];
            if f != 0.0 {
                acc += f * sing.factor(i, j, z.x[j].max(floor));
            }
        }
        *o = acc;
    }
}
