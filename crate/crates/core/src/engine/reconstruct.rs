use nalgebra::DMatrix;

use super::{ClampMode, PathBundle, Stepper};
use crate::error::{Error, Result};
use crate::linalg::SmallLu;
use crate::model::CoefficientModel;

/// Brownian increments recovered from a dense bundle by inverting each Euler
/// step, `ΔŴ_k = ς(Z_k)⁻¹ (ΔZ_k − drift(Z_k) dt)` on interior steps and zero
/// on steps that start on the boundary.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub n_paths: usize,
    pub n_steps: usize,
    width: usize,
    increments: Vec<f64>,
    /// Largest `|ΔŴ − ΔW|` over interior steps whose end was not clamped.
    pub max_deviation: f64,
    pub interior_steps: usize,
    pub boundary_steps: usize,
    /// Interior steps that ended on the boundary after a clamp; the clamp
    /// breaks the algebraic inversion so they are left out of the deviation.
    pub clamped_steps: usize,
}

impl Reconstruction {
    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let off = (path * self.n_steps + step) * self.width;
        &self.increments[off..off + self.width]
    }
}

pub fn reconstruct_brownian(model: &dyn CoefficientModel, bundle: &PathBundle) -> Result<Reconstruction> {
    let dims = model.dims();
    if dims != bundle.dims {
        return Err(Error::DimensionMismatch {
            n: dims.n,
            m: dims.m,
            got_n: bundle.dims.n,
            got_m: bundle.dims.m,
        });
    }
    if !bundle.is_dense() {
        return Err(Error::BundleShape("a state at every step (record_stride = 1)"));
    }
    if !bundle.has_increments() {
        return Err(Error::BundleShape("stored increments"));
    }
    let d = dims.total();
    let n = dims.n;
    let dt = bundle.config.dt;
    let clamping = bundle.config.clamp_mode == ClampMode::PostStepClamp;
    let mut stepper = Stepper::new(model, bundle.kind, bundle.config.epsilon_floor);
    let mut lu = SmallLu::new(d);
    let mut vs = DMatrix::zeros(d, d);
    let mut rhs = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut out = Reconstruction {
        n_paths: bundle.n_paths(),
        n_steps: bundle.n_steps,
        width: d,
        increments: vec![0.0; bundle.n_paths() * bundle.n_steps * d],
        max_deviation: 0.0,
        interior_steps: 0,
        boundary_steps: 0,
        clamped_steps: 0,
    };
    for p in 0..bundle.n_paths() {
        stepper.reset_memory(&bundle.state(p, 0)[..n]);
        for k in 0..bundle.n_steps {
            let start = bundle.state(p, k);
            let end = bundle.state(p, k + 1);
            stepper.evaluate(start);
            if stepper.zp.x.iter().any(|&v| v == 0.0) {
                out.boundary_steps += 1;
                stepper.update_memory(&end[..n]);
                continue;
            }
            vs.copy_from(&stepper.sigma);
            for i in 0..n {
                let r = stepper.zp.x[i].sqrt();
                for c in 0..d {
                    vs[(i, c)] *= r;
                }
            }
            lu.factor(&vs).map_err(|e| e.at_step(p, k))?;
            for r in 0..d {
                rhs[r] = end[r] - start[r] - stepper.drift[r] * dt;
            }
            lu.solve(&mut rhs, &mut scratch);
            let off = (p * bundle.n_steps + k) * d;
            out.increments[off..off + d].copy_from_slice(&rhs);
            if clamping && end[..n].iter().any(|&v| v == 0.0) {
                out.clamped_steps += 1;
            } else {
                out.interior_steps += 1;
                let stored = bundle.increment(p, k).unwrap_or_default();
                for (a, b) in rhs.iter().zip(stored) {
                    out.max_deviation = out.max_deviation.max((a - b).abs());
                }
            }
            stepper.update_memory(&end[..n]);
        }
    }
    Ok(out)
}
