use nalgebra::DMatrix;

use super::{CoefficientModel, DecomposedDiffusion, TestFunction};
use crate::error::{Error, Result};
use crate::geometry::StatePoint;
use crate::linalg;

fn sigma_at(model: &dyn CoefficientModel, z: &StatePoint) -> DMatrix<f64> {
    let d = model.dims().total();
    let mut s = DMatrix::zeros(d, d);
    model.sigma(z, &mut s);
    s
}

/// `a(z) = σ(z) σ(z)* / 2`.
pub fn assemble_a(model: &dyn CoefficientModel, z: &StatePoint) -> DMatrix<f64> {
    let s = sigma_at(model, z);
    (&s * s.transpose()) * 0.5
}

/// `ς(z)`: rows `i < n` of `σ(z)` scaled by `√x_i`, free rows unchanged.
pub fn assemble_varsigma(model: &dyn CoefficientModel, z: &StatePoint) -> DMatrix<f64> {
    let mut s = sigma_at(model, z);
    scale_rows_sqrt(&mut s, &z.x);
    s
}

pub(crate) fn scale_rows_sqrt(s: &mut DMatrix<f64>, x: &[f64]) {
    for (i, &xi) in x.iter().enumerate() {
        let r = xi.max(0.0).sqrt();
        s.row_mut(i).scale_mut(r);
    }
}

/// Diffusion matrix `D = ς ς*`.
pub fn assemble_d(model: &dyn CoefficientModel, z: &StatePoint) -> DMatrix<f64> {
    let v = assemble_varsigma(model, z);
    &v * v.transpose()
}

/// Admissible singularity threshold `min{1/4, b0 / ((n+m) K²)}`.
pub fn compute_q0(b0: f64, k: f64, n: usize, m: usize) -> f64 {
    (b0 / ((n + m) as f64 * k * k)).min(0.25)
}

/// `σ(z)⁻¹` at an interior point.
pub fn invert_sigma(model: &dyn CoefficientModel, z: &StatePoint) -> Result<DMatrix<f64>> {
    z.check_dims(model.dims())?;
    if !z.is_interior() {
        return Err(Error::InvalidParameter(format!(
            "σ is inverted only at interior points, got {z}"
        )));
    }
    linalg::invert_checked(&sigma_at(model, z), &z.to_string())
}

/// `a` rebuilt from its analytic decomposition.
pub fn reassemble_a(dec: &dyn DecomposedDiffusion, z: &StatePoint) -> DMatrix<f64> {
    let n = z.x.len();
    let m = z.y.len();
    let mut a = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            let mut v = dec.alpha_cross(z, i, j) * (z.x[i] * z.x[j]).sqrt();
            if i == j {
                v += dec.alpha_diag(z, i);
            }
            a[(i, j)] = v;
        }
        for l in 0..m {
            let v = 0.5 * dec.mixed(z, i, l) * z.x[i].sqrt();
            a[(i, n + l)] = v;
            a[(n + l, i)] = v;
        }
    }
    for k in 0..m {
        for l in 0..m {
            a[(n + k, n + l)] = dec.free(z, k, l);
        }
    }
    a
}

fn generator_from_a(
    a: &DMatrix<f64>,
    b: &[f64],
    e: &[f64],
    u: &dyn TestFunction,
    z: &StatePoint,
) -> f64 {
    let n = z.x.len();
    let m = z.y.len();
    let d = n + m;
    let mut grad = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    u.gradient(z, &mut grad);
    u.hessian(z, &mut hess);
    let sx: Vec<f64> = z.x.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += sx[i] * sx[j] * a[(i, j)] * hess[(i, j)];
        }
        for l in 0..m {
            acc += sx[i] * (a[(i, n + l)] + a[(n + l, i)]) * hess[(i, n + l)];
        }
        acc += b[i] * grad[i];
    }
    for l in 0..m {
        for k in 0..m {
            acc += a[(n + l, n + k)] * hess[(n + l, n + k)];
        }
        acc += e[l] * grad[n + l];
    }
    acc
}

/// Kimura generator `L̂u(z)` with `a = σσ*/2`.
pub fn apply_generator(model: &dyn CoefficientModel, u: &dyn TestFunction, z: &StatePoint) -> f64 {
    let dims = model.dims();
    let mut b = vec![0.0; dims.n];
    let mut e = vec![0.0; dims.m];
    model.drift_x(z, &mut b);
    model.drift_y(z, &mut e);
    generator_from_a(&assemble_a(model, z), &b, &e, u, z)
}

/// `L̂u(z)` with `a` taken from the analytic decomposition.
pub fn apply_generator_decomposed(
    model: &dyn CoefficientModel,
    dec: &dyn DecomposedDiffusion,
    u: &dyn TestFunction,
    z: &StatePoint,
) -> f64 {
    let dims = model.dims();
    let mut b = vec![0.0; dims.n];
    let mut e = vec![0.0; dims.m];
    model.drift_x(z, &mut b);
    model.drift_y(z, &mut e);
    generator_from_a(&reassemble_a(dec, z), &b, &e, u, z)
}
