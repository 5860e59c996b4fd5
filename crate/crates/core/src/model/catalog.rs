//! Built-in models, including negative controls that deliberately violate one
//! assumption each, and the name-keyed registry used by run configurations.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::params::{ModelParams, ParamReader};
use super::test_function::smooth_cutoff;
use super::{compute_q0, CoefficientModel, DecomposedDiffusion, DeclaredConstants, PathMemory, SingularDrift};
use crate::error::{Error, Result};
use crate::geometry::{Dims, StatePoint};

fn dims(n: usize, m: usize) -> Dims {
    Dims { n, m }
}

/// Decomposition of a diffusion whose `a` is diagonal in the orthant block
/// and has no orthant/free coupling: `α_ii = a_ii`, `ᾱ = 0`, `c = 0`.
#[derive(Debug, Clone)]
struct DiagonalDecomposition {
    n: usize,
    a: DMatrix<f64>,
}

impl DecomposedDiffusion for DiagonalDecomposition {
    fn alpha_diag(&self, _z: &StatePoint, i: usize) -> f64 {
        self.a[(i, i)]
    }

    fn alpha_cross(&self, _z: &StatePoint, _i: usize, _j: usize) -> f64 {
        0.0
    }

    fn mixed(&self, _z: &StatePoint, _i: usize, _l: usize) -> f64 {
        0.0
    }

    fn free(&self, _z: &StatePoint, k: usize, l: usize) -> f64 {
        self.a[(self.n + k, self.n + l)]
    }
}

fn scalar_decomposition(sigma: f64) -> DiagonalDecomposition {
    DiagonalDecomposition {
        n: 1,
        a: DMatrix::from_element(1, 1, 0.5 * sigma * sigma),
    }
}

/// `dX = b dt + σ √X dW` with constant `b > 0` and `σ`.
#[derive(Debug, Clone)]
pub struct ConstWf1d {
    b: f64,
    sigma: f64,
    x0: f64,
    constants: DeclaredConstants,
    dec: DiagonalDecomposition,
}

impl ConstWf1d {
    pub fn new(b: f64, sigma: f64, x0: f64) -> Result<Self> {
        if !(b > 0.0) || sigma == 0.0 || !(x0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "const-wf-1d needs b > 0, σ ≠ 0, x0 >= 0 (got b={b}, σ={sigma}, x0={x0})"
            )));
        }
        let k = b.abs().max(sigma.abs());
        let q0 = compute_q0(b, k, 1, 0);
        Ok(Self {
            b,
            sigma,
            x0,
            constants: DeclaredConstants {
                b0: b,
                k,
                k0: 1.0,
                q: 0.5 * q0,
                alpha: 0.5,
            },
            dec: scalar_decomposition(sigma),
        })
    }

    fn from_params(p: &ModelParams) -> Result<Self> {
        let r = ParamReader::new("const-wf-1d", p);
        let m = Self::new(r.f64_or("b", 1.0)?, r.f64_or("sigma", 1.0)?, r.f64_or("x0", 0.5)?)?;
        r.finish()?;
        Ok(m)
    }
}

impl Default for ConstWf1d {
    fn default() -> Self {
        Self::new(1.0, 1.0, 0.5).expect("valid defaults")
    }
}

impl CoefficientModel for ConstWf1d {
    fn name(&self) -> &str {
        "const-wf-1d"
    }

    fn dims(&self) -> Dims {
        dims(1, 0)
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        StatePoint::new(vec![self.x0], vec![])
    }

    fn drift_x(&self, _z: &StatePoint, out: &mut [f64]) {
        out[0] = self.b;
    }

    fn sigma(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out[(0, 0)] = self.sigma;
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        Some(&self.dec)
    }
}

/// Mean-reverting square-root diffusion `dX = κ(θ − X) dt + σ √X dW`. Its
/// drift is unbounded, so `K` is declared over the box `[0, R]`.
#[derive(Debug, Clone)]
pub struct CirLike {
    kappa: f64,
    theta: f64,
    sigma: f64,
    x0: f64,
    constants: DeclaredConstants,
    dec: DiagonalDecomposition,
}

impl CirLike {
    pub fn new(kappa: f64, theta: f64, sigma: f64, x0: f64, radius: f64) -> Result<Self> {
        if !(kappa > 0.0 && theta > 0.0 && sigma != 0.0 && x0 >= 0.0 && radius > theta) {
            return Err(Error::InvalidParameter(
                "cir-like needs κ, θ > 0, σ ≠ 0, x0 >= 0 and R > θ".into(),
            ));
        }
        let b0 = kappa * theta;
        let k = b0.max(kappa * (radius - theta)).max(sigma.abs());
        Ok(Self {
            kappa,
            theta,
            sigma,
            x0,
            constants: DeclaredConstants {
                b0,
                k,
                k0: 1.0,
                q: 0.5 * compute_q0(b0, k, 1, 0),
                alpha: 0.5,
            },
            dec: scalar_decomposition(sigma),
        })
    }

    fn from_params(p: &ModelParams) -> Result<Self> {
        let r = ParamReader::new("cir-like", p);
        let m = Self::new(
            r.positive_or("kappa", 2.0)?,
            r.positive_or("theta", 1.0)?,
            r.f64_or("sigma", 1.0)?,
            r.f64_or("x0", 0.5)?,
            r.positive_or("radius", 10.0)?,
        )?;
        r.finish()?;
        Ok(m)
    }
}

impl CoefficientModel for CirLike {
    fn name(&self) -> &str {
        "cir-like"
    }

    fn dims(&self) -> Dims {
        dims(1, 0)
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        StatePoint::new(vec![self.x0], vec![])
    }

    fn drift_x(&self, z: &StatePoint, out: &mut [f64]) {
        out[0] = self.kappa * (self.theta - z.x[0]);
    }

    fn sigma(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out[(0, 0)] = self.sigma;
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        Some(&self.dec)
    }
}

/// One orthant and one free coordinate with state-dependent coupling:
/// `σ = [[s, 0], [ρ√x/(1+x), τ]]`, `b ≡ b`, `e(y) = −κ_y tanh(y)`.
#[derive(Debug, Clone)]
pub struct WfWithFreeCoord {
    s: f64,
    rho: f64,
    tau: f64,
    b: f64,
    kappa_y: f64,
    start: StatePoint,
    constants: DeclaredConstants,
}

impl WfWithFreeCoord {
    pub fn new(s: f64, rho: f64, tau: f64, b: f64, kappa_y: f64, start: StatePoint) -> Result<Self> {
        if !(s != 0.0 && tau != 0.0 && b > 0.0 && start.x[0] >= 0.0) {
            return Err(Error::InvalidParameter(
                "wf-with-free-coord needs s, τ ≠ 0, b > 0 and x0 >= 0".into(),
            ));
        }
        let k = b.max(s.abs()).max(0.5 * rho.abs()).max(tau.abs());
        Ok(Self {
            s,
            rho,
            tau,
            b,
            kappa_y,
            start,
            constants: DeclaredConstants {
                b0: b,
                k,
                k0: 1.0,
                q: 0.5 * compute_q0(b, k, 1, 1),
                alpha: 0.5,
            },
        })
    }

    fn from_params(p: &ModelParams) -> Result<Self> {
        let r = ParamReader::new("wf-with-free-coord", p);
        let start = StatePoint::new(vec![r.f64_or("x0", 0.5)?], vec![r.f64_or("y0", 0.0)?]);
        let m = Self::new(
            r.f64_or("s", 1.0)?,
            r.f64_or("rho", 0.3)?,
            r.f64_or("tau", 1.0)?,
            r.f64_or("b", 1.0)?,
            r.f64_or("kappa_y", 1.0)?,
            start,
        )?;
        r.finish()?;
        Ok(m)
    }

    fn coupling(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        self.rho * x.sqrt() / (1.0 + x)
    }
}

impl Default for WfWithFreeCoord {
    fn default() -> Self {
        Self::new(1.0, 0.3, 1.0, 1.0, 1.0, StatePoint::new(vec![0.5], vec![0.0])).expect("valid defaults")
    }
}

impl CoefficientModel for WfWithFreeCoord {
    fn name(&self) -> &str {
        "wf-with-free-coord"
    }

    fn dims(&self) -> Dims {
        dims(1, 1)
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        self.start.clone()
    }

    fn drift_x(&self, _z: &StatePoint, out: &mut [f64]) {
        out[0] = self.b;
    }

    fn drift_y(&self, z: &StatePoint, out: &mut [f64]) {
        out[0] = -self.kappa_y * z.y[0].tanh();
    }

    fn sigma(&self, z: &StatePoint, out: &mut DMatrix<f64>) {
        out[(0, 0)] = self.s;
        out[(0, 1)] = 0.0;
        out[(1, 0)] = self.coupling(z.x[0]);
        out[(1, 1)] = self.tau;
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        Some(self)
    }
}

impl DecomposedDiffusion for WfWithFreeCoord {
    fn alpha_diag(&self, _z: &StatePoint, _i: usize) -> f64 {
        0.5 * self.s * self.s
    }

    fn alpha_cross(&self, _z: &StatePoint, _i: usize, _j: usize) -> f64 {
        0.0
    }

    fn mixed(&self, z: &StatePoint, _i: usize, _l: usize) -> f64 {
        self.s * self.rho / (1.0 + z.x[0].max(0.0))
    }

    fn free(&self, z: &StatePoint, _k: usize, _l: usize) -> f64 {
        let c = self.coupling(z.x[0]);
        0.5 * (c * c + self.tau * self.tau)
    }
}

/// One-dimensional model with the logarithmic singular drift
/// `h(s) = ln(s) φ(s)`, where the cutoff `φ` equals 1 on `[0, r0/2]` and
/// vanishes beyond `r0`.
#[derive(Debug, Clone)]
pub struct LogDrift {
    b: f64,
    sigma: f64,
    f: f64,
    r0: f64,
    x0: f64,
    constants: DeclaredConstants,
    dec: DiagonalDecomposition,
}

impl LogDrift {
    pub fn new(b: f64, sigma: f64, f: f64, r0: f64, x0: f64, q: f64) -> Result<Self> {
        if !(b > 0.0 && sigma != 0.0 && r0 > 0.0 && r0 < 1.0 && x0 >= 0.0) {
            return Err(Error::InvalidParameter(
                "log-drift needs b > 0, σ ≠ 0, 0 < r0 < 1 and x0 >= 0".into(),
            ));
        }
        let k = b.max(sigma.abs());
        let q0 = compute_q0(b, k, 1, 0);
        if !(q > 0.0 && q < q0) {
            return Err(Error::Infeasible(format!(
                "log-drift exponent q={q} must lie in (0, q0) with q0 = min(1/4, b0/((n+m)K²)) = {q0}"
            )));
        }
        // |ln s| s^q peaks at s = e^{-1/q} with value 1/(q e); the cutoff is at most 1.
        let h_bound = 1.0 / (q * std::f64::consts::E);
        let k0 = f.abs().max((f / sigma).abs()).max(h_bound);
        Ok(Self {
            b,
            sigma,
            f,
            r0,
            x0,
            constants: DeclaredConstants {
                b0: b,
                k,
                k0,
                q,
                alpha: 0.5,
            },
            dec: scalar_decomposition(sigma),
        })
    }

    fn from_params(p: &ModelParams) -> Result<Self> {
        let r = ParamReader::new("log-drift", p);
        let m = Self::new(
            r.f64_or("b", 1.0)?,
            r.f64_or("sigma", 1.0)?,
            r.f64_or("f", 0.5)?,
            r.f64_or("r0", 0.8)?,
            r.f64_or("x0", 0.3)?,
            r.f64_or("q", 0.1)?,
        )?;
        r.finish()?;
        Ok(m)
    }

    pub fn h(&self, s: f64) -> f64 {
        s.ln() * smooth_cutoff(s, 0.5 * self.r0, self.r0)
    }
}

impl Default for LogDrift {
    fn default() -> Self {
        Self::new(1.0, 1.0, 0.5, 0.8, 0.3, 0.1).expect("valid defaults")
    }
}

impl CoefficientModel for LogDrift {
    fn name(&self) -> &str {
        "log-drift"
    }

    fn dims(&self) -> Dims {
        dims(1, 0)
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        StatePoint::new(vec![self.x0], vec![])
    }

    fn drift_x(&self, _z: &StatePoint, out: &mut [f64]) {
        out[0] = self.b;
    }

    fn sigma(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out[(0, 0)] = self.sigma;
    }

    fn singular(&self) -> Option<&dyn SingularDrift> {
        Some(self)
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        Some(&self.dec)
    }
}

impl SingularDrift for LogDrift {
    fn mixing(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out[(0, 0)] = self.f;
    }

    fn factor(&self, _i: usize, _j: usize, s: f64) -> f64 {
        self.h(s)
    }
}

/// Constant coefficients read from parameters (`n`, `m`, `b`, `e`, `sigma`,
/// `x0`, `y0`).
#[derive(Debug, Clone)]
pub struct ConstantModel {
    dims: Dims,
    b: Vec<f64>,
    e: Vec<f64>,
    sigma: DMatrix<f64>,
    start: StatePoint,
    constants: DeclaredConstants,
    dec: Option<DiagonalDecomposition>,
}

impl ConstantModel {
    pub fn new(dims: Dims, b: Vec<f64>, e: Vec<f64>, sigma: DMatrix<f64>, start: StatePoint) -> Result<Self> {
        let d = dims.total();
        if b.len() != dims.n || e.len() != dims.m || sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::InvalidParameter("custom model has inconsistent shapes".into()));
        }
        start.check_dims(dims)?;
        let b0 = b.iter().copied().fold(f64::INFINITY, f64::min);
        let k = b.iter().chain(sigma.iter()).fold(0.0f64, |acc, v| acc.max(v.abs()));
        let a = (&sigma * sigma.transpose()) * 0.5;
        let diagonal = (0..dims.n).all(|i| (0..d).all(|j| i == j || a[(i, j)] == 0.0));
        let b0 = if dims.n == 0 { 1.0 } else { b0 };
        Ok(Self {
            dims,
            b,
            e,
            start,
            constants: DeclaredConstants {
                b0,
                k,
                k0: 1.0,
                q: 0.5 * compute_q0(b0.max(0.0), k, dims.n, dims.m),
                alpha: 0.5,
            },
            dec: diagonal.then(|| DiagonalDecomposition { n: dims.n, a }),
            sigma,
        })
    }

    fn from_params(p: &ModelParams) -> Result<Self> {
        let r = ParamReader::new("custom", p);
        let n = r.usize_or("n", 1)?;
        let m = r.usize_or("m", 0)?;
        let dims = Dims::new(n, m)?;
        let d = dims.total();
        let b = r.vec_or("b", n, 1.0)?;
        let e = r.vec_or("e", m, 0.0)?;
        let sigma = match r.matrix("sigma", d)? {
            Some(v) => DMatrix::from_row_slice(d, d, &v),
            None => DMatrix::identity(d, d),
        };
        let start = StatePoint::new(r.vec_or("x0", n, 0.5)?, r.vec_or("y0", m, 0.0)?);
        r.finish()?;
        Self::new(dims, b, e, sigma, start)
    }
}

impl CoefficientModel for ConstantModel {
    fn name(&self) -> &str {
        "custom"
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        self.start.clone()
    }

    fn drift_x(&self, _z: &StatePoint, out: &mut [f64]) {
        out.copy_from_slice(&self.b);
    }

    fn drift_y(&self, _z: &StatePoint, out: &mut [f64]) {
        out.copy_from_slice(&self.e);
    }

    fn sigma(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out.copy_from(&self.sigma);
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        self.dec.as_ref().map(|d| d as &dyn DecomposedDiffusion)
    }
}

/// Negative control: constant negative drift on the orthant coordinate,
/// violating boundary nonnegativity while declaring `b0 = 1`.
#[derive(Debug, Clone)]
pub struct NegativeDrift {
    b: f64,
    x0: f64,
    constants: DeclaredConstants,
    dec: DiagonalDecomposition,
}

impl NegativeDrift {
    pub fn new(b: f64, x0: f64) -> Self {
        Self {
            b,
            x0,
            constants: DeclaredConstants {
                b0: 1.0,
                k: b.abs().max(1.0),
                k0: 1.0,
                q: 0.1,
                alpha: 0.5,
            },
            dec: scalar_decomposition(1.0),
        }
    }

    fn from_params(p: &ModelParams) -> Result<Self> {
        let r = ParamReader::new("neg-drift", p);
        let m = Self::new(r.f64_or("b", -1.0)?, r.f64_or("x0", 0.5)?);
        r.finish()?;
        Ok(m)
    }
}

impl CoefficientModel for NegativeDrift {
    fn name(&self) -> &str {
        "neg-drift"
    }

    fn dims(&self) -> Dims {
        dims(1, 0)
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        StatePoint::new(vec![self.x0], vec![])
    }

    fn drift_x(&self, _z: &StatePoint, out: &mut [f64]) {
        out[0] = self.b;
    }

    fn sigma(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out[(0, 0)] = 1.0;
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        Some(&self.dec)
    }
}

/// Negative control for the Markov property: `b = b0 + κ (M − x)` where `M`
/// is the running maximum of the path.
#[derive(Debug, Clone)]
pub struct RunningMax {
    b0: f64,
    kappa: f64,
    x0: f64,
    constants: DeclaredConstants,
}

impl RunningMax {
    pub fn new(b0: f64, kappa: f64, x0: f64) -> Self {
        Self {
            b0,
            kappa,
            x0,
            constants: DeclaredConstants {
                b0,
                k: b0.max(1.0),
                k0: 1.0,
                q: 0.5 * compute_q0(b0, b0.max(1.0), 1, 0),
                alpha: 0.5,
            },
        }
    }

    fn from_params(p: &ModelParams) -> Result<Self> {
        let r = ParamReader::new("running-max", p);
        let m = Self::new(r.positive_or("b0", 1.0)?, r.f64_or("kappa", 4.0)?, r.f64_or("x0", 0.5)?);
        r.finish()?;
        Ok(m)
    }
}

impl CoefficientModel for RunningMax {
    fn name(&self) -> &str {
        "running-max"
    }

    fn dims(&self) -> Dims {
        dims(1, 0)
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        StatePoint::new(vec![self.x0], vec![])
    }

    /// Without history the running maximum is the current state.
    fn drift_x(&self, _z: &StatePoint, out: &mut [f64]) {
        out[0] = self.b0;
    }

    fn drift_x_with_memory(&self, z: &StatePoint, memory: &PathMemory, out: &mut [f64]) {
        let m = memory.running_max.first().copied().unwrap_or(z.x[0]).max(z.x[0]);
        out[0] = self.b0 + self.kappa * (m - z.x[0]);
    }

    fn sigma(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out[(0, 0)] = 1.0;
    }

    fn is_markov(&self) -> bool {
        false
    }
}

/// Negative control for strict ellipticity: two orthant coordinates with
/// `α ≡ 1` and `ᾱ_12 = 0.9 / max(√(x1 x2), 0.3)`. The matrix `a` stays
/// positive definite, but the quadratic form on the unit box is indefinite
/// near the corner.
#[derive(Debug, Clone)]
pub struct IndefiniteEllipticity {
    constants: DeclaredConstants,
}

impl IndefiniteEllipticity {
    pub fn new() -> Self {
        Self {
            constants: DeclaredConstants {
                b0: 1.0,
                k: 2.0f64.sqrt(),
                k0: 1.0,
                q: 0.05,
                alpha: 0.5,
            },
        }
    }

    fn cross(x: &[f64]) -> f64 {
        0.9 / (x[0].max(0.0) * x[1].max(0.0)).sqrt().max(0.3)
    }

    fn a12(x: &[f64]) -> f64 {
        Self::cross(x) * (x[0].max(0.0) * x[1].max(0.0)).sqrt()
    }
}

impl Default for IndefiniteEllipticity {
    fn default() -> Self {
        Self::new()
    }
}

impl CoefficientModel for IndefiniteEllipticity {
    fn name(&self) -> &str {
        "indefinite-ellipticity"
    }

    fn dims(&self) -> Dims {
        dims(2, 0)
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        StatePoint::new(vec![0.5, 0.5], vec![])
    }

    fn drift_x(&self, _z: &StatePoint, out: &mut [f64]) {
        out.fill(1.0);
    }

    /// Lower Cholesky factor of `2a`.
    fn sigma(&self, z: &StatePoint, out: &mut DMatrix<f64>) {
        let a12 = Self::a12(&z.x);
        let r2 = 2.0f64.sqrt();
        out[(0, 0)] = r2;
        out[(0, 1)] = 0.0;
        out[(1, 0)] = r2 * a12;
        out[(1, 1)] = (2.0 - 2.0 * a12 * a12).sqrt();
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        Some(self)
    }
}

impl DecomposedDiffusion for IndefiniteEllipticity {
    fn alpha_diag(&self, _z: &StatePoint, _i: usize) -> f64 {
        1.0
    }

    fn alpha_cross(&self, z: &StatePoint, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            Self::cross(&z.x)
        }
    }

    fn mixed(&self, _z: &StatePoint, _i: usize, _l: usize) -> f64 {
        0.0
    }

    fn free(&self, _z: &StatePoint, _k: usize, _l: usize) -> f64 {
        0.0
    }
}

/// Negative control for coefficient regularity: `b(x) = x^p` with small `p`.
#[derive(Debug, Clone)]
pub struct RoughDrift {
    p: f64,
    x0: f64,
    constants: DeclaredConstants,
    dec: DiagonalDecomposition,
}

impl RoughDrift {
    pub fn new(p: f64, x0: f64) -> Self {
        Self {
            p,
            x0,
            constants: DeclaredConstants {
                b0: 1.0,
                k: 1.0,
                k0: 1.0,
                q: 0.1,
                alpha: 0.9,
            },
            dec: scalar_decomposition(1.0),
        }
    }

    fn from_params(p: &ModelParams) -> Result<Self> {
        let r = ParamReader::new("rough-drift", p);
        let m = Self::new(r.positive_or("p", 0.1)?, r.f64_or("x0", 0.5)?);
        r.finish()?;
        Ok(m)
    }
}

impl CoefficientModel for RoughDrift {
    fn name(&self) -> &str {
        "rough-drift"
    }

    fn dims(&self) -> Dims {
        dims(1, 0)
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn default_start(&self) -> StatePoint {
        StatePoint::new(vec![self.x0], vec![])
    }

    fn drift_x(&self, z: &StatePoint, out: &mut [f64]) {
        out[0] = z.x[0].max(0.0).powf(self.p);
    }

    fn sigma(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out[(0, 0)] = 1.0;
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        Some(&self.dec)
    }
}

/// Builds a model from keyed parameters.
pub trait ModelFactory: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn build(&self, params: &ModelParams) -> Result<Arc<dyn CoefficientModel>>;
}

struct Factory {
    name: &'static str,
    description: &'static str,
    build: fn(&ModelParams) -> Result<Arc<dyn CoefficientModel>>,
}

impl ModelFactory for Factory {
    fn name(&self) -> &'static str {
        self.name
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn build(&self, params: &ModelParams) -> Result<Arc<dyn CoefficientModel>> {
        (self.build)(params)
    }
}

fn no_params(name: &'static str, p: &ModelParams) -> Result<()> {
    ParamReader::new(name, p).finish()
}

/// Name-keyed catalog of model factories.
pub struct ModelRegistry {
    factories: BTreeMap<&'static str, Box<dyn ModelFactory>>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// The catalog with every built-in model and negative control.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        let builtins: [Factory; 9] = [
            Factory {
                name: "const-wf-1d",
                description: "one orthant coordinate, constant drift and dispersion",
                build: |p| Ok(Arc::new(ConstWf1d::from_params(p)?)),
            },
            Factory {
                name: "cir-like",
                description: "mean-reverting square-root diffusion",
                build: |p| Ok(Arc::new(CirLike::from_params(p)?)),
            },
            Factory {
                name: "wf-with-free-coord",
                description: "one orthant and one free coordinate with coupled noise",
                build: |p| Ok(Arc::new(WfWithFreeCoord::from_params(p)?)),
            },
            Factory {
                name: "log-drift",
                description: "singular logarithmic drift ln(x)·cutoff(x)",
                build: |p| Ok(Arc::new(LogDrift::from_params(p)?)),
            },
            Factory {
                name: "custom",
                description: "constant coefficients from parameters",
                build: |p| Ok(Arc::new(ConstantModel::from_params(p)?)),
            },
            Factory {
                name: "neg-drift",
                description: "negative control: b ≡ −1 on the boundary",
                build: |p| Ok(Arc::new(NegativeDrift::from_params(p)?)),
            },
            Factory {
                name: "running-max",
                description: "negative control: drift reads the running maximum",
                build: |p| Ok(Arc::new(RunningMax::from_params(p)?)),
            },
            Factory {
                name: "indefinite-ellipticity",
                description: "negative control: indefinite ellipticity form",
                build: |p| {
                    no_params("indefinite-ellipticity", p)?;
                    Ok(Arc::new(IndefiniteEllipticity::new()))
                },
            },
            Factory {
                name: "rough-drift",
                description: "negative control: b(x) = x^p",
                build: |p| Ok(Arc::new(RoughDrift::from_params(p)?)),
            },
        ];
        for f in builtins {
            r.register(Box::new(f));
        }
        r
    }

    /// Adds or replaces a factory under its name.
    pub fn register(&mut self, factory: Box<dyn ModelFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn describe(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.factories.values().map(|f| (f.name(), f.description()))
    }

    pub fn build(&self, name: &str, params: &ModelParams) -> Result<Arc<dyn CoefficientModel>> {
        self.factories
            .get(name)
            .ok_or_else(|| Error::Unknown {
                kind: "model",
                name: name.to_string(),
            })?
            .build(params)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
