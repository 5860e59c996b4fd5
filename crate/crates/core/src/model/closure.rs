use std::fmt;

use nalgebra::DMatrix;

use super::{CoefficientModel, DecomposedDiffusion, DeclaredConstants, SingularDrift};
use crate::error::{Error, Result};
use crate::geometry::{Dims, StatePoint};

type VecFn = Box<dyn Fn(&StatePoint, &mut [f64]) + Send + Sync>;
type MatFn = Box<dyn Fn(&StatePoint, &mut DMatrix<f64>) + Send + Sync>;
type FactorFn = Box<dyn Fn(usize, usize, f64) -> f64 + Send + Sync>;
type ScalarFn1 = Box<dyn Fn(&StatePoint, usize) -> f64 + Send + Sync>;
type ScalarFn2 = Box<dyn Fn(&StatePoint, usize, usize) -> f64 + Send + Sync>;

struct FnSingular {
    mixing: MatFn,
    factor: FactorFn,
}

impl SingularDrift for FnSingular {
    fn mixing(&self, z: &StatePoint, out: &mut DMatrix<f64>) {
        (self.mixing)(z, out)
    }

    fn factor(&self, i: usize, j: usize, s: f64) -> f64 {
        (self.factor)(i, j, s)
    }
}

struct FnDecomposition {
    alpha_diag: ScalarFn1,
    alpha_cross: ScalarFn2,
    mixed: ScalarFn2,
    free: ScalarFn2,
}

impl DecomposedDiffusion for FnDecomposition {
    fn alpha_diag(&self, z: &StatePoint, i: usize) -> f64 {
        (self.alpha_diag)(z, i)
    }

    fn alpha_cross(&self, z: &StatePoint, i: usize, j: usize) -> f64 {
        (self.alpha_cross)(z, i, j)
    }

    fn mixed(&self, z: &StatePoint, i: usize, l: usize) -> f64 {
        (self.mixed)(z, i, l)
    }

    fn free(&self, z: &StatePoint, k: usize, l: usize) -> f64 {
        (self.free)(z, k, l)
    }
}

/// A model assembled from closures, for ad-hoc coefficients in experiments
/// and tests.
pub struct FnModel {
    name: String,
    dims: Dims,
    constants: DeclaredConstants,
    start: StatePoint,
    drift_x: VecFn,
    drift_y: VecFn,
    sigma: MatFn,
    singular: Option<FnSingular>,
    decomposition: Option<FnDecomposition>,
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("constants", &self.constants)
            .field("singular", &self.singular.is_some())
            .field("decomposition", &self.decomposition.is_some())
            .finish()
    }
}

impl FnModel {
    pub fn builder(name: impl Into<String>, dims: Dims) -> FnModelBuilder {
        FnModelBuilder {
            name: name.into(),
            dims,
            constants: DeclaredConstants {
                b0: 1.0,
                k: 1.0,
                k0: 1.0,
                q: 0.1,
                alpha: 0.5,
            },
            start: None,
            drift_x: None,
            drift_y: None,
            sigma: None,
            singular: None,
            decomposition: None,
        }
    }
}

impl CoefficientModel for FnModel {
    fn name(&self) -> &str {
        &self.name
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

    fn drift_x(&self, z: &StatePoint, out: &mut [f64]) {
        (self.drift_x)(z, out)
    }

    fn drift_y(&self, z: &StatePoint, out: &mut [f64]) {
        (self.drift_y)(z, out)
    }

    fn sigma(&self, z: &StatePoint, out: &mut DMatrix<f64>) {
        (self.sigma)(z, out)
    }

    fn singular(&self) -> Option<&dyn SingularDrift> {
        self.singular.as_ref().map(|s| s as &dyn SingularDrift)
    }

    fn decomposition(&self) -> Option<&dyn DecomposedDiffusion> {
        self.decomposition.as_ref().map(|d| d as &dyn DecomposedDiffusion)
    }
}

pub struct FnModelBuilder {
    name: String,
    dims: Dims,
    constants: DeclaredConstants,
    start: Option<StatePoint>,
    drift_x: Option<VecFn>,
    drift_y: Option<VecFn>,
    sigma: Option<MatFn>,
    singular: Option<FnSingular>,
    decomposition: Option<FnDecomposition>,
}

impl FnModelBuilder {
    pub fn constants(mut self, constants: DeclaredConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn start(mut self, z: StatePoint) -> Self {
        self.start = Some(z);
        self
    }

    pub fn drift_x(mut self, f: impl Fn(&StatePoint, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift_x = Some(Box::new(f));
        self
    }

    pub fn drift_y(mut self, f: impl Fn(&StatePoint, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift_y = Some(Box::new(f));
        self
    }

    pub fn sigma(mut self, f: impl Fn(&StatePoint, &mut DMatrix<f64>) + Send + Sync + 'static) -> Self {
        self.sigma = Some(Box::new(f));
        self
    }

    pub fn singular(
        mut self,
        mixing: impl Fn(&StatePoint, &mut DMatrix<f64>) + Send + Sync + 'static,
        factor: impl Fn(usize, usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.singular = Some(FnSingular {
            mixing: Box::new(mixing),
            factor: Box::new(factor),
        });
        self
    }

    pub fn decomposition(
        mut self,
        alpha_diag: impl Fn(&StatePoint, usize) -> f64 + Send + Sync + 'static,
        alpha_cross: impl Fn(&StatePoint, usize, usize) -> f64 + Send + Sync + 'static,
        mixed: impl Fn(&StatePoint, usize, usize) -> f64 + Send + Sync + 'static,
        free: impl Fn(&StatePoint, usize, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.decomposition = Some(FnDecomposition {
            alpha_diag: Box::new(alpha_diag),
            alpha_cross: Box::new(alpha_cross),
            mixed: Box::new(mixed),
            free: Box::new(free),
        });
        self
    }

    /// Missing drifts default to zero; `σ` is required.
    pub fn build(self) -> Result<FnModel> {
        let sigma = self.sigma.ok_or_else(|| Error::MissingComponent {
            model: self.name.clone(),
            what: "a dispersion matrix",
        })?;
        let start = self.start.unwrap_or_else(|| StatePoint::zeros(self.dims));
        start.check_dims(self.dims)?;
        Ok(FnModel {
            name: self.name,
            dims: self.dims,
            constants: self.constants,
            start,
            drift_x: self.drift_x.unwrap_or_else(|| Box::new(|_, out| out.fill(0.0))),
            drift_y: self.drift_y.unwrap_or_else(|| Box::new(|_, out| out.fill(0.0))),
            sigma,
            singular: self.singular,
            decomposition: self.decomposition,
        })
    }
}
