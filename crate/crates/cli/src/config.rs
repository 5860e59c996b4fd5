use std::path::{Path, PathBuf};

use kimura_core::engine::{DriftKind, SimConfig};
use kimura_core::geometry::StatePoint;
use kimura_core::holder::HolderGrid;
use kimura_core::model::{ModelParams, ModelRegistry};
use serde::{Deserialize, Serialize};

use crate::experiments::ExperimentRegistry;
use crate::CliError;

/// Optional overrides for experiment thresholds and knobs. Every key is
/// checked; absent keys fall back to the defaults documented per field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Khas'minskii smallness threshold `δ` (0.5).
    pub delta: Option<f64>,
    /// `Λ` in the singular integrand (1 for standard runs, the model
    /// default for singular ones).
    pub lambda: Option<f64>,
    /// Upper bound on the Novikov moment (none: finiteness only).
    pub novikov_bound: Option<f64>,
    /// Support tolerance constant `c_tol` (5·K).
    pub c_tol: Option<f64>,
    /// Martingale residual bias allowance per unit `dt` (1).
    pub c_dt: Option<f64>,
    /// Multiplier on the generator in the residual (1).
    pub generator_scale: Option<f64>,
    /// Center of the bump test function (the start point).
    pub bump_center: Option<Vec<f64>>,
    /// Width of the bump test function (1.5).
    pub bump_width: Option<f64>,
    /// Restart split time (T/2, rounded to the grid).
    pub t_split: Option<f64>,
    /// Coordinate compared by marginal tests (0).
    pub coord: Option<usize>,
    /// Hölder exponent (the model's declared one).
    pub alpha: Option<f64>,
    /// Largest tolerated fraction of overflow-excluded paths (0.001).
    pub max_excluded_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    #[default]
    Standard,
    Singular,
}

impl From<Equation> for DriftKind {
    fn from(e: Equation) -> Self {
        match e {
            Equation::Standard => DriftKind::Standard,
            Equation::Singular => DriftKind::Singular,
        }
    }
}

/// A complete run description, read from one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model_name: String,
    #[serde(default)]
    pub model_params: ModelParams,
    pub sim: SimConfig,
    /// Singularity exponent used by the weighted experiments; must lie in
    /// `(0, q0)`.
    pub q: f64,
    /// Start point; the model's default when absent.
    #[serde(default)]
    pub start: Option<StatePoint>,
    /// Equation simulated by experiments that accept either.
    #[serde(default)]
    pub equation: Equation,
    #[serde(default)]
    pub experiments: Vec<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub holder_grid: HolderGrid,
    /// Write every recorded state of the simulate command to paths.csv.
    #[serde(default)]
    pub write_paths: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("kimura-out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("parse error: {e}")))
    }

    /// Checks references and constraints that the schema alone cannot.
    pub fn validate(&self, models: &ModelRegistry, experiments: &ExperimentRegistry) -> Result<(), CliError> {
        let model = models.build(&self.model_name, &self.model_params)?;
        self.sim.validate()?;
        let q0 = model.constants().q0(model.dims());
        if !(self.q > 0.0 && self.q < q0) {
            return Err(CliError::Config(format!(
                "q = {} must lie in (0, q0) with q0 = min{{1/4, b0/((n+m)K^2)}} = {q0} for model `{}`",
                self.q, self.model_name
            )));
        }
        if let Some(z) = &self.start {
            if z.dims() != model.dims() || !z.is_canonical() {
                return Err(CliError::Config(format!("start {z} is not a point of the state space")));
            }
        }
        if self.equation == Equation::Singular && model.singular().is_none() {
            return Err(CliError::Config(format!(
                "equation `singular` needs a model with a singular drift; `{}` has none",
                self.model_name
            )));
        }
        for name in &self.experiments {
            if !experiments.contains(name) {
                return Err(CliError::Config(format!(
                    "unknown experiment `{name}`; known: {}",
                    experiments.names().collect::<Vec<_>>().join(", ")
                )));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}
