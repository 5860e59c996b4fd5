//! Config-driven runner for Kimura diffusion experiments: loads a JSON run
//! description, runs validators, simulations and registered experiments, and
//! writes `report.json` plus CSV artifacts.

pub mod config;
pub mod experiments;

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use kimura_core::diagnostics::{support_report, Check, DiagnosticReport, Verdict};
use kimura_core::engine::{write_increments_csv, write_paths_csv, Simulator};
use kimura_core::girsanov::check_theta_bound;
use kimura_core::model::{
    check_drift_boundary, check_model_ellipticity, check_singular_bounds, default_lambda, estimate_k, sampling,
    BoundaryMode, CoefficientModel, ModelRegistry,
};
use serde::Serialize;

pub use config::{load_config, Equation, RunConfig, Tolerances};
pub use experiments::{Context, Experiment, ExperimentRegistry};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("experiment `{name}`: {source}")]
    Experiment {
        name: String,
        #[source]
        source: Box<CliError>,
    },

    #[error(transparent)]
    Core(#[from] kimura_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// What a run does after the config has been validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Coefficient validators only.
    Validate,
    /// Simulate the configured equation and export paths.
    Simulate,
    /// The experiments listed in the config, in order.
    Diagnose,
    /// The Girsanov comparison alone.
    Compare,
    /// The Hölder validator alone.
    Holder,
}

/// Number of coefficient samples drawn by the validators.
const VALIDATION_SAMPLES: usize = 512;

/// Applies command-line overrides to a config.
pub fn apply_overrides(config: &mut RunConfig, seed: Option<u64>, out: Option<PathBuf>) {
    if let Some(s) = seed {
        config.sim.master_seed = s;
    }
    if let Some(o) = out {
        config.output_dir = o;
    }
}

/// Validates the config and runs one command. Reports are returned in
/// execution order; report.json and run_meta.json are written to the output
/// directory.
pub fn execute(
    command: Command,
    config: &RunConfig,
    models: &ModelRegistry,
    experiments: &ExperimentRegistry,
) -> Result<Vec<DiagnosticReport>, CliError> {
    config.validate(models, experiments)?;
    let model = models.build(&config.model_name, &config.model_params)?;
    let ctx = Context {
        config,
        model: model.as_ref(),
        start: config.start.clone().unwrap_or_else(|| model.default_start()),
        out_dir: &config.output_dir,
    };
    std::fs::create_dir_all(&config.output_dir)?;
    let reports = match command {
        Command::Validate => validate_model(ctx.model, config)?,
        Command::Simulate => simulate(&ctx)?,
        Command::Diagnose => {
            if config.experiments.is_empty() {
                return Err(CliError::Config("no experiments listed".into()));
            }
            let mut all = Vec::new();
            for name in &config.experiments {
                all.extend(run_experiment(experiments, name, &ctx)?);
            }
            all
        }
        Command::Compare => run_experiment(experiments, "girsanov-compare", &ctx)?,
        Command::Holder => run_experiment(experiments, "holder-validate", &ctx)?,
    };
    write_report(&config.output_dir, &reports)?;
    write_run_meta(&config.output_dir, command, config)?;
    Ok(reports)
}

fn run_experiment(
    registry: &ExperimentRegistry,
    name: &str,
    ctx: &Context<'_>,
) -> Result<Vec<DiagnosticReport>, CliError> {
    let e = registry
        .get(name)
        .ok_or_else(|| CliError::Config(format!("unknown experiment `{name}`")))?;
    let mut reports = e.run(ctx).map_err(|source| CliError::Experiment {
        name: name.to_string(),
        source: Box::new(source),
    })?;
    for r in &mut reports {
        r.set_meta("experiment", name);
    }
    Ok(reports)
}

/// The standing assumptions that can be checked from the coefficients alone.
pub fn validate_model(model: &dyn CoefficientModel, config: &RunConfig) -> Result<Vec<DiagnosticReport>, CliError> {
    let dims = model.dims();
    let c = model.constants();
    let interior = sampling::interior_samples(dims, VALIDATION_SAMPLES, sampling::DEFAULT_RADIUS);
    let mut reports = Vec::new();
    if dims.n > 0 {
        let boundary = sampling::boundary_samples(dims, VALIDATION_SAMPLES, sampling::DEFAULT_RADIUS);
        reports.push(check_drift_boundary(model, &boundary, BoundaryMode::Positive)?);
    }
    let mut all = interior.clone();
    all.extend(sampling::boundary_samples(dims, VALIDATION_SAMPLES, sampling::DEFAULT_RADIUS));
    reports.push(check_model_ellipticity(model, &all, 4)?);
    reports.push(
        DiagnosticReport::new("declared_k", estimate_k(model, &all)?, 0.0, c.k, Check::AtMost)
            .meta("model", model.name()),
    );
    let q0 = c.q0(dims);
    let q_ok = if config.q < q0 { Verdict::Pass } else { Verdict::Fail };
    reports.push(DiagnosticReport::with_verdict("q_below_q0", config.q, 0.0, q0, q_ok).meta("model", model.name()));
    if model.singular().is_some() {
        reports.push(check_singular_bounds(model, &all, c.q)?);
        let lambda = match config.tolerances.lambda {
            Some(l) => l,
            None => default_lambda(model, &interior)?,
        };
        reports.push(check_theta_bound(model, &interior, c.q, lambda, config.sim.epsilon_floor)?);
    }
    for r in &mut reports {
        r.set_meta("experiment", "validate");
    }
    Ok(reports)
}

fn simulate(ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError> {
    let config = ctx.config;
    let bundle = Simulator::new(ctx.model, &config.sim).kind(ctx.kind())?.run(&ctx.start)?;
    if config.write_paths {
        write_paths_csv(&bundle, create(ctx.out_dir, "paths.csv")?)?;
    }
    if config.sim.retain_increments {
        write_increments_csv(&bundle, create(ctx.out_dir, "increments.csv")?)?;
    }
    let c_tol = config
        .tolerances
        .c_tol
        .unwrap_or_else(|| kimura_core::diagnostics::default_c_tol(ctx.model));
    let mut r = support_report(&bundle, c_tol)?;
    r.set_meta("model", ctx.model.name());
    r.set_meta("experiment", "simulate");
    Ok(vec![r])
}

fn create(dir: &Path, file: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(file))?))
}

/// Writes reports as a pretty JSON array. Contains nothing time-dependent,
/// so equal configs give byte-identical files.
pub fn write_report(dir: &Path, reports: &[DiagnosticReport]) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(reports)?;
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<Vec<DiagnosticReport>, CliError> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: Command,
    unix_time_s: u64,
    workers: usize,
    crate_version: &'static str,
    config: &'a RunConfig,
}

/// Timestamps and environment details kept out of report.json.
fn write_run_meta(dir: &Path, command: Command, config: &RunConfig) -> Result<(), CliError> {
    let meta = RunMeta {
        command,
        unix_time_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        workers: rayon::current_num_threads(),
        crate_version: env!("CARGO_PKG_VERSION"),
        config,
    };
    std::fs::write(dir.join("run_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Exit status: 0 when every verdict is PASS, 1 otherwise.
pub fn exit_status(reports: &[DiagnosticReport]) -> u8 {
    if reports.iter().all(|r| r.passed()) {
        0
    } else {
        1
    }
}

/// Fixed-width table of name, estimate, stderr, bound and verdict.
pub fn summary_table(reports: &[DiagnosticReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:<26} {:>13} {:>11} {:>13}  verdict",
        "experiment", "check", "estimate", "stderr", "bound"
    );
    for r in reports {
        let exp = r.metadata.get("experiment").and_then(|v| v.as_str()).unwrap_or("-");
        let _ = writeln!(
            s,
            "{:<22} {:<26} {:>13.6e} {:>11.3e} {:>13.6e}  {}",
            exp, r.name, r.estimate, r.stderr, r.bound, r.verdict
        );
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    let _ = writeln!(s, "{} checks, {} not PASS", reports.len(), failed);
    s
}
