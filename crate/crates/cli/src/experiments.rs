use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use kimura_core::diagnostics::{
    default_c_tol, floor_sweep, khasminskii_report, marginal_compare, martingale_residual, novikov_report,
    restart_consistency, support_report, Check, DiagnosticReport, IntegralObserver, ResidualOptions,
    SingularIntegrand, Verdict,
};
use kimura_core::engine::{record_plan, ClampMode, DriftKind, SimConfig, Simulator, Starts};
use kimura_core::geometry::StatePoint;
use kimura_core::girsanov::{
    reweighted_expectation, write_weights_csv, Direction, LogWeightObserver, Normalization, WeightedPathBundle,
};
use kimura_core::holder::{validate_coefficient_holder, write_norms_csv};
use kimura_core::model::{default_lambda, sampling, CoefficientModel, SmoothBump};

use crate::config::RunConfig;
use crate::CliError;

/// Salt of the independent singular run in the Girsanov comparison.
const DIRECT_RUN_SALT: u64 = 0x6469_7265_6374;

/// Everything an experiment may read, plus the directory it may write to.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub model: &'a dyn CoefficientModel,
    pub start: StatePoint,
    pub out_dir: &'a Path,
}

impl Context<'_> {
    pub fn kind(&self) -> DriftKind {
        self.config.equation.into()
    }

    fn sim(&self) -> &SimConfig {
        &self.config.sim
    }

    fn create(&self, file: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(self.out_dir)?;
        Ok(BufWriter::new(File::create(self.out_dir.join(file))?))
    }

    /// `Λ` for the singular integrand: the override, else the model default
    /// when it has a singular drift, else 1.
    fn lambda(&self) -> Result<f64, CliError> {
        if let Some(l) = self.config.tolerances.lambda {
            return Ok(l);
        }
        if self.model.singular().is_some() {
            let samples = sampling::interior_samples(self.model.dims(), 512, sampling::DEFAULT_RADIUS);
            return Ok(default_lambda(self.model, &samples)?);
        }
        Ok(1.0)
    }

    fn coord(&self) -> usize {
        self.config.tolerances.coord.unwrap_or(0)
    }
}

/// A named diagnostic that can be selected from a run config.
pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn run(&self, ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError>;
}

/// Name-keyed catalog of experiments.
pub struct ExperimentRegistry {
    entries: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Khasminskii));
        r.register(Box::new(Novikov));
        r.register(Box::new(Support));
        r.register(Box::new(MartingaleResidual));
        r.register(Box::new(GirsanovCompare));
        r.register(Box::new(Restart));
        r.register(Box::new(HolderValidate));
        r
    }

    /// Adds or replaces an experiment under its name.
    pub fn register(&mut self, e: Box<dyn Experiment>) {
        self.entries.insert(e.name(), e);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&dyn Experiment> {
        self.entries.get(name).map(|e| e.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn describe(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.entries.values().map(|e| (e.name(), e.description()))
    }
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// Terminal integrals `[floor][path]` of the singular integrand along the
/// configured equation, streamed without storing paths.
fn terminal_integrals(ctx: &Context<'_>, floors: &[f64]) -> Result<Vec<Vec<f64>>, CliError> {
    let integrand = SingularIntegrand::new(ctx.config.q, ctx.lambda()?)?;
    let cfg = ctx.sim().clone().terminal_only();
    let steps = record_plan(&cfg, &[])?;
    let (_, per_path) = Simulator::new(ctx.model, &cfg)
        .kind(ctx.kind())?
        .run_observed(Starts::Common(&ctx.start), |_| {
            IntegralObserver::new(integrand, floors, cfg.dt, &steps)
        })?;
    Ok((0..floors.len())
        .map(|f| per_path.iter().map(|rows| *rows[f].last().unwrap_or(&0.0)).collect())
        .collect())
}

fn annotate(r: &mut DiagnosticReport, ctx: &Context<'_>) {
    r.set_meta("model", ctx.model.name());
    r.set_meta("horizon_t", ctx.sim().horizon_t);
    r.set_meta("dt", ctx.sim().dt);
    r.set_meta("seed", ctx.sim().master_seed);
}

struct Khasminskii;

impl Experiment for Khasminskii {
    fn name(&self) -> &'static str {
        "khasminskii"
    }

    fn description(&self) -> &'static str {
        "E[∫ Λ Σ X^{-2q} dt] against δ, with an epsilon-floor sweep"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError> {
        let floors = floor_sweep(ctx.sim().epsilon_floor);
        let integrals = terminal_integrals(ctx, &floors)?;
        let delta = ctx.config.tolerances.delta.unwrap_or(0.5);
        let mut r = khasminskii_report(&integrals, &floors, delta)?;
        annotate(&mut r, ctx);
        r.set_meta("q", ctx.config.q);
        Ok(vec![r])
    }
}

struct Novikov;

impl Experiment for Novikov {
    fn name(&self) -> &'static str {
        "novikov"
    }

    fn description(&self) -> &'static str {
        "E[exp(∫ Λ Σ X^{-2q} dt)], finite or below a declared bound"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError> {
        let integrals = terminal_integrals(ctx, &[ctx.sim().epsilon_floor])?;
        let bound = ctx.config.tolerances.novikov_bound.unwrap_or(f64::INFINITY);
        let mut r = novikov_report(&integrals[0], bound)?;
        annotate(&mut r, ctx);
        r.set_meta("q", ctx.config.q);
        Ok(vec![r])
    }
}

struct Support;

impl Experiment for Support {
    fn name(&self) -> &'static str {
        "support"
    }

    fn description(&self) -> &'static str {
        "0.999-quantile of pre-clamp negativity against c_tol·√dt"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError> {
        // Without the clamp, negativity accumulates and drift violations show.
        let cfg = ctx.sim().clone().terminal_only().clamp(ClampMode::RecordOnly);
        let bundle = Simulator::new(ctx.model, &cfg).kind(ctx.kind())?.run(&ctx.start)?;
        let c_tol = ctx.config.tolerances.c_tol.unwrap_or_else(|| default_c_tol(ctx.model));
        let mut r = support_report(&bundle, c_tol)?;
        r.set_meta("model", ctx.model.name());
        Ok(vec![r])
    }
}

struct MartingaleResidual;

impl Experiment for MartingaleResidual {
    fn name(&self) -> &'static str {
        "martingale-residual"
    }

    fn description(&self) -> &'static str {
        "E[u(Z_T)] − u(z0) − E[∫ L̂u] for a smooth bump u"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError> {
        let t = &ctx.config.tolerances;
        let center = t.bump_center.clone().unwrap_or_else(|| ctx.start.to_vec());
        if center.len() != ctx.model.dims().total() {
            return Err(CliError::Config(format!(
                "bump_center has {} coordinates, the model has {}",
                center.len(),
                ctx.model.dims().total()
            )));
        }
        let u = SmoothBump::new(center, t.bump_width.unwrap_or(1.5));
        let opts = ResidualOptions {
            generator_scale: t.generator_scale.unwrap_or(1.0),
            c_dt: t.c_dt.unwrap_or(1.0),
        };
        let mut r = martingale_residual(ctx.model, &u, &ctx.start, ctx.sim(), &opts)?;
        r.set_meta("model", ctx.model.name());
        Ok(vec![r])
    }
}

struct GirsanovCompare;

impl Experiment for GirsanovCompare {
    fn name(&self) -> &'static str {
        "girsanov-compare"
    }

    fn description(&self) -> &'static str {
        "reweighted standard paths against directly simulated singular paths"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError> {
        let model = ctx.model;
        if model.singular().is_none() {
            return Err(CliError::Config(format!(
                "girsanov-compare needs a model with a singular drift; `{}` has none",
                model.name()
            )));
        }
        let cfg = ctx.sim().clone().terminal_only();
        let steps = record_plan(&cfg, &[])?;
        // Construction is infallible once the singular drift is known to exist.
        LogWeightObserver::new(model, Direction::StandardToSingular, cfg.dt, cfg.epsilon_floor, &steps)?;
        let (base, records) = Simulator::new(model, &cfg).run_observed(Starts::Common(&ctx.start), |_| {
            LogWeightObserver::new(model, Direction::StandardToSingular, cfg.dt, cfg.epsilon_floor, &steps)
                .expect("singular drift present")
        })?;
        let wb = WeightedPathBundle::from_records(base, Direction::StandardToSingular, records)?;
        write_weights_csv(&wb, ctx.create("weights.csv")?)?;

        let direct = Simulator::new(model, &cfg)
            .singular()?
            .stream_salt(DIRECT_RUN_SALT)
            .run(&ctx.start)?;
        let coord = ctx.coord();
        let a: Vec<f64> = wb.retained().map(|p| wb.base.terminal(p)[coord]).collect();
        let mut ks = marginal_compare(&a, Some(&wb.terminal_weights()), &direct.terminal_column(coord))?;
        annotate(&mut ks, ctx);
        ks.set_meta("coord", coord);

        let est = reweighted_expectation(&wb, |_, _| 1.0, Normalization::Raw)?;
        let mean_weight = DiagnosticReport::with_verdict(
            "weight_mean",
            est.estimate,
            est.stderr,
            1.0,
            if (est.estimate - 1.0).abs() <= 3.0 * est.stderr {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
        )
        .meta("ess", est.ess)
        .meta("n_used", est.n_used);

        let max_excluded = ctx.config.tolerances.max_excluded_fraction.unwrap_or(1e-3);
        let excluded = DiagnosticReport::new(
            "weight_exclusion",
            wb.excluded_fraction(),
            0.0,
            max_excluded,
            Check::AtMost,
        );
        Ok(vec![ks, mean_weight, excluded])
    }
}

struct Restart;

impl Experiment for Restart {
    fn name(&self) -> &'static str {
        "restart"
    }

    fn description(&self) -> &'static str {
        "continued against restarted paths at a split time, compared by KS"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError> {
        let sim = ctx.sim();
        let t_split = match ctx.config.tolerances.t_split {
            Some(t) => t,
            None => (sim.n_steps()? / 2) as f64 * sim.dt,
        };
        let r = restart_consistency(ctx.model, ctx.kind(), &ctx.start, t_split, sim, ctx.coord())?;
        Ok(vec![r])
    }
}

struct HolderValidate;

impl Experiment for HolderValidate {
    fn name(&self) -> &'static str {
        "holder-validate"
    }

    fn description(&self) -> &'static str {
        "empirical Hölder seminorms of the coefficients on refined grids"
    }

    fn run(&self, ctx: &Context<'_>) -> Result<Vec<DiagnosticReport>, CliError> {
        let alpha = ctx.config.tolerances.alpha.unwrap_or(ctx.model.constants().alpha);
        let (report, rows) = validate_coefficient_holder(ctx.model, alpha, &ctx.config.holder_grid)?;
        write_norms_csv(&rows, ctx.create("norms.csv")?)?;
        Ok(vec![report])
    }
}
