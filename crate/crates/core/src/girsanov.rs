//! Change of measure between the standard and the singular equation:
//! `θ = σ⁻¹ξ`, exponential log-weights, reweighted expectations and the
//! inverse change.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticReport, Verdict};
use crate::engine::{PathBundle, PathObserver, DriftKind};
use crate::error::{Error, Result};
use crate::geometry::{project_in_place, StatePoint};
use crate::linalg::SmallLu;
use crate::model::{singular_xi, CoefficientModel};
use crate::stats::mean_stderr;

/// Paths whose log-weight exceeds this magnitude are excluded.
pub const LOG_WEIGHT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Weights turning standard-equation paths into singular-equation paths.
    StandardToSingular,
    /// Weights turning singular-equation paths into standard-equation paths.
    SingularToStandard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Raw,
    SelfNormalized,
}

fn missing_singular(model: &dyn CoefficientModel) -> Error {
    Error::MissingComponent {
        model: model.name().to_string(),
        what: "a singular drift",
    }
}

/// Reusable scratch for evaluating `θ(z) = σ(z)⁻¹ ξ(z)` with `h` at
/// `max(x_j, floor)`.
pub struct ThetaEvaluator<'a> {
    model: &'a dyn CoefficientModel,
    floor: f64,
    sigma: DMatrix<f64>,
    mixing: DMatrix<f64>,
    lu: SmallLu,
    theta: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> ThetaEvaluator<'a> {
    pub fn new(model: &'a dyn CoefficientModel, floor: f64) -> Result<Self> {
        if model.singular().is_none() {
            return Err(missing_singular(model));
        }
        let dims = model.dims();
        let d = dims.total();
        Ok(Self {
            model,
            floor,
            sigma: DMatrix::zeros(d, d),
            mixing: DMatrix::zeros(d, dims.n),
            lu: SmallLu::new(d),
            theta: vec![0.0; d],
            scratch: vec![0.0; d],
        })
    }

    /// `θ(z)` for a canonical `z`.
    pub fn eval(&mut self, z: &StatePoint) -> Result<&[f64]> {
        let sing = self.model.singular().ok_or_else(|| missing_singular(self.model))?;
        singular_xi(sing, z, self.floor, &mut self.mixing, &mut self.theta);
        if self.theta.iter().all(|&v| v == 0.0) {
            return Ok(&self.theta);
        }
        self.model.sigma(z, &mut self.sigma);
        self.lu.factor(&self.sigma).map_err(|e| match e {
            Error::Singular { rcond, .. } => Error::Singular {
                rcond,
                context: format!(" (σ at {z})"),
            },
            e => e,
        })?;
        self.lu.solve(&mut self.theta, &mut self.scratch);
        Ok(&self.theta)
    }
}

/// `θ(z) = σ(z)⁻¹ ξ(z)`.
pub fn theta_eval(model: &dyn CoefficientModel, z: &StatePoint, epsilon_floor: f64) -> Result<Vec<f64>> {
    z.check_dims(model.dims())?;
    let mut zp = z.clone();
    let n = zp.x.len();
    project_in_place(&mut zp.x, n);
    Ok(ThetaEvaluator::new(model, epsilon_floor)?.eval(&zp)?.to_vec())
}

fn step_log_weight(direction: Direction, theta: &[f64], dw: &[f64], dt: f64) -> f64 {
    let mut dot = 0.0;
    let mut sq = 0.0;
    for (t, w) in theta.iter().zip(dw) {
        dot += t * w;
        sq += t * t;
    }
    match direction {
        Direction::StandardToSingular => dot - 0.5 * sq * dt,
        Direction::SingularToStandard => -dot - 0.5 * sq * dt,
    }
}

/// Streams the log-weight of a path during simulation, recording the running
/// sum at the given step indices (which must include the final step).
pub struct LogWeightObserver<'a> {
    theta: ThetaEvaluator<'a>,
    direction: Direction,
    dt: f64,
    record_steps: &'a [usize],
    next: usize,
    log_weight: f64,
    out: Vec<f64>,
}

impl<'a> LogWeightObserver<'a> {
    pub fn new(
        model: &'a dyn CoefficientModel,
        direction: Direction,
        dt: f64,
        floor: f64,
        record_steps: &'a [usize],
    ) -> Result<Self> {
        Ok(Self {
            theta: ThetaEvaluator::new(model, floor)?,
            direction,
            dt,
            record_steps,
            next: 0,
            log_weight: 0.0,
            out: Vec::with_capacity(record_steps.len()),
        })
    }

    fn record_through(&mut self, step: usize) {
        while self.next < self.record_steps.len() && self.record_steps[self.next] <= step {
            self.out.push(self.log_weight);
            self.next += 1;
        }
    }
}

impl PathObserver for LogWeightObserver<'_> {
    type Output = Vec<f64>;

    fn on_step(&mut self, step: usize, z: &StatePoint, dw: &[f64]) -> Result<()> {
        self.record_through(step);
        let theta = self.theta.eval(z)?;
        self.log_weight += step_log_weight(self.direction, theta, dw, self.dt);
        Ok(())
    }

    fn finish(mut self, _terminal: &StatePoint) -> Result<Vec<f64>> {
        self.record_through(usize::MAX);
        Ok(self.out)
    }
}

/// A path bundle with the cumulative log-weight of every path at every
/// recorded time.
#[derive(Debug, Clone)]
pub struct WeightedPathBundle {
    pub base: PathBundle,
    pub direction: Direction,
    log_weights: Vec<f64>,
    /// Paths with a non-finite log-weight or one beyond [`LOG_WEIGHT_LIMIT`].
    pub excluded: Vec<bool>,
}

impl WeightedPathBundle {
    /// Combines a bundle with per-path log-weight records such as those
    /// produced by [`LogWeightObserver`].
    pub fn from_records(base: PathBundle, direction: Direction, records: Vec<Vec<f64>>) -> Result<Self> {
        if records.len() != base.n_paths() || records.iter().any(|r| r.len() != base.n_records()) {
            return Err(Error::BundleShape("one log-weight per path per recorded time"));
        }
        let log_weights: Vec<f64> = records.into_iter().flatten().collect();
        Ok(Self::assemble(base, direction, log_weights))
    }

    fn assemble(base: PathBundle, direction: Direction, log_weights: Vec<f64>) -> Self {
        let r = base.n_records();
        let excluded = log_weights
            .chunks(r)
            .map(|lw| lw.iter().any(|v| !v.is_finite() || v.abs() > LOG_WEIGHT_LIMIT))
            .collect();
        Self {
            base,
            direction,
            log_weights,
            excluded,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.excluded.len()
    }

    pub fn log_weight(&self, path: usize, k: usize) -> f64 {
        self.log_weights[path * self.base.n_records() + k]
    }

    pub fn terminal_log_weight(&self, path: usize) -> f64 {
        self.log_weight(path, self.base.n_records() - 1)
    }

    pub fn retained(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_paths()).filter(|&p| !self.excluded[p])
    }

    pub fn excluded_fraction(&self) -> f64 {
        self.excluded.iter().filter(|&&e| e).count() as f64 / self.n_paths() as f64
    }

    /// Weights `exp(log M(t_k))` of the retained paths at record `k`.
    pub fn weights_at(&self, k: usize) -> Vec<f64> {
        self.retained().map(|p| self.log_weight(p, k).exp()).collect()
    }

    pub fn terminal_weights(&self) -> Vec<f64> {
        self.weights_at(self.base.n_records() - 1)
    }
}

/// Accumulates log-weights along a dense bundle with stored increments.
/// For the standard-to-singular direction the increments are those of the
/// standard equation; for the reverse they are those of the singular one.
pub fn accumulate_log_weight(
    bundle: &PathBundle,
    model: &dyn CoefficientModel,
    direction: Direction,
) -> Result<WeightedPathBundle> {
    walk_theta(bundle, model, |_, _, theta, dw| step_log_weight(direction, theta, dw, bundle.config.dt)).map(
        |(per_step, _)| {
            let steps = bundle.n_steps;
            let mut lw = Vec::with_capacity(bundle.n_paths() * (steps + 1));
            for p in 0..bundle.n_paths() {
                let mut acc = 0.0;
                lw.push(acc);
                for s in 0..steps {
                    acc += per_step[p * steps + s];
                    lw.push(acc);
                }
            }
            WeightedPathBundle::assemble(bundle.clone(), direction, lw)
        },
    )
}

/// Rewrites the increments of a dense bundle for the other equation:
/// `W = Ŵ − θ dt` going to the singular equation, `Ŵ = W + θ dt` going back.
/// The states are unchanged, since both equations produce the same Euler
/// step from these increments.
pub fn transform_increments(
    bundle: &PathBundle,
    model: &dyn CoefficientModel,
    direction: Direction,
) -> Result<PathBundle> {
    let dt = bundle.config.dt;
    let sign = match direction {
        Direction::StandardToSingular => -1.0,
        Direction::SingularToStandard => 1.0,
    };
    let d = bundle.dims.total();
    let mut inc = Vec::with_capacity(bundle.n_paths() * bundle.n_steps * d);
    walk_theta(bundle, model, |_, _, theta, dw| {
        inc.extend(theta.iter().zip(dw).map(|(t, w)| w + sign * t * dt));
        0.0
    })?;
    let kind = match direction {
        Direction::StandardToSingular => DriftKind::Singular,
        Direction::SingularToStandard => DriftKind::Standard,
    };
    Ok(bundle.with_increments(kind, inc))
}

/// Visits every step of every path with `θ` at the projected start state and
/// the stored increment; collects the per-step values returned by `visit`.
fn walk_theta<F>(bundle: &PathBundle, model: &dyn CoefficientModel, mut visit: F) -> Result<(Vec<f64>, usize)>
where
    F: FnMut(usize, usize, &[f64], &[f64]) -> f64,
{
    if model.dims() != bundle.dims {
        return Err(Error::DimensionMismatch {
            n: model.dims().n,
            m: model.dims().m,
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
    let mut theta = ThetaEvaluator::new(model, bundle.config.epsilon_floor)?;
    let mut z = StatePoint::zeros(bundle.dims);
    let mut out = Vec::with_capacity(bundle.n_paths() * bundle.n_steps);
    let mut boundary = 0;
    for p in 0..bundle.n_paths() {
        for s in 0..bundle.n_steps {
            z.copy_from_slice(bundle.state(p, s));
            project_in_place(&mut z.x, bundle.dims.n);
            if z.on_boundary() {
                boundary += 1;
            }
            let th = theta.eval(&z).map_err(|e| e.at_step(p, s))?;
            let dw = bundle.increment(p, s).unwrap_or_default();
            out.push(visit(p, s, th, dw));
        }
    }
    Ok((out, boundary))
}

/// `(Σw)² / Σw²`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
    }
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        return Err(Error::EstimationImpossible("all weights are zero".into()));
    }
    Ok(s * s / s2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Mean terminal weight over retained paths.
    pub mean_weight: f64,
    pub ess: f64,
    pub n_used: usize,
    pub excluded_fraction: f64,
}

/// `E[M(T) F]` (raw) or `Σ wF / Σ w` (self-normalized) over retained paths.
pub fn reweighted_expectation<F>(
    wbundle: &WeightedPathBundle,
    functional: F,
    normalization: Normalization,
) -> Result<WeightedEstimate>
where
    F: Fn(&PathBundle, usize) -> f64,
{
    let paths: Vec<usize> = wbundle.retained().collect();
    if paths.is_empty() {
        return Err(Error::EstimationImpossible("every path was excluded".into()));
    }
    let w: Vec<f64> = paths.iter().map(|&p| wbundle.terminal_log_weight(p).exp()).collect();
    let f: Vec<f64> = paths.iter().map(|&p| functional(&wbundle.base, p)).collect();
    let mean_weight = w.iter().sum::<f64>() / w.len() as f64;
    let (estimate, stderr) = match normalization {
        Normalization::Raw => {
            let wf: Vec<f64> = w.iter().zip(&f).map(|(a, b)| a * b).collect();
            let e = mean_stderr(&wf)?;
            (e.value, e.stderr)
        }
        Normalization::SelfNormalized => {
            let sw: f64 = w.iter().sum();
            if sw == 0.0 {
                return Err(Error::EstimationImpossible("weights sum to zero".into()));
            }
            let r = w.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() / sw;
            let v: f64 = w.iter().zip(&f).map(|(a, b)| a * a * (b - r) * (b - r)).sum();
            (r, v.sqrt() / sw)
        }
    };
    Ok(WeightedEstimate {
        estimate,
        stderr,
        mean_weight,
        ess: ess(&w)?,
        n_used: paths.len(),
        excluded_fraction: wbundle.excluded_fraction(),
    })
}

/// Largest `|θ(z)| / Σ_j x_j^{-q}` over interior samples, compared with the
/// declared `Λ`. Violating points are counted, never skipped.
pub fn check_theta_bound(
    model: &dyn CoefficientModel,
    samples: &[StatePoint],
    q: f64,
    lambda: f64,
    epsilon_floor: f64,
) -> Result<DiagnosticReport> {
    let mut theta = ThetaEvaluator::new(model, epsilon_floor)?;
    let mut sup = 0.0f64;
    let mut violations = 0usize;
    let mut evaluated = 0usize;
    for z in samples.iter().filter(|z| z.is_interior()) {
        let norm = theta.eval(z)?.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale: f64 = z.x.iter().map(|x| x.powf(-q)).sum();
        let ratio = if z.x.is_empty() { norm } else { norm / scale };
        if ratio > lambda {
            violations += 1;
        }
        sup = sup.max(ratio);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::EmptySamples("θ bound check"));
    }
    let verdict = if violations == 0 { Verdict::Pass } else { Verdict::Fail };
    Ok(DiagnosticReport::with_verdict("theta_bound", sup, 0.0, lambda, verdict)
        .meta("violations", violations)
        .meta("evaluated", evaluated)
        .meta("q", q))
}

/// Log-weights as `path,time,log_weight`.
pub fn write_weights_csv<W: Write>(wbundle: &WeightedPathBundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "time", "log_weight"])?;
    for p in 0..wbundle.n_paths() {
        for (k, t) in wbundle.base.times.iter().enumerate() {
            w.write_record([p.to_string(), t.to_string(), wbundle.log_weight(p, k).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{record_plan, simulate_standard, SimConfig, Simulator, Starts};
    use crate::geometry::Dims;
    use crate::model::{default_lambda, sampling, ConstWf1d, DeclaredConstants, FnModel, LogDrift};
    use approx::assert_relative_eq;

    fn power_model(f: f64, q: f64) -> FnModel {
        FnModel::builder("power", Dims::new(1, 0).unwrap())
            .constants(DeclaredConstants { b0: 1.0, k: 1.0, k0: f.abs().max(1.0), q, alpha: 0.5 })
            .drift_x(|_, out| out[0] = 1.0)
            .sigma(|_, s| s[(0, 0)] = 1.0)
            .singular(move |_, m| m.fill(f), move |_, _, s| s.powf(-q))
            .build()
            .unwrap()
    }

    #[test]
    fn theta_examples() {
        let m = power_model(1.0, 0.1);
        let th = theta_eval(&m, &StatePoint::new(vec![4.0], vec![]), 1e-8).unwrap();
        assert_relative_eq!(th[0], 4f64.powf(-0.1), max_relative = 1e-14);
        assert_relative_eq!(th[0], 0.8706, epsilon = 1e-4);
        let zero = power_model(0.0, 0.1);
        assert_eq!(theta_eval(&zero, &StatePoint::new(vec![0.3], vec![]), 1e-8).unwrap(), vec![0.0]);
        assert!(matches!(
            theta_eval(&ConstWf1d::default(), &StatePoint::new(vec![1.0], vec![]), 1e-8),
            Err(Error::MissingComponent { .. })
        ));
    }

    #[test]
    fn theta_solves_sigma_system() {
        let lm = LogDrift::default();
        let z = StatePoint::new(vec![0.2], vec![]);
        let th = theta_eval(&lm, &z, 1e-8).unwrap();
        let mut s = DMatrix::zeros(1, 1);
        lm.sigma(&z, &mut s);
        let mut f = DMatrix::zeros(1, 1);
        lm.singular().unwrap().mixing(&z, &mut f);
        assert_relative_eq!(s[(0, 0)] * th[0], f[(0, 0)] * lm.h(0.2), max_relative = 1e-12);
    }

    #[test]
    fn theta_bound_holds_with_default_lambda() {
        let m = LogDrift::default();
        let samples = sampling::interior_samples(m.dims(), 500, 5.0);
        let lambda = default_lambda(&m, &samples).unwrap();
        let q = m.constants().q;
        let r = check_theta_bound(&m, &samples, q, lambda, 1e-8).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        let tight = check_theta_bound(&m, &samples, q, r.estimate * 0.5, 1e-8).unwrap();
        assert_eq!(tight.verdict, Verdict::Fail);
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&[2.0; 10]).unwrap(), 10.0);
        assert_eq!(ess(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(ess(&[1.0, 1.0, 2.0]).unwrap(), 16.0 / 6.0, max_relative = 1e-15);
        assert!(ess(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_mixing_gives_unit_weights() {
        let m = power_model(0.0, 0.1);
        let cfg = SimConfig::new(0.1, 0.01, 20).seed(3).increments(true);
        let b = simulate_standard(&m, &cfg, &StatePoint::new(vec![0.5], vec![])).unwrap();
        let wb = accumulate_log_weight(&b, &m, Direction::StandardToSingular).unwrap();
        assert!((0..20).all(|p| (0..b.n_records()).all(|k| wb.log_weight(p, k) == 0.0)));
        let plain: Vec<f64> = b.terminal_column(0);
        let mean = plain.iter().sum::<f64>() / 20.0;
        for norm in [Normalization::Raw, Normalization::SelfNormalized] {
            let e = reweighted_expectation(&wb, |b, p| b.terminal(p)[0], norm).unwrap();
            assert_relative_eq!(e.estimate, mean, max_relative = 1e-14);
            assert_eq!(e.ess, 20.0);
        }
    }

    #[test]
    fn single_step_by_hand() {
        let m = power_model(0.7, 0.2);
        let cfg = SimConfig::new(0.01, 0.005, 1).seed(11).increments(true);
        let z0 = StatePoint::new(vec![0.3], vec![]);
        let b = simulate_standard(&m, &cfg, &z0).unwrap();
        let wb = accumulate_log_weight(&b, &m, Direction::StandardToSingular).unwrap();
        let theta = 0.7 * 0.3f64.powf(-0.2);
        let dw = b.increment(0, 0).unwrap()[0];
        assert_relative_eq!(wb.log_weight(0, 1), theta * dw - 0.5 * theta * theta * 0.005, max_relative = 1e-13);
    }

    #[test]
    fn round_trip_cancels() {
        let m = LogDrift::default();
        let cfg = SimConfig::new(0.5, 1e-3, 30).seed(21).increments(true);
        let b = simulate_standard(&m, &cfg, &StatePoint::new(vec![0.05], vec![])).unwrap();
        let fwd = accumulate_log_weight(&b, &m, Direction::StandardToSingular).unwrap();
        let moved = transform_increments(&b, &m, Direction::StandardToSingular).unwrap();
        let back = accumulate_log_weight(&moved, &m, Direction::SingularToStandard).unwrap();
        for p in 0..30 {
            for k in 0..b.n_records() {
                assert!((fwd.log_weight(p, k) + back.log_weight(p, k)).abs() <= 1e-10);
            }
        }
        let restored = transform_increments(&moved, &m, Direction::SingularToStandard).unwrap();
        for p in 0..30 {
            for s in 0..b.n_steps {
                let (a, c) = (b.increment(p, s).unwrap()[0], restored.increment(p, s).unwrap()[0]);
                assert!((a - c).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn observer_matches_bundle_accumulation() {
        let m = LogDrift::default();
        let cfg = SimConfig::new(0.2, 1e-3, 16).seed(4).increments(true);
        let plan = record_plan(&cfg, &[]).unwrap();
        let z0 = StatePoint::new(vec![0.1], vec![]);
        let (b, recs) = Simulator::new(&m, &cfg)
            .run_observed(Starts::Common(&z0), |_| {
                LogWeightObserver::new(&m, Direction::StandardToSingular, cfg.dt, cfg.epsilon_floor, &plan).unwrap()
            })
            .unwrap();
        let streamed = WeightedPathBundle::from_records(b.clone(), Direction::StandardToSingular, recs).unwrap();
        let direct = accumulate_log_weight(&b, &m, Direction::StandardToSingular).unwrap();
        for p in 0..16 {
            for k in 0..b.n_records() {
                assert_eq!(streamed.log_weight(p, k), direct.log_weight(p, k));
            }
        }
    }

    #[test]
    fn overflow_paths_are_excluded() {
        let m = power_model(40.0, 0.2);
        let cfg = SimConfig::new(1.0, 0.01, 50).seed(2).increments(true);
        let b = simulate_standard(&m, &cfg, &StatePoint::new(vec![0.0], vec![])).unwrap();
        let wb = accumulate_log_weight(&b, &m, Direction::StandardToSingular).unwrap();
        assert!(wb.excluded_fraction() > 0.0);
        assert!(wb.retained().all(|p| wb.terminal_log_weight(p).abs() <= LOG_WEIGHT_LIMIT));
    }

    #[test]
    fn weights_csv_has_one_row_per_record() {
        let m = power_model(0.5, 0.1);
        let cfg = SimConfig::new(0.02, 0.01, 2).increments(true);
        let b = simulate_standard(&m, &cfg, &StatePoint::new(vec![1.0], vec![])).unwrap();
        let wb = accumulate_log_weight(&b, &m, Direction::StandardToSingular).unwrap();
        let mut buf = Vec::new();
        write_weights_csv(&wb, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 3);
    }
}
