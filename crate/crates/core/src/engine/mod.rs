//! Euler–Maruyama simulation of the standard and singular Kimura equations.
//!
//! Coefficients are evaluated at the projection of the current state onto the
//! closed orthant, orthant rows of the noise are scaled by `√max(x_i, 0)`, and
//! in the default mode the new state is clamped back onto the orthant. The
//! unclamped value is kept in the negativity log.

mod export;
mod reconstruct;
mod rng;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_in_place, Dims, RawPoint, StatePoint};
use crate::model::{singular_xi, CoefficientModel, PathMemory};

pub use export::{write_increments_csv, write_paths_csv};
pub use reconstruct::{reconstruct_brownian, Reconstruction};
pub use rng::path_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampMode {
    /// Clamp negative orthant coordinates to zero after every step.
    PostStepClamp,
    /// Keep the raw Euler state; only coefficient evaluation is projected.
    RecordOnly,
}

fn default_epsilon_floor() -> f64 {
    1e-8
}

fn default_stride() -> usize {
    1
}

fn default_clamp() -> ClampMode {
    ClampMode::PostStepClamp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub horizon_t: f64,
    pub dt: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_clamp")]
    pub clamp_mode: ClampMode,
    /// Floor applied to `x_j` inside the singular factors `h_ij`.
    #[serde(default = "default_epsilon_floor")]
    pub epsilon_floor: f64,
    /// Record every `record_stride`-th step; the final step is always recorded.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub retain_increments: bool,
}

impl SimConfig {
    pub fn new(horizon_t: f64, dt: f64, n_paths: usize) -> Self {
        Self {
            horizon_t,
            dt,
            n_paths,
            master_seed: 0,
            clamp_mode: ClampMode::PostStepClamp,
            epsilon_floor: default_epsilon_floor(),
            record_stride: 1,
            retain_increments: false,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn clamp(mut self, mode: ClampMode) -> Self {
        self.clamp_mode = mode;
        self
    }

    pub fn floor(mut self, eps: f64) -> Self {
        self.epsilon_floor = eps;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    /// Record only the start and the end of each path.
    pub fn terminal_only(mut self) -> Self {
        self.record_stride = usize::MAX;
        self
    }

    pub fn increments(mut self, retain: bool) -> Self {
        self.retain_increments = retain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return bad(format!("horizon_T must be positive, got {}", self.horizon_t));
        }
        if !(self.dt > 0.0 && self.dt < self.horizon_t) {
            return bad(format!("dt must lie in (0, T), got {}", self.dt));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if !(self.epsilon_floor >= 0.0) {
            return bad(format!("epsilon_floor must be nonnegative, got {}", self.epsilon_floor));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        self.n_steps().map(|_| ())
    }

    /// `N = T / dt`, which must be an integer up to relative error 1e-6.
    pub fn n_steps(&self) -> Result<usize> {
        let ratio = self.horizon_t / self.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * ratio {
            return Err(Error::InvalidParameter(format!(
                "T / dt = {ratio} is not an integer number of steps"
            )));
        }
        Ok(n as usize)
    }
}

/// Step indices recorded by a run: multiples of the stride, the final step
/// and any extra marks, sorted and deduplicated.
pub fn record_plan(config: &SimConfig, marks: &[usize]) -> Result<Vec<usize>> {
    let n_steps = config.n_steps()?;
    let mut steps: Vec<usize> = (0..=n_steps).step_by(config.record_stride.min(n_steps + 1).max(1)).collect();
    for &m in marks {
        if m > n_steps {
            return Err(Error::InvalidParameter(format!("mark {m} beyond the last step {n_steps}")));
        }
        steps.push(m);
    }
    steps.push(n_steps);
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}

/// Which equation a bundle was simulated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftKind {
    Standard,
    Singular,
}

/// Simulated paths stored flat: states as `[path][record][coord]` and
/// increments as `[path][step][coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub dims: Dims,
    pub kind: DriftKind,
    pub config: SimConfig,
    pub n_steps: usize,
    /// Step index of every recorded time.
    pub record_steps: Vec<usize>,
    /// Recorded times `step · dt`.
    pub times: Vec<f64>,
    states: Vec<f64>,
    increments: Option<Vec<f64>>,
    /// Per path, the largest pre-clamp `max_i(−x_i, 0)` over all steps.
    pub negativity_log: Vec<f64>,
    /// Per path, the number of steps started from a state with some `x_i = 0`.
    pub boundary_hit_count: Vec<usize>,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.negativity_log.len()
    }

    pub fn n_records(&self) -> usize {
        self.times.len()
    }

    fn width(&self) -> usize {
        self.dims.total()
    }

    /// Coordinates of `path` at record `k`.
    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let d = self.width();
        let off = (path * self.n_records() + k) * d;
        &self.states[off..off + d]
    }

    pub fn state_point(&self, path: usize, k: usize) -> StatePoint {
        StatePoint::from_slice(self.dims, self.state(path, k))
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.state(path, self.n_records() - 1)
    }

    /// Coordinate `coord` of every path at record `k`.
    pub fn column(&self, k: usize, coord: usize) -> Vec<f64> {
        (0..self.n_paths()).map(|p| self.state(p, k)[coord]).collect()
    }

    pub fn terminal_column(&self, coord: usize) -> Vec<f64> {
        self.column(self.n_records() - 1, coord)
    }

    pub fn has_increments(&self) -> bool {
        self.increments.is_some()
    }

    /// Brownian increment of `path` over step `step`.
    pub fn increment(&self, path: usize, step: usize) -> Option<&[f64]> {
        let d = self.width();
        self.increments.as_ref().map(|inc| {
            let off = (path * self.n_steps + step) * d;
            &inc[off..off + d]
        })
    }

    /// True when every step was recorded.
    pub fn is_dense(&self) -> bool {
        self.n_records() == self.n_steps + 1
    }

    /// Same states under a different drift kind and increment sequence.
    pub(crate) fn with_increments(&self, kind: DriftKind, increments: Vec<f64>) -> Self {
        debug_assert_eq!(increments.len(), self.n_paths() * self.n_steps * self.width());
        Self {
            kind,
            increments: Some(increments),
            ..self.clone()
        }
    }

    /// Record index of `step`, if recorded.
    pub fn record_of_step(&self, step: usize) -> Option<usize> {
        self.record_steps.binary_search(&step).ok()
    }
}

/// Streaming access to a path while it is simulated, for statistics that
/// would otherwise need every step of every path in memory.
pub trait PathObserver {
    type Output: Send;

    /// Called before step `step` with the projected state at which the
    /// coefficients are evaluated and the Brownian increment of the step.
    fn on_step(&mut self, step: usize, z: &StatePoint, dw: &[f64]) -> Result<()>;

    /// Called once with the final state of the path.
    fn finish(self, terminal: &StatePoint) -> Result<Self::Output>;
}

/// Observer that records nothing.
pub struct NoObserver;

impl PathObserver for NoObserver {
    type Output = ();

    fn on_step(&mut self, _step: usize, _z: &StatePoint, _dw: &[f64]) -> Result<()> {
        Ok(())
    }

    fn finish(self, _terminal: &StatePoint) -> Result<()> {
        Ok(())
    }
}

/// Scratch state and coefficient evaluation for one Euler step.
pub(crate) struct Stepper<'a> {
    model: &'a dyn CoefficientModel,
    kind: DriftKind,
    floor: f64,
    n: usize,
    pub zp: StatePoint,
    pub drift: Vec<f64>,
    pub sigma: DMatrix<f64>,
    mixing: DMatrix<f64>,
    xi: Vec<f64>,
    noise: Vec<f64>,
    pub memory: PathMemory,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a dyn CoefficientModel, kind: DriftKind, floor: f64) -> Self {
        let dims = model.dims();
        let d = dims.total();
        Self {
            model,
            kind,
            floor,
            n: dims.n,
            zp: StatePoint::zeros(dims),
            drift: vec![0.0; d],
            sigma: DMatrix::zeros(d, d),
            mixing: DMatrix::zeros(d, dims.n),
            xi: vec![0.0; d],
            noise: vec![0.0; d],
            memory: PathMemory {
                running_max: vec![0.0; dims.n],
            },
        }
    }

    pub fn reset_memory(&mut self, x: &[f64]) {
        for (m, &v) in self.memory.running_max.iter_mut().zip(x) {
            *m = v.max(0.0);
        }
    }

    pub fn update_memory(&mut self, x: &[f64]) {
        for (m, &v) in self.memory.running_max.iter_mut().zip(x) {
            *m = m.max(v);
        }
    }

    /// Projects `z` into `self.zp` and evaluates drift and `σ` there.
    pub fn evaluate(&mut self, z: &[f64]) {
        self.zp.copy_from_slice(z);
        project_in_place(&mut self.zp.x, self.n);
        let n = self.n;
        let model = self.model;
        if model.is_markov() {
            model.drift_x(&self.zp, &mut self.drift[..n]);
        } else {
            model.drift_x_with_memory(&self.zp, &self.memory, &mut self.drift[..n]);
        }
        model.drift_y(&self.zp, &mut self.drift[n..]);
        model.sigma(&self.zp, &mut self.sigma);
        if self.kind == DriftKind::Singular {
            if let Some(sing) = model.singular() {
                singular_xi(sing, &self.zp, self.floor, &mut self.mixing, &mut self.xi);
                for i in 0..n {
                    let r = self.zp.x[i].sqrt();
                    if r > 0.0 {
                        self.drift[i] += r * self.xi[i];
                    }
                }
                for l in n..self.drift.len() {
                    self.drift[l] += self.xi[l];
                }
            }
        }
    }

    /// `z += drift·dt + ς·dw` using the last evaluation.
    pub fn advance(&mut self, z: &mut [f64], dw: &[f64], dt: f64) {
        let d = z.len();
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += self.sigma[(r, c)] * dw[c];
            }
            self.noise[r] = acc;
        }
        for i in 0..self.n {
            self.noise[i] *= self.zp.x[i].sqrt();
        }
        for r in 0..d {
            z[r] += self.drift[r] * dt + self.noise[r];
        }
    }
}

fn single_step(
    model: &dyn CoefficientModel,
    kind: DriftKind,
    floor: f64,
    z: &StatePoint,
    dt: f64,
    dw: &[f64],
) -> Result<(StatePoint, RawPoint)> {
    let dims = model.dims();
    z.check_dims(dims)?;
    if dw.len() != dims.total() {
        return Err(Error::InvalidParameter(format!(
            "increment has {} coordinates, expected {}",
            dw.len(),
            dims.total()
        )));
    }
    let mut stepper = Stepper::new(model, kind, floor);
    let mut raw = z.to_vec();
    stepper.reset_memory(&z.x);
    stepper.evaluate(&raw);
    stepper.advance(&mut raw, dw, dt);
    let raw = RawPoint::new(dims, raw)?;
    Ok((crate::geometry::project(&raw), raw))
}

/// One Euler step of the standard equation; returns the clamped state and
/// the raw pre-clamp point.
pub fn step_standard(model: &dyn CoefficientModel, z: &StatePoint, dt: f64, dw: &[f64]) -> Result<(StatePoint, RawPoint)> {
    single_step(model, DriftKind::Standard, 0.0, z, dt, dw)
}

/// One Euler step including the singular drift with `h` floored at `floor`.
pub fn step_singular(
    model: &dyn CoefficientModel,
    z: &StatePoint,
    dt: f64,
    dw: &[f64],
    floor: f64,
) -> Result<(StatePoint, RawPoint)> {
    if model.singular().is_none() {
        return Err(Error::MissingComponent {
            model: model.name().to_string(),
            what: "a singular drift",
        });
    }
    single_step(model, DriftKind::Singular, floor, z, dt, dw)
}

/// Starting points for a run.
#[derive(Debug, Clone, Copy)]
pub enum Starts<'a> {
    Common(&'a StatePoint),
    PerPath(&'a [StatePoint]),
}

impl Starts<'_> {
    fn get(&self, path: usize) -> &StatePoint {
        match self {
            Starts::Common(z) => z,
            Starts::PerPath(zs) => &zs[path],
        }
    }
}

struct PathResult<T> {
    states: Vec<f64>,
    increments: Vec<f64>,
    negativity: f64,
    boundary_hits: usize,
    output: T,
}

/// Configurable simulation run over many paths.
pub struct Simulator<'a> {
    model: &'a dyn CoefficientModel,
    config: &'a SimConfig,
    kind: DriftKind,
    salt: u64,
    marks: Vec<usize>,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a dyn CoefficientModel, config: &'a SimConfig) -> Self {
        Self {
            model,
            config,
            kind: DriftKind::Standard,
            salt: 0,
            marks: Vec::new(),
        }
    }

    /// Switch to the singular equation.
    pub fn singular(mut self) -> Result<Self> {
        if self.model.singular().is_none() {
            return Err(Error::MissingComponent {
                model: self.model.name().to_string(),
                what: "a singular drift",
            });
        }
        self.kind = DriftKind::Singular;
        Ok(self)
    }

    pub fn kind(mut self, kind: DriftKind) -> Result<Self> {
        match kind {
            DriftKind::Standard => {
                self.kind = kind;
                Ok(self)
            }
            DriftKind::Singular => self.singular(),
        }
    }

    /// Derive all path streams from a different key than the plain seed.
    pub fn stream_salt(mut self, salt: u64) -> Self {
        self.salt = salt;
        self
    }

    /// Additional steps to record besides the stride grid.
    pub fn marks(mut self, steps: &[usize]) -> Self {
        self.marks = steps.to_vec();
        self
    }

    pub fn run(&self, z0: &StatePoint) -> Result<PathBundle> {
        Ok(self.run_observed(Starts::Common(z0), |_| NoObserver)?.0)
    }

    pub fn run_from(&self, starts: &[StatePoint]) -> Result<PathBundle> {
        Ok(self.run_observed(Starts::PerPath(starts), |_| NoObserver)?.0)
    }

    /// Runs every path with an observer built by `factory(path)`. Paths run
    /// in parallel on the current rayon pool and are merged in path order, so
    /// output does not depend on the number of workers.
    pub fn run_observed<O, F>(&self, starts: Starts<'_>, factory: F) -> Result<(PathBundle, Vec<O::Output>)>
    where
        O: PathObserver,
        F: Fn(usize) -> O + Sync,
    {
        let cfg = self.config;
        cfg.validate()?;
        let dims = self.model.dims();
        let n_steps = cfg.n_steps()?;
        match starts {
            Starts::Common(z) => {
                z.check_dims(dims)?;
                if !z.is_canonical() {
                    return Err(Error::InvalidParameter(format!("start {z} is outside the state space")));
                }
            }
            Starts::PerPath(zs) => {
                if zs.len() != cfg.n_paths {
                    return Err(Error::InvalidParameter(format!(
                        "{} start points for {} paths",
                        zs.len(),
                        cfg.n_paths
                    )));
                }
                for z in zs {
                    z.check_dims(dims)?;
                }
            }
        }
        let record_steps = record_plan(cfg, &self.marks)?;
        let mut recorded = vec![false; n_steps + 1];
        for &k in &record_steps {
            recorded[k] = true;
        }

        let results: Vec<PathResult<O::Output>> = (0..cfg.n_paths)
            .into_par_iter()
            .map_init(
                || Stepper::new(self.model, self.kind, cfg.epsilon_floor),
                |stepper, path| {
                    self.simulate_path(stepper, path, starts.get(path), n_steps, &recorded, factory(path))
                },
            )
            .collect::<Result<_>>()?;

        let d = dims.total();
        let mut states = Vec::with_capacity(cfg.n_paths * record_steps.len() * d);
        let mut increments = cfg.retain_increments.then(|| Vec::with_capacity(cfg.n_paths * n_steps * d));
        let mut negativity_log = Vec::with_capacity(cfg.n_paths);
        let mut boundary_hit_count = Vec::with_capacity(cfg.n_paths);
        let mut outputs = Vec::with_capacity(cfg.n_paths);
        for r in results {
            states.extend_from_slice(&r.states);
            if let Some(inc) = increments.as_mut() {
                inc.extend_from_slice(&r.increments);
            }
            negativity_log.push(r.negativity);
            boundary_hit_count.push(r.boundary_hits);
            outputs.push(r.output);
        }
        let bundle = PathBundle {
            dims,
            kind: self.kind,
            config: cfg.clone(),
            n_steps,
            times: record_steps.iter().map(|&k| k as f64 * cfg.dt).collect(),
            record_steps,
            states,
            increments,
            negativity_log,
            boundary_hit_count,
        };
        Ok((bundle, outputs))
    }

    fn simulate_path<O: PathObserver>(
        &self,
        stepper: &mut Stepper<'_>,
        path: usize,
        start: &StatePoint,
        n_steps: usize,
        recorded: &[bool],
        mut observer: O,
    ) -> Result<PathResult<O::Output>> {
        let cfg = self.config;
        let n = self.model.dims().n;
        let mut rng = path_rng(cfg.master_seed, self.salt, path);
        let mut z = start.to_vec();
        let d = z.len();
        let sqrt_dt = cfg.dt.sqrt();
        let mut dw = vec![0.0; d];
        let mut states = Vec::new();
        let mut increments = Vec::with_capacity(if cfg.retain_increments { n_steps * d } else { 0 });
        let mut negativity = 0.0f64;
        let mut boundary_hits = 0;
        stepper.reset_memory(&start.x);
        if recorded[0] {
            states.extend_from_slice(&z);
        }
        for step in 0..n_steps {
            for w in dw.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *w = g * sqrt_dt;
            }
            stepper.evaluate(&z);
            if stepper.zp.x.iter().any(|&v| v == 0.0) {
                boundary_hits += 1;
            }
            observer.on_step(step, &stepper.zp, &dw).map_err(|e| e.at_step(path, step))?;
            stepper.advance(&mut z, &dw, cfg.dt);
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { path, step });
            }
            for &v in &z[..n] {
                negativity = negativity.max(-v);
            }
            if cfg.clamp_mode == ClampMode::PostStepClamp {
                project_in_place(&mut z, n);
            }
            stepper.update_memory(&z[..n]);
            if cfg.retain_increments {
                increments.extend_from_slice(&dw);
            }
            if recorded[step + 1] {
                states.extend_from_slice(&z);
            }
        }
        let terminal = StatePoint::from_slice(self.model.dims(), &z);
        let output = observer.finish(&terminal).map_err(|e| e.at_step(path, n_steps))?;
        Ok(PathResult {
            states,
            increments,
            negativity,
            boundary_hits,
            output,
        })
    }
}

/// Simulates the standard equation from `z0`.
pub fn simulate_standard(model: &dyn CoefficientModel, config: &SimConfig, z0: &StatePoint) -> Result<PathBundle> {
    Simulator::new(model, config).run(z0)
}

/// Simulates the singular equation from `z0`.
pub fn simulate_singular(model: &dyn CoefficientModel, config: &SimConfig, z0: &StatePoint) -> Result<PathBundle> {
    let q0 = model.constants().q0(model.dims());
    if !(model.constants().q < q0) {
        return Err(Error::Infeasible(format!(
            "declared q = {} is not below q0 = {q0}",
            model.constants().q
        )));
    }
    Simulator::new(model, config).singular()?.run(z0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstWf1d, DeclaredConstants, FnModel, LogDrift, WfWithFreeCoord};
    use crate::stats::{mean_stderr, variance_stderr};

    fn deterministic(b: f64) -> FnModel {
        FnModel::builder("ode", Dims::new(1, 0).unwrap())
            .drift_x(move |_, out| out[0] = b)
            .sigma(|_, s| s.fill(0.0))
            .build()
            .unwrap()
    }

    #[test]
    fn deterministic_step() {
        let m = deterministic(1.0);
        let (z, raw) = step_standard(&m, &StatePoint::new(vec![0.0], vec![]), 0.1, &[0.7]).unwrap();
        assert_eq!(z.x[0], 0.1);
        assert_eq!(raw.coords, vec![0.1]);
    }

    #[test]
    fn zero_increment_zero_drift_is_identity() {
        let m = FnModel::builder("still", Dims::new(1, 1).unwrap())
            .sigma(|_, s| s.fill_with_identity())
            .build()
            .unwrap();
        let z = StatePoint::new(vec![0.4], vec![-1.2]);
        assert_eq!(step_standard(&m, &z, 0.01, &[0.0, 0.0]).unwrap().0, z);
    }

    #[test]
    fn boundary_rows_carry_no_noise() {
        let m = ConstWf1d::default();
        let z = StatePoint::new(vec![0.0], vec![]);
        for dw in [-3.0, -0.1, 0.5, 2.0] {
            let (next, raw) = step_standard(&m, &z, 0.01, &[dw]).unwrap();
            assert_eq!(raw.coords[0], 0.01);
            assert_eq!(next.x[0], 0.01);
        }
    }

    #[test]
    fn clamp_records_negativity() {
        let m = ConstWf1d::default();
        let cfg = SimConfig::new(0.1, 0.01, 1).seed(3);
        let (next, raw) = step_standard(&m, &StatePoint::new(vec![0.01], vec![]), 0.01, &[-1.0]).unwrap();
        assert!(raw.coords[0] < 0.0);
        assert_eq!(next.x[0], 0.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn ode_polygon_for_zero_noise() {
        let m = deterministic(2.0);
        let cfg = SimConfig::new(1.0, 0.25, 1);
        let b = simulate_standard(&m, &cfg, &StatePoint::new(vec![1.0], vec![])).unwrap();
        assert_eq!(b.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let xs: Vec<f64> = (0..5).map(|k| b.state(0, k)[0]).collect();
        assert_eq!(xs, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(1.0, 0.3, 1).validate().is_err());
        assert!(SimConfig::new(1.0, 2.0, 1).validate().is_err());
        assert!(SimConfig::new(1.0, 0.1, 0).validate().is_err());
        assert!(SimConfig::new(1.0, 0.1, 1).floor(-1.0).validate().is_err());
        assert_eq!(SimConfig::new(1.0, 1e-3, 1).n_steps().unwrap(), 1000);
    }

    #[test]
    fn stride_and_marks_control_records() {
        let m = ConstWf1d::default();
        let cfg = SimConfig::new(1.0, 0.1, 2).stride(4);
        let b = Simulator::new(&m, &cfg).marks(&[5]).run(&m.default_start()).unwrap();
        assert_eq!(b.record_steps, vec![0, 4, 5, 8, 10]);
        let cfg = SimConfig::new(1.0, 0.1, 2).terminal_only();
        let b = simulate_standard(&m, &cfg, &m.default_start()).unwrap();
        assert_eq!(b.record_steps, vec![0, 10]);
    }

    #[test]
    fn identical_across_worker_counts() {
        let m = WfWithFreeCoord::default();
        let cfg = SimConfig::new(0.5, 0.01, 64).seed(99).increments(true);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_standard(&m, &cfg, &m.default_start()).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert!(a.states.iter().zip(&b.states).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn zero_mixing_singular_is_bitwise_standard() {
        let zero_f = FnModel::builder("flat", Dims::new(1, 0).unwrap())
            .constants(DeclaredConstants { b0: 1.0, k: 1.0, k0: 1.0, q: 0.1, alpha: 0.5 })
            .drift_x(|_, out| out[0] = 1.0)
            .sigma(|_, s| s[(0, 0)] = 1.0)
            .singular(|_, f| f.fill(0.0), |_, _, s| s.powf(-0.1))
            .build()
            .unwrap();
        let cfg = SimConfig::new(1.0, 0.01, 50).seed(5).increments(true);
        let z0 = StatePoint::new(vec![0.2], vec![]);
        let a = simulate_standard(&zero_f, &cfg, &z0).unwrap();
        let mut b = simulate_singular(&zero_f, &cfg, &z0).unwrap();
        b.kind = DriftKind::Standard;
        assert_eq!(a, b);
    }

    #[test]
    fn singular_requires_components() {
        let m = ConstWf1d::default();
        let cfg = SimConfig::new(1.0, 0.1, 1);
        assert!(matches!(
            simulate_singular(&m, &cfg, &m.default_start()),
            Err(Error::MissingComponent { .. })
        ));
    }

    #[test]
    fn non_finite_state_reports_path_and_step() {
        let m = FnModel::builder("blowup", Dims::new(1, 0).unwrap())
            .drift_x(|z, out| out[0] = if z.x[0] > 1.4 { f64::INFINITY } else { 1.0 })
            .sigma(|_, s| s.fill(0.0))
            .build()
            .unwrap();
        let cfg = SimConfig::new(1.0, 0.25, 2);
        let err = simulate_standard(&m, &cfg, &StatePoint::new(vec![1.0], vec![])).unwrap_err();
        assert!(matches!(err, Error::NonFinite { path: 0, step: 2 }), "{err:?}");
    }

    #[test]
    fn pooled_increments_are_standard_normal() {
        let m = WfWithFreeCoord::default();
        let cfg = SimConfig::new(1.0, 0.002, 1000).seed(1).increments(true).terminal_only();
        let b = simulate_standard(&m, &cfg, &m.default_start()).unwrap();
        let sd = cfg.dt.sqrt();
        let pooled: Vec<f64> = b.increments.as_ref().unwrap().iter().map(|v| v / sd).collect();
        assert_eq!(pooled.len(), 1_000_000);
        let mean = mean_stderr(&pooled).unwrap();
        let var = variance_stderr(&pooled).unwrap();
        assert!(mean.value.abs() <= 4.0 / (pooled.len() as f64).sqrt(), "{}", mean.value);
        assert!((var.value - 1.0).abs() < 0.01, "{}", var.value);
    }

    #[test]
    fn log_drift_paths_are_canonical_and_refinement_shrinks_negativity() {
        let m = LogDrift::default();
        let mut q999 = Vec::new();
        for dt in [1e-2, 1e-3, 1e-4] {
            let cfg = SimConfig::new(0.5, dt, 400).seed(2).terminal_only();
            let b = simulate_singular(&m, &cfg, &StatePoint::new(vec![0.02], vec![])).unwrap();
            assert!(b.terminal_column(0).iter().all(|&v| v >= 0.0));
            q999.push(crate::stats::quantile(&b.negativity_log, 0.999).unwrap());
        }
        assert!(q999[1] < q999[0] && q999[2] < q999[1], "{q999:?}");
    }
}
