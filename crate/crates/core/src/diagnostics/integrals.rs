//! Path integrals of `Λ Σ_i X_i^{-2q}` and the Khas'minskii and Novikov
//! probes built on them.

use serde::{Deserialize, Serialize};

use super::{Check, DiagnosticReport};
use crate::engine::{PathBundle, PathObserver};
use crate::error::{Error, Result};
use crate::geometry::StatePoint;
use crate::stats::{mean_stderr, quantile};

/// The integrand `Λ Σ_i max(x_i, floor)^{-2q}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularIntegrand {
    pub q: f64,
    pub lambda: f64,
}

impl SingularIntegrand {
    pub fn new(q: f64, lambda: f64) -> Result<Self> {
        if !(q > 0.0 && q < 0.5) {
            return Err(Error::InvalidParameter(format!("q must lie in (0, 1/2), got {q}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("Λ must be positive, got {lambda}")));
        }
        Ok(Self { q, lambda })
    }

    pub fn eval(&self, x: &[f64], floor: f64) -> f64 {
        self.lambda * x.iter().map(|v| v.max(floor).powf(-2.0 * self.q)).sum::<f64>()
    }
}

/// Floors swept around the configured one: two decades above and below.
pub fn floor_sweep(floor: f64) -> Vec<f64> {
    vec![floor, floor * 1e2, floor * 1e-2]
}

/// Trapezoidal integrals of the integrand along the recorded grid of every
/// path, one row per floor and one cumulative value per recorded time:
/// `out[f][path][k]`.
pub fn path_integrals(bundle: &PathBundle, integrand: SingularIntegrand, floors: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let n = bundle.dims.n;
    floors
        .iter()
        .map(|&floor| {
            (0..bundle.n_paths())
                .map(|p| {
                    let mut acc = 0.0;
                    let mut prev = integrand.eval(&bundle.state(p, 0)[..n], floor);
                    let mut out = Vec::with_capacity(bundle.n_records());
                    out.push(0.0);
                    for k in 1..bundle.n_records() {
                        let g = integrand.eval(&bundle.state(p, k)[..n], floor);
                        acc += 0.5 * (prev + g) * (bundle.times[k] - bundle.times[k - 1]);
                        out.push(acc);
                        prev = g;
                    }
                    out
                })
                .collect()
        })
        .collect()
}

/// Streams the same trapezoidal integrals during simulation. The output is
/// `out[f][k]` with one cumulative value per entry of `record_steps`.
pub struct IntegralObserver<'a> {
    integrand: SingularIntegrand,
    floors: &'a [f64],
    dt: f64,
    record_steps: &'a [usize],
    next: usize,
    acc: Vec<f64>,
    prev: Vec<f64>,
    out: Vec<Vec<f64>>,
}

impl<'a> IntegralObserver<'a> {
    pub fn new(integrand: SingularIntegrand, floors: &'a [f64], dt: f64, record_steps: &'a [usize]) -> Self {
        Self {
            integrand,
            floors,
            dt,
            record_steps,
            next: 0,
            acc: vec![0.0; floors.len()],
            prev: vec![0.0; floors.len()],
            out: vec![Vec::with_capacity(record_steps.len()); floors.len()],
        }
    }

    fn advance_to(&mut self, step: usize, x: &[f64]) {
        for (f, &floor) in self.floors.iter().enumerate() {
            let g = self.integrand.eval(x, floor);
            if step > 0 {
                self.acc[f] += 0.5 * (self.prev[f] + g) * self.dt;
            }
            self.prev[f] = g;
        }
        while self.next < self.record_steps.len() && self.record_steps[self.next] == step {
            for (row, &a) in self.out.iter_mut().zip(&self.acc) {
                row.push(a);
            }
            self.next += 1;
        }
    }
}

impl PathObserver for IntegralObserver<'_> {
    type Output = Vec<Vec<f64>>;

    fn on_step(&mut self, step: usize, z: &StatePoint, _dw: &[f64]) -> Result<()> {
        self.advance_to(step, &z.x);
        Ok(())
    }

    fn finish(mut self, terminal: &StatePoint) -> Result<Vec<Vec<f64>>> {
        let last = *self.record_steps.last().unwrap_or(&0);
        self.advance_to(last, &terminal.x);
        Ok(self.out)
    }
}

/// Options shared by the Khas'minskii and Novikov probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallnessOptions {
    /// Smallness threshold `δ`.
    pub delta: f64,
    /// Floors to report; the first one decides the verdict.
    pub floors: Vec<f64>,
}

impl SmallnessOptions {
    pub fn for_floor(floor: f64) -> Self {
        Self {
            delta: 0.5,
            floors: floor_sweep(floor),
        }
    }
}

/// Khas'minskii smallness `E[∫_0^T Λ Σ X_i^{-2q} dt] < δ` from terminal
/// integrals `integrals[f][path]`, one row per floor.
pub fn khasminskii_report(integrals: &[Vec<f64>], floors: &[f64], delta: f64) -> Result<DiagnosticReport> {
    let ests = integrals.iter().map(|row| mean_stderr(row)).collect::<Result<Vec<_>>>()?;
    let primary = ests.first().ok_or(Error::EmptySamples("Khas'minskii floors"))?;
    let sensitivity = ests
        .iter()
        .map(|e| (e.value - primary.value).abs() / primary.value.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(
        DiagnosticReport::new("khasminskii", primary.value, primary.stderr, delta, Check::AtMost)
            .meta("n_paths", primary.n)
            .meta("epsilon_floor", floors[0])
            .meta("floors", floors.to_vec())
            .meta("floor_estimates", ests.iter().map(|e| e.value).collect::<Vec<_>>())
            .meta("floor_sensitivity", sensitivity),
    )
}

pub fn khasminskii_estimate(
    bundle: &PathBundle,
    integrand: SingularIntegrand,
    opts: &SmallnessOptions,
) -> Result<DiagnosticReport> {
    let terminal = terminal_integrals(bundle, integrand, &opts.floors);
    let mut r = khasminskii_report(&terminal, &opts.floors, opts.delta)?;
    annotate(&mut r, bundle, integrand);
    Ok(r)
}

fn terminal_integrals(bundle: &PathBundle, integrand: SingularIntegrand, floors: &[f64]) -> Vec<Vec<f64>> {
    path_integrals(bundle, integrand, floors)
        .into_iter()
        .map(|rows| rows.into_iter().map(|r| *r.last().unwrap_or(&0.0)).collect())
        .collect()
}

fn annotate(r: &mut DiagnosticReport, bundle: &PathBundle, integrand: SingularIntegrand) {
    r.set_meta("dt", bundle.config.dt);
    r.set_meta("horizon_t", bundle.config.horizon_t);
    r.set_meta("seed", bundle.config.master_seed);
    r.set_meta("q", integrand.q);
    r.set_meta("lambda", integrand.lambda);
}

/// Novikov moment `E[exp(∫_0^T Λ Σ X_i^{-2q} dt)]` from terminal integrals,
/// compared with `bound` (use infinity to require only finiteness).
pub fn novikov_report(integrals: &[f64], bound: f64) -> Result<DiagnosticReport> {
    let exps: Vec<f64> = integrals.iter().map(|v| v.exp()).collect();
    let e = mean_stderr(&exps)?;
    let q999 = quantile(integrals, 0.999)?;
    Ok(DiagnosticReport::new("novikov", e.value, e.stderr, bound, Check::AtMost)
        .meta("n_paths", e.n)
        .meta("integral_q999", q999)
        .meta("overflowed", exps.iter().filter(|v| !v.is_finite()).count()))
}

pub fn novikov_estimate(bundle: &PathBundle, integrand: SingularIntegrand, bound: f64) -> Result<DiagnosticReport> {
    let floor = bundle.config.epsilon_floor;
    let terminal = terminal_integrals(bundle, integrand, &[floor]);
    let mut r = novikov_report(&terminal[0], bound)?;
    annotate(&mut r, bundle, integrand);
    r.set_meta("epsilon_floor", floor);
    Ok(r)
}

/// `(1 − δ)^{-⌈T / T_δ⌉}`.
pub fn novikov_chain_bound(delta: f64, t: f64, t_delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) || !(t > 0.0) || !(t_delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "chain bound needs δ in (0,1) and positive horizons, got δ={delta}, T={t}, T_δ={t_delta}"
        )));
    }
    let k = (t / t_delta).ceil();
    Ok((1.0 - delta).powf(-k))
}

/// Parameters of the moment bound used in the Khas'minskii argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KhasminskiiParams {
    pub r: f64,
    pub q: f64,
    pub b0: f64,
    pub rho: f64,
    pub k: f64,
    pub n: usize,
    pub m: usize,
}

impl KhasminskiiParams {
    fn denominator(&self) -> f64 {
        (1.0 - 2.0 * self.q) * (self.b0 / (1.0 + self.rho) - self.q * (self.n + self.m) as f64 * self.k * self.k)
    }

    fn check(&self) -> Result<f64> {
        if !(self.r > 0.0 && self.r < 1.0) || !(self.q > 0.0 && self.q < 0.5) || !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!("need r in (0,1), q in (0,1/2), ρ > 0: {self:?}")));
        }
        let den = self.denominator();
        if den <= 0.0 {
            return Err(Error::Infeasible(format!(
                "b0/(1+ρ) − q(n+m)K² must be positive, denominator is {den}"
            )));
        }
        Ok(den)
    }
}

/// `(r^{1−2q} + C r^{−2q} T) / ((1−2q)(b0/(1+ρ) − q(n+m)K²))`.
pub fn khasminskii_bound(params: &KhasminskiiParams, t: f64, c: f64) -> Result<f64> {
    let den = params.check()?;
    let (r, q) = (params.r, params.q);
    Ok((r.powf(1.0 - 2.0 * q) + c * r.powf(-2.0 * q) * t) / den)
}

/// Smallest `C >= 0` for which the bound covers `estimate + 3·stderr` at
/// every `(T, estimate, stderr)` of a calibration sweep.
pub fn fit_khasminskii_c(params: &KhasminskiiParams, sweep: &[(f64, f64, f64)]) -> Result<f64> {
    let den = params.check()?;
    let (r, q) = (params.r, params.q);
    let mut c = 0.0f64;
    for &(t, est, se) in sweep {
        let need = (est + 3.0 * se) * den - r.powf(1.0 - 2.0 * q);
        if need > 0.0 {
            c = c.max(need / (r.powf(-2.0 * q) * t));
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{record_plan, simulate_standard, SimConfig, Simulator, Starts};
    use crate::geometry::Dims;
    use crate::model::{CoefficientModel, ConstWf1d, FnModel};
    use approx::assert_relative_eq;

    fn frozen(n: usize) -> FnModel {
        FnModel::builder("frozen", Dims::new(n, 0).unwrap())
            .sigma(|_, s| s.fill(0.0))
            .build()
            .unwrap()
    }

    #[test]
    fn frozen_unit_paths_integrate_exactly() {
        for n in [1, 3] {
            let m = frozen(n);
            let cfg = SimConfig::new(2.0, 0.01, 4);
            let b = simulate_standard(&m, &cfg, &StatePoint::new(vec![1.0; n], vec![])).unwrap();
            let it = SingularIntegrand::new(0.2, 1.0).unwrap();
            let r = khasminskii_estimate(&b, it, &SmallnessOptions::for_floor(1e-8)).unwrap();
            assert_relative_eq!(r.estimate, 2.0 * n as f64, max_relative = 1e-12);
            assert_eq!(r.stderr, 0.0);
        }
        let m = frozen(1);
        let b = simulate_standard(&m, &SimConfig::new(1.0, 0.125, 3), &StatePoint::new(vec![1.0], vec![])).unwrap();
        let r = novikov_estimate(&b, SingularIntegrand::new(0.1, 1.0).unwrap(), f64::INFINITY).unwrap();
        assert_relative_eq!(r.estimate, std::f64::consts::E, max_relative = 1e-12);
    }

    #[test]
    fn observer_matches_bundle_integrals() {
        let m = ConstWf1d::default();
        let cfg = SimConfig::new(0.5, 0.01, 8).seed(6);
        let plan = record_plan(&cfg, &[]).unwrap();
        let floors = floor_sweep(1e-8);
        let it = SingularIntegrand::new(0.125, 1.0).unwrap();
        let (b, outs) = Simulator::new(&m, &cfg)
            .run_observed(Starts::Common(&m.default_start()), |_| {
                IntegralObserver::new(it, &floors, cfg.dt, &plan)
            })
            .unwrap();
        let direct = path_integrals(&b, it, &floors);
        for p in 0..8 {
            for f in 0..floors.len() {
                for k in 0..plan.len() {
                    assert_relative_eq!(outs[p][f][k], direct[f][p][k], max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn integrals_are_monotone_in_time() {
        let m = ConstWf1d::default();
        let b = simulate_standard(&m, &SimConfig::new(1.0, 0.01, 20).seed(1), &StatePoint::new(vec![0.0], vec![])).unwrap();
        let rows = path_integrals(&b, SingularIntegrand::new(0.1, 1.0).unwrap(), &[1e-8]);
        for path in &rows[0] {
            assert!(path.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn chain_bound_examples() {
        assert_eq!(novikov_chain_bound(0.5, 1.0, 0.25).unwrap(), 16.0);
        assert_eq!(novikov_chain_bound(0.5, 0.2, 0.25).unwrap(), 2.0);
        assert!(novikov_chain_bound(1.5, 1.0, 0.25).is_err());
    }

    #[test]
    fn khasminskii_bound_arithmetic() {
        let p = KhasminskiiParams { r: 0.5, q: 0.2, b0: 1.0, rho: 0.1, k: 1.0, n: 1, m: 0 };
        let expected = (0.5f64.powf(0.6) + 0.5f64.powf(-0.4) * 0.1) / (0.6 * (1.0 / 1.1 - 0.2));
        assert_relative_eq!(khasminskii_bound(&p, 0.1, 1.0).unwrap(), expected, max_relative = 1e-15);
        let tiny = KhasminskiiParams { q: 1e-9, rho: 1e-9, ..p };
        assert_relative_eq!(khasminskii_bound(&tiny, 1.0, 0.0).unwrap(), 0.5, max_relative = 1e-6);
        let bad = KhasminskiiParams { k: 3.0, ..p };
        assert!(matches!(khasminskii_bound(&bad, 1.0, 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn fitted_c_covers_the_sweep() {
        let p = KhasminskiiParams { r: 0.5, q: 0.1, b0: 1.0, rho: 0.1, k: 1.0, n: 1, m: 0 };
        let sweep = [(0.1, 0.4, 0.01), (0.5, 1.9, 0.02), (1.0, 3.5, 0.05)];
        let c = fit_khasminskii_c(&p, &sweep).unwrap();
        for (t, est, se) in sweep {
            assert!(khasminskii_bound(&p, t, c).unwrap() >= est + 3.0 * se - 1e-12);
        }
    }
}
