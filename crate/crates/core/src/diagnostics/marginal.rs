//! Weighted two-sample Kolmogorov–Smirnov comparison and the restart probe
//! of the Markov property.

use super::{DiagnosticReport, Verdict};
use crate::engine::{DriftKind, SimConfig, Simulator};
use crate::error::{Error, Result};
use crate::geometry::StatePoint;
use crate::girsanov::ess;
use crate::model::CoefficientModel;

/// Asymptotic two-sample KS coefficient at level 1%.
pub const KS_COEFFICIENT_1PCT: f64 = 1.6276;

/// Salt for the fresh streams of restarted paths.
const RESTART_SALT: u64 = 0x7265_7374_6172_74;

/// `c·√((n_A + n_B) / (n_A n_B))`.
pub fn ks_threshold(n_a: f64, n_b: f64) -> f64 {
    KS_COEFFICIENT_1PCT * ((n_a + n_b) / (n_a * n_b)).sqrt()
}

/// `sup_t |F_A(t) − F_B(t)|` with `F_A` the weighted empirical CDF.
pub fn weighted_ks_statistic(a: &[f64], weights: &[f64], b: &[f64]) -> f64 {
    let mut wa: Vec<(f64, f64)> = a.iter().copied().zip(weights.iter().copied()).collect();
    wa.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut sb = b.to_vec();
    sb.sort_by(f64::total_cmp);
    let total: f64 = weights.iter().sum();
    let nb = sb.len() as f64;
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut d = 0.0f64;
    while i < wa.len() || j < sb.len() {
        let t = match (wa.get(i), sb.get(j)) {
            (Some(p), Some(&v)) => p.0.min(v),
            (Some(p), None) => p.0,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < wa.len() && wa[i].0 <= t {
            fa += wa[i].1;
            i += 1;
        }
        while j < sb.len() && sb[j] <= t {
            fb += 1.0;
            j += 1;
        }
        d = d.max((fa / total - fb / nb).abs());
    }
    d
}

/// Compares the law of a weighted sample `A` with an unweighted sample `B`.
/// The threshold uses the effective sample size of `A` in place of its count.
pub fn marginal_compare(a: &[f64], weights: Option<&[f64]>, b: &[f64]) -> Result<DiagnosticReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples("marginal comparison"));
    }
    let unit;
    let w = match weights {
        Some(w) => {
            if w.len() != a.len() {
                return Err(Error::InvalidParameter(format!("{} weights for {} values", w.len(), a.len())));
            }
            w
        }
        None => {
            unit = vec![1.0; a.len()];
            &unit
        }
    };
    let first = a[0];
    if a.iter().chain(b).all(|&v| v == first) {
        return Err(Error::Degenerate(format!("both samples are constant at {first}")));
    }
    let n_eff = ess(w)?;
    let stat = weighted_ks_statistic(a, w, b);
    let threshold = ks_threshold(n_eff, b.len() as f64);
    let verdict = if stat <= threshold { Verdict::Pass } else { Verdict::Fail };
    Ok(DiagnosticReport::with_verdict("marginal_ks", stat, 0.0, threshold, verdict)
        .meta("n_a", a.len())
        .meta("n_eff", n_eff)
        .meta("n_b", b.len()))
}

/// Splits every path at `t_split`: branch A continues with its own stream,
/// branch B restarts from the same state at `t_split` with fresh streams and
/// no path memory. The terminal laws of coordinate `coord` are compared.
pub fn restart_consistency(
    model: &dyn CoefficientModel,
    kind: DriftKind,
    z0: &StatePoint,
    t_split: f64,
    config: &SimConfig,
    coord: usize,
) -> Result<DiagnosticReport> {
    let n_steps = config.n_steps()?;
    let split = (t_split / config.dt).round() as usize;
    if !(t_split >= 0.0) || split >= n_steps || ((split as f64) * config.dt - t_split).abs() > 1e-9 * config.horizon_t {
        return Err(Error::InvalidParameter(format!(
            "t_split = {t_split} must be a grid time in [0, T)"
        )));
    }
    if coord >= model.dims().total() {
        return Err(Error::InvalidParameter(format!("coordinate {coord} out of range")));
    }
    let cfg_a = config.clone().terminal_only();
    let a = Simulator::new(model, &cfg_a).kind(kind)?.marks(&[split]).run(z0)?;
    let k = a.record_of_step(split).ok_or(Error::BundleShape("a record at the split"))?;
    let starts: Vec<StatePoint> = (0..a.n_paths()).map(|p| a.state_point(p, k)).collect();
    let cfg_b = SimConfig {
        horizon_t: config.dt * (n_steps - split) as f64,
        ..cfg_a.clone()
    };
    let b = Simulator::new(model, &cfg_b)
        .kind(kind)?
        .stream_salt(RESTART_SALT)
        .run_from(&starts)?;
    let mut r = marginal_compare(&a.terminal_column(coord), None, &b.terminal_column(coord))?;
    r.name = "restart_consistency".into();
    r.set_meta("model", model.name());
    r.set_meta("t_split", t_split);
    r.set_meta("horizon_t", config.horizon_t);
    r.set_meta("dt", config.dt);
    r.set_meta("seed", config.master_seed);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_samples_have_zero_statistic() {
        let a = [0.3, 1.0, -2.0, 0.3, 5.0];
        let r = marginal_compare(&a, None, &a).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        assert!(matches!(marginal_compare(&[1.0; 3], None, &[1.0; 4]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn statistic_against_brute_force_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
        let w: Vec<f64> = (0..60).map(|_| rng.random::<f64>() + 0.1).collect();
        let b: Vec<f64> = (0..45).map(|_| rng.random::<f64>().powi(2)).collect();
        let total: f64 = w.iter().sum();
        let mut best = 0.0f64;
        for &t in a.iter().chain(&b) {
            let fa: f64 = a.iter().zip(&w).filter(|(v, _)| **v <= t).map(|(_, w)| w).sum::<f64>() / total;
            let fb = b.iter().filter(|v| **v <= t).count() as f64 / 45.0;
            best = best.max((fa - fb).abs());
        }
        assert_relative_eq!(weighted_ks_statistic(&a, &w, &b), best, max_relative = 1e-12);
    }

    #[test]
    fn null_rejection_rate_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 40;
        let mut passes = 0;
        for _ in 0..trials {
            let a: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
            if marginal_compare(&a, None, &b).unwrap().passed() {
                passes += 1;
            }
        }
        assert!(passes as f64 >= 0.95 * trials as f64, "{passes}/{trials}");
    }

    #[test]
    fn shifted_samples_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..5000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.sample::<f64, _>(StandardNormal) + 0.2).collect();
        assert_eq!(marginal_compare(&a, None, &b).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn split_at_zero_passes() {
        let m = crate::model::ConstWf1d::default();
        let cfg = SimConfig::new(1.0, 0.01, 3000).seed(12);
        let r = restart_consistency(&m, DriftKind::Standard, &m.default_start(), 0.0, &cfg, 0).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(restart_consistency(&m, DriftKind::Standard, &m.default_start(), 1.0, &cfg, 0).is_err());
    }
}
