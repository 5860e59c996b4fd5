use super::{Check, DiagnosticReport};
use crate::engine::PathBundle;
use crate::error::Result;
use crate::model::CoefficientModel;
use crate::stats::quantile_stderr;

/// Default negativity tolerance constant `5·K`.
pub fn default_c_tol(model: &dyn CoefficientModel) -> f64 {
    5.0 * model.constants().k
}

/// Pre-clamp negativity of a bundle: PASS when its 0.999 quantile is at most
/// `c_tol·√dt`.
pub fn support_report(bundle: &PathBundle, c_tol: f64) -> Result<DiagnosticReport> {
    let q = quantile_stderr(&bundle.negativity_log, 0.999)?;
    let dt = bundle.config.dt;
    let max = bundle.negativity_log.iter().copied().fold(0.0, f64::max);
    let steps = (bundle.n_paths() * bundle.n_steps) as f64;
    let hits: usize = bundle.boundary_hit_count.iter().sum();
    Ok(
        DiagnosticReport::new("support", q.value, q.stderr, c_tol * dt.sqrt(), Check::AtMost)
            .meta("max_negativity", max)
            .meta("boundary_hit_frequency", hits as f64 / steps)
            .meta("c_tol", c_tol)
            .meta("dt", dt)
            .meta("n_paths", bundle.n_paths())
            .meta("seed", bundle.config.master_seed)
            .meta("clamp_mode", serde_json::to_value(bundle.config.clamp_mode).unwrap_or_default()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Verdict;
    use crate::engine::{simulate_standard, ClampMode, SimConfig};
    use crate::geometry::{Dims, StatePoint};
    use crate::model::{ConstWf1d, FnModel, NegativeDrift};

    #[test]
    fn deterministic_nonnegative_drift_has_no_negativity() {
        let m = FnModel::builder("ode", Dims::new(1, 0).unwrap())
            .drift_x(|_, out| out[0] = 0.5)
            .sigma(|_, s| s.fill(0.0))
            .build()
            .unwrap();
        let b = simulate_standard(&m, &SimConfig::new(1.0, 0.01, 5), &StatePoint::new(vec![0.0], vec![])).unwrap();
        let r = support_report(&b, 5.0).unwrap();
        assert_eq!(r.metadata["max_negativity"], 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn negative_drift_fails_and_grows_with_horizon() {
        let m = NegativeDrift::new(-1.0, 0.0);
        let mut q = Vec::new();
        for t in [1.0, 2.0, 4.0] {
            let cfg = SimConfig::new(t, 0.01, 200).seed(3).clamp(ClampMode::RecordOnly);
            let b = simulate_standard(&m, &cfg, &StatePoint::new(vec![0.0], vec![])).unwrap();
            let r = support_report(&b, default_c_tol(&m)).unwrap();
            assert_eq!(r.verdict, Verdict::Fail, "{r:?}");
            q.push(r.estimate);
        }
        assert!(q[1] > 1.8 * q[0] && q[2] > 1.8 * q[1], "{q:?}");
    }

    #[test]
    fn const_wf_passes() {
        let m = ConstWf1d::default();
        let cfg = SimConfig::new(1.0, 1e-2, 2000).seed(1).terminal_only();
        let b = simulate_standard(&m, &cfg, &StatePoint::new(vec![0.0], vec![])).unwrap();
        assert_eq!(support_report(&b, default_c_tol(&m)).unwrap().verdict, Verdict::Pass);
    }
}
