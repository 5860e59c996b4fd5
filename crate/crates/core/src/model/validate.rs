use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{assemble_a, reassemble_a};
use super::{CoefficientModel, DecomposedDiffusion};
use crate::diagnostics::{Check, DiagnosticReport, Verdict};
use crate::error::{Error, Result};
use crate::geometry::{region_of, StatePoint};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// `b_i >= 0` on `{x_i = 0}`.
    NonNegative,
    /// `b_i >= b0` on `{x_i = 0}`.
    Positive,
}

fn require_samples(samples: &[StatePoint], what: &'static str) -> Result<()> {
    if samples.is_empty() {
        Err(Error::EmptySamples(what))
    } else {
        Ok(())
    }
}

/// Minimum of `b_i` over the sampled points of each face `{x_i = 0}`.
pub fn check_drift_boundary(
    model: &dyn CoefficientModel,
    samples: &[StatePoint],
    mode: BoundaryMode,
) -> Result<DiagnosticReport> {
    require_samples(samples, "boundary drift check")?;
    let dims = model.dims();
    let mut b = vec![0.0; dims.n];
    let mut min_b = f64::INFINITY;
    for z in samples {
        z.check_dims(dims)?;
        if !z.on_boundary() {
            return Err(Error::InvalidParameter(format!("boundary sample {z} has no zero orthant coordinate")));
        }
        model.drift_x(z, &mut b);
        for (i, &bi) in b.iter().enumerate() {
            if z.x[i] == 0.0 {
                min_b = min_b.min(bi);
            }
        }
    }
    let (name, bound) = match mode {
        BoundaryMode::NonNegative => ("drift_boundary_nonneg", 0.0),
        BoundaryMode::Positive => ("drift_boundary_positive", model.constants().b0),
    };
    Ok(DiagnosticReport::new(name, min_b, 0.0, bound, Check::AtLeast)
        .meta("model", model.name())
        .meta("samples", samples.len()))
}

/// Largest entrywise gap between `a = σσ*/2` and the reassembled
/// decomposition; fails beyond `tol` (scaled by `max(1, |a|)`).
pub fn check_decomposition(
    model: &dyn CoefficientModel,
    dec: &dyn DecomposedDiffusion,
    samples: &[StatePoint],
    tol: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for z in samples {
        let a = assemble_a(model, z);
        let dev = (&a - reassemble_a(dec, z)).amax();
        if dev > tol * a.amax().max(1.0) {
            return Err(Error::InconsistentDecomposition {
                deviation: dev,
                point: z.to_string(),
            });
        }
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Symmetric matrix of the region-dependent ellipticity form in `(ξ, η)`.
pub(crate) fn ellipticity_matrix(dec: &dyn DecomposedDiffusion, z: &StatePoint) -> DMatrix<f64> {
    let n = z.x.len();
    let m = z.y.len();
    let region = region_of(z);
    let x = &z.x;
    let mut q = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        let ii = region.contains(i);
        q[(i, i)] += if ii { dec.alpha_diag(z, i) } else { x[i] * dec.alpha_diag(z, i) };
        for j in 0..n {
            let jj = region.contains(j);
            let w = match (ii, jj) {
                (true, true) => 1.0,
                (true, false) => x[j],
                (false, true) => x[i],
                (false, false) => x[i] * x[j],
            };
            // Symmetrized: the mixed I/Iᶜ term carries (ᾱ_ij + ᾱ_ji) once per unordered pair.
            q[(i, j)] += 0.5 * w * (dec.alpha_cross(z, i, j) + dec.alpha_cross(z, j, i));
        }
        for l in 0..m {
            let c = dec.mixed(z, i, l) * if ii { 1.0 } else { x[i] };
            q[(i, n + l)] += 0.5 * c;
            q[(n + l, i)] += 0.5 * c;
        }
    }
    for k in 0..m {
        for l in 0..m {
            q[(n + k, n + l)] = 0.5 * (dec.free(z, k, l) + dec.free(z, l, k));
        }
    }
    q
}

fn ellipticity_report(
    name: &str,
    samples: &[StatePoint],
    trials: usize,
    form: impl Fn(&StatePoint) -> DMatrix<f64>,
) -> DiagnosticReport {
    let mut lambda = f64::INFINITY;
    let mut rayleigh = f64::INFINITY;
    let mut worst = None;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for z in samples {
        let q = form(z);
        let ev = linalg::min_eigenvalue(&q);
        if ev < lambda {
            lambda = ev;
            worst = Some(z.clone());
        }
        let d = q.nrows();
        for _ in 0..trials {
            let v = nalgebra::DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let norm2 = v.norm_squared();
            if norm2 > 0.0 {
                rayleigh = rayleigh.min((v.transpose() * &q * &v)[(0, 0)] / norm2);
            }
        }
    }
    let mut r = DiagnosticReport::new(name, lambda, 0.0, 0.0, Check::Above).meta("samples", samples.len());
    if trials > 0 {
        r.set_meta("random_direction_min", rayleigh);
    }
    if let Some(z) = worst {
        r.set_meta("argmin", z.to_string());
    }
    r
}

/// `λ̂ = min` over samples of the smallest eigenvalue of the ellipticity
/// form, with `trials` random directions per sample as a cross-check.
pub fn check_ellipticity(
    model: &dyn CoefficientModel,
    dec: &dyn DecomposedDiffusion,
    samples: &[StatePoint],
    trials: usize,
) -> Result<DiagnosticReport> {
    require_samples(samples, "ellipticity check")?;
    let dev = check_decomposition(model, dec, samples, 1e-10)?;
    Ok(ellipticity_report("ellipticity", samples, trials, |z| ellipticity_matrix(dec, z))
        .meta("model", model.name())
        .meta("decomposition_deviation", dev))
}

/// Ellipticity without an analytic decomposition: smallest eigenvalue of
/// `S a S` with `S = diag(√x_i)` on coordinates outside the unit box and 1
/// elsewhere.
pub fn check_ellipticity_surrogate(
    model: &dyn CoefficientModel,
    samples: &[StatePoint],
    trials: usize,
) -> Result<DiagnosticReport> {
    require_samples(samples, "ellipticity check")?;
    Ok(ellipticity_report("ellipticity_surrogate", samples, trials, |z| {
        let mut a = assemble_a(model, z);
        let d = a.nrows();
        let scale: Vec<f64> = (0..d)
            .map(|i| if i < z.x.len() && z.x[i] > 1.0 { z.x[i].sqrt() } else { 1.0 })
            .collect();
        for r in 0..d {
            for c in 0..d {
                a[(r, c)] *= scale[r] * scale[c];
            }
        }
        a
    })
    .meta("model", model.name()))
}

/// Uses the decomposition when the model has one, the surrogate otherwise.
pub fn check_model_ellipticity(
    model: &dyn CoefficientModel,
    samples: &[StatePoint],
    trials: usize,
) -> Result<DiagnosticReport> {
    match model.decomposition() {
        Some(dec) => check_ellipticity(model, dec, samples, trials),
        None => check_ellipticity_surrogate(model, samples, trials),
    }
}

/// Largest `|b_i(z)|` or `|σ_jl(z)|` over the samples.
pub fn estimate_k(model: &dyn CoefficientModel, samples: &[StatePoint]) -> Result<f64> {
    require_samples(samples, "K estimate")?;
    let dims = model.dims();
    let d = dims.total();
    let mut b = vec![0.0; dims.n];
    let mut s = DMatrix::zeros(d, d);
    let mut k = 0.0f64;
    for z in samples {
        model.drift_x(z, &mut b);
        model.sigma(z, &mut s);
        k = b.iter().chain(s.iter()).fold(k, |acc, v| acc.max(v.abs()));
    }
    Ok(k)
}

/// Log-spaced grid on `[1e-12, 1e4]` used to bound `|h(s)| s^q`.
pub(crate) fn h_grid() -> impl Iterator<Item = f64> {
    const POINTS: usize = 4000;
    let (lo, hi) = (-12.0f64, 4.0f64);
    (0..POINTS).map(move |k| 10f64.powf(lo + (hi - lo) * k as f64 / (POINTS - 1) as f64))
}

/// Sup of `|f|` (Frobenius), of `|σ⁻¹ f|` at interior samples and of
/// `|h_ij(s)| s^q` on a log grid, each compared with the declared `K0`.
pub fn check_singular_bounds(model: &dyn CoefficientModel, samples: &[StatePoint], q: f64) -> Result<DiagnosticReport> {
    require_samples(samples, "singular bound check")?;
    let sing = model.singular().ok_or_else(|| Error::MissingComponent {
        model: model.name().to_string(),
        what: "a singular drift",
    })?;
    let dims = model.dims();
    let d = dims.total();
    let mut f = DMatrix::zeros(d, dims.n);
    let mut sup_f = 0.0f64;
    let mut sup_sf = 0.0f64;
    for z in samples {
        sing.mixing(z, &mut f);
        sup_f = sup_f.max(f.norm());
        if z.is_interior() {
            let inv = super::invert_sigma(model, z)?;
            sup_sf = sup_sf.max((inv * &f).norm());
        }
    }
    let mut sup_h = 0.0f64;
    for s in h_grid() {
        let w = s.powf(q);
        for i in 0..d {
            for j in 0..dims.n {
                sup_h = sup_h.max(sing.factor(i, j, s).abs() * w);
            }
        }
    }
    let k0 = model.constants().k0;
    let estimate = sup_f.max(sup_sf).max(sup_h);
    // Equality cases such as h(s) = s^{-q} land within rounding of K0.
    let verdict = if estimate <= k0 * (1.0 + 1e-12) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(DiagnosticReport::with_verdict("singular_bounds", estimate, 0.0, k0, verdict)
        .meta("model", model.name())
        .meta("sup_f", sup_f)
        .meta("sup_sigma_inv_f", sup_sf)
        .meta("sup_h_sq", sup_h)
        .meta("q", q))
}

/// Default `Λ` for the bound `|θ(z)| <= Λ Σ x_j^{-q}`: `K0` times the sup over
/// interior samples of `max_j ‖σ⁻¹(z)‖₂ |f_{·j}(z)|`.
pub fn default_lambda(model: &dyn CoefficientModel, samples: &[StatePoint]) -> Result<f64> {
    let sing = model.singular().ok_or_else(|| Error::MissingComponent {
        model: model.name().to_string(),
        what: "a singular drift",
    })?;
    let interior: Vec<&StatePoint> = samples.iter().filter(|z| z.is_interior()).collect();
    if interior.is_empty() {
        return Err(Error::EmptySamples("Λ estimate"));
    }
    let dims = model.dims();
    let mut f = DMatrix::zeros(dims.total(), dims.n);
    let mut sup = 0.0f64;
    for z in interior {
        sing.mixing(z, &mut f);
        let inv_norm = linalg::two_norm(&super::invert_sigma(model, z)?);
        for j in 0..dims.n {
            sup = sup.max(inv_norm * f.column(j).norm());
        }
    }
    Ok(model.constants().k0 * sup)
}
