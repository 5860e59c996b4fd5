//! Empirical anisotropic Hölder norms on sampled functions and the
//! coefficient-regularity validator.
//!
//! Every estimate is a supremum over a finite point set and hence a lower
//! bound of the true norm. Regularity failures show up as estimates that keep
//! growing under refinement toward the faces where the metric degenerates.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticReport, Verdict};
use crate::error::{Error, Result};
use crate::geometry::{wf_distance_unchecked, RegionIndex, StatePoint};
use crate::model::{CoefficientModel, DecomposedDiffusion};

/// Values of a function on distinct space-time points, with optional
/// derivative oracles at the same points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub points: Vec<(f64, StatePoint)>,
    pub values: Vec<f64>,
    pub time_derivative: Option<Vec<f64>>,
    /// Gradient in `(x, y)` order at each point.
    pub gradient: Option<Vec<Vec<f64>>>,
    pub hessian: Option<Vec<DMatrix<f64>>>,
}

impl SampledFunction {
    pub fn new(points: Vec<(f64, StatePoint)>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if let Some((_, first)) = points.first() {
            let dims = first.dims();
            for (_, z) in &points {
                z.check_dims(dims)?;
            }
        }
        Ok(Self {
            points,
            values,
            time_derivative: None,
            gradient: None,
            hessian: None,
        })
    }

    /// Samples `f` at time-independent points.
    pub fn from_fn(points: &[StatePoint], f: impl Fn(&StatePoint) -> f64) -> Result<Self> {
        Self::new(
            points.iter().map(|z| (0.0, z.clone())).collect(),
            points.iter().map(f).collect(),
        )
    }

    pub fn with_time_derivative(mut self, ut: Vec<f64>) -> Result<Self> {
        self.check_len(ut.len())?;
        self.time_derivative = Some(ut);
        Ok(self)
    }

    pub fn with_gradient(mut self, grad: Vec<Vec<f64>>) -> Result<Self> {
        self.check_len(grad.len())?;
        self.gradient = Some(grad);
        Ok(self)
    }

    pub fn with_hessian(mut self, hess: Vec<DMatrix<f64>>) -> Result<Self> {
        self.check_len(hess.len())?;
        self.hessian = Some(hess);
        Ok(self)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.values.len() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "derivative oracle has {len} entries for {} points",
                self.values.len()
            )))
        }
    }

    /// Same points with other values.
    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            points: self.points.clone(),
            values,
            time_derivative: None,
            gradient: None,
            hessian: None,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("α must lie in (0, 1), got {alpha}")))
    }
}

/// `max |u(p0) − u(p1)| / ρ(p0, p1)^α` over distinct pairs.
pub fn holder_seminorm(fs: &SampledFunction, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if fs.values.len() < 2 {
        return Err(Error::EmptySamples("Hölder seminorm (needs two points)"));
    }
    let pts = &fs.points;
    let vals = &fs.values;
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let (t0, z0) = &pts[i];
            let mut best = 0.0f64;
            for j in i + 1..pts.len() {
                let (t1, z1) = &pts[j];
                let diff = (vals[i] - vals[j]).abs();
                let rho = wf_distance_unchecked(z0, z1) + (t0 - t1).abs().sqrt();
                if rho == 0.0 {
                    if diff != 0.0 {
                        return Err(Error::DuplicatePoints(vals[i], vals[j]));
                    }
                    continue;
                }
                best = best.max(diff / rho.powf(alpha));
            }
            Ok(best)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// `sup |u| + holder_seminorm`.
pub fn holder_norm(fs: &SampledFunction, alpha: f64) -> Result<f64> {
    let sup = fs.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(sup + holder_seminorm(fs, alpha)?)
}

/// The second-order anisotropic norm on `M̄_I`: the first-order norm of `u`
/// plus the norms of the weighted second derivatives
/// `√(x_i x_j) u_{x_i x_j}`, `u_{y_l y_k}`, `√x_i u_{x_i x_j}`,
/// `√x_i u_{x_i y_l}` (`i ∈ I`, `j ∉ I`), `u_{x_i x_j}`, `u_{x_i y_l}`
/// (`i, j ∉ I`) and of `u_t`.
pub fn holder_2alpha_norm(fs: &SampledFunction, alpha: f64, region: &RegionIndex) -> Result<f64> {
    let grad = fs.gradient.as_ref().ok_or(Error::MissingComponent {
        model: "sampled function".into(),
        what: "a gradient oracle",
    })?;
    let hess = fs.hessian.as_ref().ok_or(Error::MissingComponent {
        model: "sampled function".into(),
        what: "a Hessian oracle",
    })?;
    let Some((t_first, z_first)) = fs.points.first() else {
        return Err(Error::EmptySamples("second-order Hölder norm"));
    };
    let n = z_first.x.len();
    let d = n + z_first.y.len();
    if region.n() != n {
        return Err(Error::InvalidParameter(format!("region over {} coordinates for n = {n}", region.n())));
    }
    for (_, z) in &fs.points {
        for i in 0..n {
            let inside = if region.contains(i) { z.x[i] <= 1.0 } else { z.x[i] >= 1.0 };
            if !inside || z.x[i] < 0.0 {
                return Err(Error::InvalidParameter(format!("point {z} lies outside the closed region {region}")));
            }
        }
    }
    let column = |f: &dyn Fn(usize) -> f64| fs.with_values((0..fs.values.len()).map(f).collect());
    let mut total = holder_norm(fs, alpha)?;
    for k in 0..d {
        total += holder_norm(&column(&|p| grad[p][k]), alpha)?;
    }
    let sx = |p: usize, i: usize| fs.points[p].1.x[i].sqrt();
    for i in 0..n {
        for j in 0..n {
            let weighted = match (region.contains(i), region.contains(j)) {
                (true, true) => column(&|p| sx(p, i) * sx(p, j) * hess[p][(i, j)]),
                (true, false) => column(&|p| sx(p, i) * hess[p][(i, j)]),
                (false, false) => column(&|p| hess[p][(i, j)]),
                // Mixed pairs are counted once, with the I-coordinate first.
                (false, true) => continue,
            };
            total += holder_norm(&weighted, alpha)?;
        }
        for l in n..d {
            let weighted = if region.contains(i) {
                column(&|p| sx(p, i) * hess[p][(i, l)])
            } else {
                column(&|p| hess[p][(i, l)])
            };
            total += holder_norm(&weighted, alpha)?;
        }
    }
    for l in n..d {
        for k in n..d {
            total += holder_norm(&column(&|p| hess[p][(l, k)]), alpha)?;
        }
    }
    match &fs.time_derivative {
        Some(ut) => total += holder_norm(&fs.with_values(ut.clone()), alpha)?,
        None if fs.points.iter().all(|(t, _)| t == t_first) => {}
        None => {
            return Err(Error::MissingComponent {
                model: "sampled function".into(),
                what: "a time-derivative oracle",
            })
        }
    }
    Ok(total)
}

/// Nested per-region tensor grids, refined geometrically toward `x_i = 0`
/// and `x_i = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolderGrid {
    /// Number of refinement levels.
    pub levels: usize,
    /// Evenly spaced points per coordinate on the coarsest level.
    pub base_points: usize,
    /// Geometric ratio of the face refinement; level `ℓ` reaches `ratio^{ℓ+1}`.
    pub ratio: f64,
    /// Outer radius for orthant coordinates outside the unit box and for
    /// free coordinates.
    pub radius: f64,
    /// Growth factor per refinement that flags a blow-up.
    pub blowup_factor: f64,
    /// Regions to check as lists of 0-based orthant indices; all `2^n` when
    /// absent.
    pub regions: Option<Vec<Vec<usize>>>,
}

impl Default for HolderGrid {
    fn default() -> Self {
        Self {
            levels: 4,
            base_points: 4,
            ratio: 1.0 / 16.0,
            radius: 4.0,
            blowup_factor: 2.0,
            regions: None,
        }
    }
}

impl HolderGrid {
    fn validate(&self) -> Result<()> {
        if self.levels < 2 || self.base_points < 2 || !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidParameter(
                "Hölder grid needs levels >= 2, base_points >= 2 and ratio in (0, 1)".into(),
            ));
        }
        if !(self.radius > 1.0) || !(self.blowup_factor > 1.0) {
            return Err(Error::InvalidParameter("Hölder grid needs radius > 1 and blowup_factor > 1".into()));
        }
        Ok(())
    }

    fn faces(&self, level: usize) -> Vec<f64> {
        (1..=level + 1).map(|k| self.ratio.powi(k as i32)).collect()
    }

    fn even(&self, lo: f64, hi: f64) -> Vec<f64> {
        let k = self.base_points;
        (0..k).map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64).collect()
    }

    /// Coordinate values of an orthant coordinate in `I` (within `[0, 1]`).
    fn inner_axis(&self, level: usize) -> Vec<f64> {
        let mut v = self.even(0.0, 1.0);
        for s in self.faces(level) {
            v.push(s);
            v.push(1.0 - s);
        }
        sorted_unique(v)
    }

    /// Coordinate values of an orthant coordinate outside `I` (within `[1, R]`).
    fn outer_axis(&self, level: usize) -> Vec<f64> {
        let mut v = self.even(1.0, self.radius);
        v.extend(self.faces(level).into_iter().map(|s| 1.0 + s));
        sorted_unique(v)
    }

    /// Free coordinates see a Euclidean metric, so their axis is not refined.
    fn free_axis(&self) -> Vec<f64> {
        self.even(-self.radius, self.radius)
    }

    /// Tensor grid of `M̄_I` at a refinement level.
    pub fn points(&self, region: &RegionIndex, m: usize, level: usize) -> Vec<StatePoint> {
        let n = region.n();
        let axes: Vec<Vec<f64>> = (0..n)
            .map(|i| if region.contains(i) { self.inner_axis(level) } else { self.outer_axis(level) })
            .chain((0..m).map(|_| self.free_axis()))
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; axes.len()];
        loop {
            let c: Vec<f64> = idx.iter().zip(&axes).map(|(&k, a)| a[k]).collect();
            out.push(StatePoint::new(c[..n].to_vec(), c[n..].to_vec()));
            let mut pos = 0;
            loop {
                if pos == axes.len() {
                    return out;
                }
                idx[pos] += 1;
                if idx[pos] < axes[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    fn regions(&self, n: usize) -> Result<Vec<RegionIndex>> {
        match &self.regions {
            Some(list) => list.iter().map(|members| RegionIndex::new(n, members.clone())).collect(),
            None => Ok(RegionIndex::all(n)),
        }
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// One row of the norms table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub region: String,
    pub term: String,
    pub level: usize,
    pub estimate: f64,
}

type Term<'a> = (String, Box<dyn Fn(&StatePoint) -> f64 + 'a>);

/// The coefficient combinations required to be Hölder on `M̄_I`.
fn region_terms<'a>(
    model: &'a dyn CoefficientModel,
    dec: &'a dyn DecomposedDiffusion,
    region: &RegionIndex,
) -> Vec<Term<'a>> {
    let dims = model.dims();
    let (n, m) = (dims.n, dims.m);
    let inside: Vec<usize> = region.members().to_vec();
    let outside = region.complement();
    let mut terms: Vec<Term<'a>> = Vec::new();
    for &i in &inside {
        terms.push((format!("alpha_{0}{0}", i + 1), Box::new(move |z| dec.alpha_diag(z, i))));
    }
    for &j in &outside {
        terms.push((format!("x{0}*alpha_{0}{0}", j + 1), Box::new(move |z| z.x[j] * dec.alpha_diag(z, j))));
    }
    for &i in &inside {
        for &i2 in &inside {
            if i != i2 {
                terms.push((format!("alphabar_{}{}", i + 1, i2 + 1), Box::new(move |z| dec.alpha_cross(z, i, i2))));
            }
        }
        for &j in &outside {
            terms.push((
                format!("x{j1}*alphabar_{}{j1}", i + 1, j1 = j + 1),
                Box::new(move |z| z.x[j] * dec.alpha_cross(z, i, j)),
            ));
            terms.push((
                format!("x{j1}*alphabar_{j1}{}", i + 1, j1 = j + 1),
                Box::new(move |z| z.x[j] * dec.alpha_cross(z, j, i)),
            ));
        }
    }
    for &j in &outside {
        for &j2 in &outside {
            if j != j2 {
                terms.push((
                    format!("x{}*x{}*alphabar_{}{}", j + 1, j2 + 1, j + 1, j2 + 1),
                    Box::new(move |z| z.x[j] * z.x[j2] * dec.alpha_cross(z, j, j2)),
                ));
            }
        }
    }
    for k in 0..m {
        for l in 0..m {
            terms.push((format!("a_free_{}{}", k + 1, l + 1), Box::new(move |z| dec.free(z, k, l))));
        }
    }
    for i in 0..n {
        terms.push((
            format!("b_{}", i + 1),
            Box::new(move |z| {
                let mut b = vec![0.0; n];
                model.drift_x(z, &mut b);
                b[i]
            }),
        ));
    }
    for l in 0..m {
        for &i in &inside {
            terms.push((format!("c_{}{}", i + 1, l + 1), Box::new(move |z| dec.mixed(z, i, l))));
        }
        for &j in &outside {
            terms.push((format!("x{0}*c_{0}{1}", j + 1, l + 1), Box::new(move |z| z.x[j] * dec.mixed(z, j, l))));
        }
        terms.push((
            format!("e_{}", l + 1),
            Box::new(move |z| {
                let mut e = vec![0.0; m];
                model.drift_y(z, &mut e);
                e[l]
            }),
        ));
    }
    terms
}

/// Empirical `C^α` seminorms of every required coefficient combination on
/// every region and refinement level. A term is flagged when its estimate
/// grows by more than `blowup_factor` over the final refinement. Returns the
/// report and the full norms table.
pub fn validate_coefficient_holder(
    model: &dyn CoefficientModel,
    alpha: f64,
    grid: &HolderGrid,
) -> Result<(DiagnosticReport, Vec<NormRow>)> {
    check_alpha(alpha)?;
    grid.validate()?;
    let dec = model.decomposition().ok_or_else(|| Error::MissingComponent {
        model: model.name().to_string(),
        what: "a decomposition of a",
    })?;
    let dims = model.dims();
    let mut table = Vec::new();
    let mut flagged = Vec::new();
    let mut worst = 0.0f64;
    for region in grid.regions(dims.n)? {
        let label = region.to_string();
        let levels: Vec<Vec<StatePoint>> = (0..grid.levels).map(|l| grid.points(&region, dims.m, l)).collect();
        for (term, f) in region_terms(model, dec, &region) {
            let mut ests = Vec::with_capacity(grid.levels);
            for (level, pts) in levels.iter().enumerate() {
                let est = holder_seminorm(&SampledFunction::from_fn(pts, &f)?, alpha)?;
                table.push(NormRow {
                    region: label.clone(),
                    term: term.clone(),
                    level,
                    estimate: est,
                });
                ests.push(est);
            }
            let (prev, last) = (ests[ests.len() - 2], ests[ests.len() - 1]);
            let growth = if last <= 1e-12 {
                1.0
            } else if prev <= 1e-12 {
                f64::INFINITY
            } else {
                last / prev
            };
            worst = worst.max(growth);
            if growth > grid.blowup_factor {
                flagged.push(format!("{label}:{term}"));
            }
        }
    }
    let verdict = if flagged.is_empty() { Verdict::Pass } else { Verdict::Fail };
    let report = DiagnosticReport::with_verdict("coefficient_holder", worst, 0.0, grid.blowup_factor, verdict)
        .meta("model", model.name())
        .meta("alpha", alpha)
        .meta("levels", grid.levels)
        .meta("flagged", flagged);
    Ok((report, table))
}

/// Norms table as `region,term,level,estimate`.
pub fn write_norms_csv<W: Write>(rows: &[NormRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{spacetime_distance, Dims};
    use crate::model::{ConstWf1d, FnModel, RoughDrift};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Vec<StatePoint> {
        xs.iter().map(|&x| StatePoint::new(vec![x], vec![])).collect()
    }

    fn grid01(k: usize) -> Vec<f64> {
        (0..=k).map(|j| j as f64 / k as f64).collect()
    }

    fn brute_seminorm(fs: &SampledFunction, alpha: f64) -> f64 {
        let mut best = 0.0f64;
        for a in 0..fs.values.len() {
            for b in 0..fs.values.len() {
                if a == b {
                    continue;
                }
                let rho = spacetime_distance((fs.points[a].0, &fs.points[a].1), (fs.points[b].0, &fs.points[b].1)).unwrap();
                best = best.max((fs.values[a] - fs.values[b]).abs() / rho.powf(alpha));
            }
        }
        best
    }

    #[test]
    fn seminorm_examples() {
        let c = SampledFunction::from_fn(&line(&grid01(10)), |_| 2.5).unwrap();
        assert_eq!(holder_seminorm(&c, 0.5).unwrap(), 0.0);
        assert_eq!(holder_norm(&c, 0.5).unwrap(), 2.5);
        let sq = SampledFunction::from_fn(&line(&[0.0, 1.0]), |z| z.x[0].sqrt()).unwrap();
        assert_relative_eq!(holder_seminorm(&sq, 0.999).unwrap(), 1.0, max_relative = 1e-15);
        let lin = SampledFunction::from_fn(&line(&grid01(50)), |z| z.x[0]).unwrap();
        assert_relative_eq!(holder_seminorm(&lin, 0.5).unwrap(), brute_seminorm(&lin, 0.5), max_relative = 1e-14);
    }

    #[test]
    fn duplicates_are_errors_only_with_differing_values() {
        let pts = vec![(0.0, StatePoint::new(vec![0.5], vec![])); 2];
        let bad = SampledFunction::new(pts.clone(), vec![1.0, 2.0]).unwrap();
        assert!(matches!(holder_seminorm(&bad, 0.5), Err(Error::DuplicatePoints(..))));
        let ok = SampledFunction::new(pts, vec![1.0, 1.0]).unwrap();
        assert_eq!(holder_seminorm(&ok, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn spacetime_points_match_brute_force() {
        let mut pts = Vec::new();
        for t in [0.0, 0.3, 1.0] {
            for x in [0.0, 0.2, 1.5, 3.0] {
                for y in [-1.0, 0.5] {
                    pts.push((t, StatePoint::new(vec![x], vec![y])));
                }
            }
        }
        let vals = pts.iter().map(|(t, z)| (t + z.x[0]).sin() * z.y[0]).collect();
        let fs = SampledFunction::new(pts, vals).unwrap();
        assert_relative_eq!(holder_seminorm(&fs, 0.4).unwrap(), brute_seminorm(&fs, 0.4), max_relative = 1e-14);
    }

    fn with_oracles(xs: &[f64], u: fn(f64) -> [f64; 3]) -> SampledFunction {
        let pts = line(xs);
        SampledFunction::from_fn(&pts, |z| u(z.x[0])[0])
            .unwrap()
            .with_gradient(xs.iter().map(|&x| vec![u(x)[1]]).collect())
            .unwrap()
            .with_hessian(xs.iter().map(|&x| DMatrix::from_element(1, 1, u(x)[2])).collect())
            .unwrap()
    }

    #[test]
    fn second_order_norm_examples() {
        let region = RegionIndex::new(1, vec![0]).unwrap();
        let xs = grid01(20);
        let c = with_oracles(&xs, |_| [3.0, 0.0, 0.0]);
        assert_eq!(holder_2alpha_norm(&c, 0.5, &region).unwrap(), 3.0);

        let lin = with_oracles(&xs, |x| [x, 1.0, 0.0]);
        let plain = SampledFunction::from_fn(&line(&xs), |z| z.x[0]).unwrap();
        let expected = holder_norm(&plain, 0.5).unwrap() + 1.0;
        assert_relative_eq!(holder_2alpha_norm(&lin, 0.5, &region).unwrap(), expected, max_relative = 1e-14);

        let quad = with_oracles(&xs, |x| [x * x, 2.0 * x, 2.0]);
        let pts = line(&xs);
        let parts = [
            SampledFunction::from_fn(&pts, |z| z.x[0] * z.x[0]).unwrap(),
            SampledFunction::from_fn(&pts, |z| 2.0 * z.x[0]).unwrap(),
            SampledFunction::from_fn(&pts, |z| 2.0 * z.x[0]).unwrap(),
        ];
        let expected: f64 = parts.iter().map(|p| holder_norm(p, 0.5).unwrap()).sum();
        assert_relative_eq!(holder_2alpha_norm(&quad, 0.5, &region).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn second_order_norm_requires_oracles_and_region() {
        let region = RegionIndex::new(1, vec![0]).unwrap();
        let bare = SampledFunction::from_fn(&line(&[0.1, 0.2]), |z| z.x[0]).unwrap();
        assert!(matches!(holder_2alpha_norm(&bare, 0.5, &region), Err(Error::MissingComponent { .. })));
        let outside = with_oracles(&[0.5, 2.0], |x| [x, 1.0, 0.0]);
        assert!(holder_2alpha_norm(&outside, 0.5, &region).is_err());
    }

    #[test]
    fn grid_levels_are_nested() {
        let g = HolderGrid::default();
        let r = RegionIndex::new(2, vec![1]).unwrap();
        for l in 1..g.levels {
            let coarse = g.points(&r, 1, l - 1);
            let fine = g.points(&r, 1, l);
            assert!(fine.len() > coarse.len());
            assert!(coarse.iter().all(|z| fine.contains(z)));
        }
    }

    #[test]
    fn constant_coefficients_pass() {
        let (r, table) = validate_coefficient_holder(&ConstWf1d::default(), 0.5, &HolderGrid::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        // Terms carrying an x-weight are Lipschitz, not constant.
        assert!(table.iter().filter(|row| !row.term.contains('*')).all(|row| row.estimate == 0.0));
    }

    #[test]
    fn rough_drift_is_flagged() {
        let (r, _) = validate_coefficient_holder(&RoughDrift::new(0.1, 0.5), 0.9, &HolderGrid::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail, "{r:?}");
        assert!(r.metadata["flagged"].to_string().contains("b_1"));
    }

    #[test]
    fn square_root_drift_passes() {
        let m = FnModel::builder("sqrt-drift", Dims::new(1, 0).unwrap())
            .drift_x(|z, out| out[0] = z.x[0].sqrt())
            .sigma(|_, s| s[(0, 0)] = 1.0)
            .decomposition(|_, _| 0.5, |_, _, _| 0.0, |_, _, _| 0.0, |_, _, _| 0.0)
            .build()
            .unwrap();
        let (r, _) = validate_coefficient_holder(&m, 0.5, &HolderGrid::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    }

    #[test]
    fn norms_csv_layout() {
        let rows = vec![NormRow { region: "I={1}".into(), term: "b_1".into(), level: 2, estimate: 0.5 }];
        let mut buf = Vec::new();
        write_norms_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "region,term,level,estimate\nI={1},b_1,2,0.5\n");
    }

    proptest! {
        #[test]
        fn seminorm_is_symmetric_and_shift_invariant(
            xs in proptest::collection::vec(0.0f64..3.0, 2..25),
            shift in -5.0f64..5.0,
            alpha in 0.05f64..0.95,
        ) {
            let pts = line(&xs);
            let f = |z: &StatePoint| (3.0 * z.x[0]).sin();
            let a = SampledFunction::from_fn(&pts, f).unwrap();
            let mut rev = pts.clone();
            rev.reverse();
            let b = SampledFunction::from_fn(&rev, f).unwrap();
            let c = SampledFunction::from_fn(&pts, |z| f(z) + shift).unwrap();
            let sa = holder_seminorm(&a, alpha).unwrap();
            prop_assert!((sa - holder_seminorm(&b, alpha).unwrap()).abs() <= 1e-12 * (1.0 + sa));
            prop_assert!((sa - holder_seminorm(&c, alpha).unwrap()).abs() <= 1e-9 * (1.0 + sa));
        }

        #[test]
        fn norm_is_homogeneous_and_subadditive(
            xs in proptest::collection::vec(0.0f64..3.0, 2..20),
            c in -4.0f64..4.0,
        ) {
            let mut xs = xs;
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            prop_assume!(xs.len() >= 2);
            let pts = line(&xs);
            let u = SampledFunction::from_fn(&pts, |z| z.x[0].cos()).unwrap();
            let v = SampledFunction::from_fn(&pts, |z| z.x[0] * z.x[0]).unwrap();
            let cu = SampledFunction::from_fn(&pts, |z| c * z.x[0].cos()).unwrap();
            let sum = SampledFunction::from_fn(&pts, |z| z.x[0].cos() + z.x[0] * z.x[0]).unwrap();
            let nu = holder_norm(&u, 0.5).unwrap();
            prop_assert!((holder_norm(&cu, 0.5).unwrap() - c.abs() * nu).abs() <= 1e-10 * (1.0 + nu));
            prop_assert!(holder_norm(&sum, 0.5).unwrap() <= nu + holder_norm(&v, 0.5).unwrap() + 1e-10);
        }

        #[test]
        fn refinement_never_decreases_the_estimate(extra in proptest::collection::vec(0.0f64..3.0, 1..10)) {
            let base = grid01(6);
            let mut fine = base.clone();
            fine.extend(extra);
            fine.sort_by(f64::total_cmp);
            fine.dedup();
            let f = |z: &StatePoint| z.x[0].powf(0.3);
            let coarse = holder_seminorm(&SampledFunction::from_fn(&line(&base), f).unwrap(), 0.7).unwrap();
            let refined = holder_seminorm(&SampledFunction::from_fn(&line(&fine), f).unwrap(), 0.7).unwrap();
            prop_assert!(refined >= coarse);
        }
    }
}
