//! The closed state space `[0, ∞)^n × R^m`, projection onto it, the unit-box
//! region decomposition and the anisotropic Wright–Fisher distance.
//!
//! Orthant coordinates are measured with `|√s − √t|` when both lie in `[0, 1]`
//! and with `|s − t|` otherwise; free coordinates always use `|s − t|`. The
//! resulting `wf_distance` is a quasi-metric: it is equivalent to the intrinsic
//! metric of the degenerate operator but can violate the triangle inequality
//! across the `x_i = 1` interface.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of orthant (`n`) and free (`m`) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n + m == 0 {
            return Err(Error::EmptyStateSpace);
        }
        Ok(Self { n, m })
    }

    #[inline]
    pub fn total(&self) -> usize {
        self.n + self.m
    }
}

/// A point `z = (x, y)` of the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub x: Vec<f64>,
    #[serde(default)]
    pub y: Vec<f64>,
}

impl StatePoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            x: vec![0.0; dims.n],
            y: vec![0.0; dims.m],
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.x.len(),
            m: self.y.len(),
        }
    }

    /// Canonical points have every orthant coordinate `>= 0`.
    pub fn is_canonical(&self) -> bool {
        self.x.iter().all(|&v| v >= 0.0)
    }

    /// Every orthant coordinate strictly positive.
    pub fn is_interior(&self) -> bool {
        self.x.iter().all(|&v| v > 0.0)
    }

    pub fn on_boundary(&self) -> bool {
        self.x.iter().any(|&v| v == 0.0)
    }

    /// Coordinates in `(x, y)` order.
    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().chain(self.y.iter()).copied()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords().collect()
    }

    pub fn from_slice(dims: Dims, coords: &[f64]) -> Self {
        Self {
            x: coords[..dims.n].to_vec(),
            y: coords[dims.n..dims.total()].to_vec(),
        }
    }

    /// Overwrites `self` from a flat `(x, y)` slice without reallocating.
    pub fn copy_from_slice(&mut self, coords: &[f64]) {
        let n = self.x.len();
        self.x.copy_from_slice(&coords[..n]);
        let m = self.y.len();
        self.y.copy_from_slice(&coords[n..n + m]);
    }

    pub(crate) fn check_dims(&self, dims: Dims) -> Result<()> {
        if self.x.len() != dims.n || self.y.len() != dims.m {
            return Err(Error::DimensionMismatch {
                n: dims.n,
                m: dims.m,
                got_n: self.x.len(),
                got_m: self.y.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for StatePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x={:?}, y={:?})", self.x, self.y)
    }
}

/// An unconstrained point of the ambient `R^{n+m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPoint {
    pub dims: Dims,
    pub coords: Vec<f64>,
}

impl RawPoint {
    pub fn new(dims: Dims, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != dims.total() {
            return Err(Error::InvalidParameter(format!(
                "raw point has {} coordinates, expected {}",
                coords.len(),
                dims.total()
            )));
        }
        Ok(Self { dims, coords })
    }

    pub fn from_state(z: &StatePoint) -> Self {
        Self {
            dims: z.dims(),
            coords: z.to_vec(),
        }
    }
}

/// Nearest point of the closed state space. The set is a product of half-lines
/// and lines, so the projection clamps orthant coordinates at zero.
pub fn project(p: &RawPoint) -> StatePoint {
    let n = p.dims.n;
    StatePoint {
        x: p.coords[..n].iter().map(|&v| v.max(0.0)).collect(),
        y: p.coords[n..].to_vec(),
    }
}

/// In-place projection of a flat coordinate buffer.
#[inline]
pub(crate) fn project_in_place(coords: &mut [f64], n: usize) {
    for v in &mut coords[..n] {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// A subset `I` of the orthant indices (0-based internally).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionIndex {
    n: usize,
    members: Vec<usize>,
}

impl RegionIndex {
    pub fn new(n: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter(format!(
                "region member out of range 0..{n}: {members:?}"
            )));
        }
        Ok(Self { n, members })
    }

    /// Region from a bitmask over `n` indices.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let members = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        Self { n, members }
    }

    /// All `2^n` regions in mask order.
    pub fn all(n: usize) -> Vec<Self> {
        assert!(n < 32, "region enumeration capped at n < 32");
        (0..(1u64 << n)).map(|mask| Self::from_mask(n, mask)).collect()
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.contains(*i)).collect()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl fmt::Display for RegionIndex {
    /// 1-based label such as `I={1,3}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.members.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "I={{{}}}", labels.join(","))
    }
}

/// `i ∈ I` iff `x_i <= 1`; closure points `x_i ∈ {0, 1}` belong to `I`.
pub fn region_of(z: &StatePoint) -> RegionIndex {
    RegionIndex {
        n: z.x.len(),
        members: z
            .x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v <= 1.0)
            .map(|(i, _)| i)
            .collect(),
    }
}

/// Per-coordinate distance: square-root scale inside the unit box, linear outside.
#[inline]
pub fn wf_coordinate_distance(s: f64, t: f64) -> f64 {
    if s.max(t) <= 1.0 {
        (s.sqrt() - t.sqrt()).abs()
    } else {
        (s - t).abs()
    }
}

/// Spatial distance: the sum of the max square-root gap over shared unit-box
/// coordinates, the max linear gap over the remaining orthant coordinates and
/// the max gap over free coordinates. Empty maxima are zero.
pub fn wf_distance(z0: &StatePoint, z1: &StatePoint) -> Result<f64> {
    z1.check_dims(z0.dims())?;
    Ok(wf_distance_unchecked(z0, z1))
}

#[inline]
pub(crate) fn wf_distance_unchecked(z0: &StatePoint, z1: &StatePoint) -> f64 {
    let mut near = 0.0f64;
    let mut far = 0.0f64;
    for (&s, &t) in z0.x.iter().zip(&z1.x) {
        if s.max(t) <= 1.0 {
            near = near.max((s.sqrt() - t.sqrt()).abs());
        } else {
            far = far.max((s - t).abs());
        }
    }
    let free = z0
        .y
        .iter()
        .zip(&z1.y)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    near + far + free
}

/// Parabolic distance `wf_distance + √|t0 − t1|`.
pub fn spacetime_distance(p0: (f64, &StatePoint), p1: (f64, &StatePoint)) -> Result<f64> {
    Ok(wf_distance(p0.1, p1.1)? + (p0.0 - p1.0).abs().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(x: &[f64], y: &[f64]) -> StatePoint {
        StatePoint::new(x.to_vec(), y.to_vec())
    }

    #[test]
    fn project_clamps_negative_orthant_coordinate() {
        let p = RawPoint::new(Dims::new(2, 1).unwrap(), vec![-1.0, 2.0, 3.0]).unwrap();
        assert_eq!(project(&p), pt(&[0.0, 2.0], &[3.0]));
    }

    #[test]
    fn project_fixes_canonical_points() {
        let z = pt(&[0.0, 0.7, 5.0], &[-2.0]);
        assert_eq!(project(&RawPoint::from_state(&z)), z);
    }

    #[test]
    fn project_matches_grid_nearest_point() {
        // Brute force over a grid of the closed set restricted to a box.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let h = 0.05;
        let grid_x: Vec<f64> = (0..=60).map(|k| k as f64 * h).collect(); // [0, 3]
        let grid_y: Vec<f64> = (0..=120).map(|k| -3.0 + k as f64 * h).collect(); // [-3, 3]
        let dims = Dims::new(1, 1).unwrap();
        for _ in 0..1000 {
            let raw = vec![rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)];
            let p = RawPoint::new(dims, raw.clone()).unwrap();
            let q = project(&p);
            let d_proj = ((raw[0] - q.x[0]).powi(2) + (raw[1] - q.y[0]).powi(2)).sqrt();
            let mut best = f64::INFINITY;
            for &gx in &grid_x {
                for &gy in &grid_y {
                    best = best.min(((raw[0] - gx).powi(2) + (raw[1] - gy).powi(2)).sqrt());
                }
            }
            assert!(d_proj <= best + 1e-12, "projection not nearest: {d_proj} > {best}");
            assert!(best - d_proj <= h * std::f64::consts::SQRT_2 / 2.0 + 1e-12);
        }
    }

    #[test]
    fn region_membership_rule() {
        assert_eq!(region_of(&pt(&[0.5, 3.0], &[])).members(), &[0]);
        assert!(region_of(&pt(&[2.0, 5.0], &[])).members().is_empty());
        assert_eq!(region_of(&pt(&[1.0, 1.0], &[])).members(), &[0, 1]);
        assert_eq!(region_of(&pt(&[0.0], &[4.0])).members(), &[0]);
    }

    #[test]
    fn region_label_is_one_based() {
        let r = RegionIndex::new(3, vec![2, 0]).unwrap();
        assert_eq!(r.to_string(), "I={1,3}");
        assert_eq!(r.complement(), vec![1]);
        assert!(RegionIndex::new(2, vec![2]).is_err());
    }

    #[test]
    fn coordinate_distance_examples() {
        assert_eq!(wf_coordinate_distance(0.0, 1.0), 1.0);
        assert_eq!(wf_coordinate_distance(4.0, 9.0), 5.0);
        assert_eq!(wf_coordinate_distance(0.25, 4.0), 3.75);
    }

    #[test]
    fn distance_examples() {
        let z = pt(&[0.3], &[1.0]);
        assert_eq!(wf_distance(&z, &z).unwrap(), 0.0);
        let d = wf_distance(&pt(&[0.0], &[0.0]), &pt(&[1.0], &[2.0])).unwrap();
        assert_eq!(d, 3.0);
        assert!(wf_distance(&pt(&[0.0], &[]), &pt(&[0.0], &[1.0])).is_err());
    }

    #[test]
    fn spacetime_distance_examples() {
        let z = pt(&[0.2, 4.0], &[]);
        assert_eq!(spacetime_distance((1.0, &z), (1.0, &z)).unwrap(), 0.0);
        assert_eq!(spacetime_distance((0.0, &z), (4.0, &z)).unwrap(), 2.0);
        // wf part 0.5 from a single free coordinate gap
        let a = pt(&[], &[0.0]);
        let b = pt(&[], &[0.5]);
        assert_eq!(spacetime_distance((0.0, &a), (1.0, &b)).unwrap(), 1.5);
    }

    /// Bracketed expression of the equivalence sandwich, evaluated from the
    /// region sets rather than the per-coordinate rule.
    fn bracket(z0: &StatePoint, z1: &StatePoint) -> f64 {
        let i0 = region_of(z0);
        let i1 = region_of(z1);
        let n = z0.x.len();
        let both: Vec<usize> = (0..n).filter(|&i| i0.contains(i) && i1.contains(i)).collect();
        let rest: Vec<usize> = (0..n).filter(|i| !both.contains(i)).collect();
        let a = both
            .iter()
            .map(|&i| (z0.x[i].sqrt() - z1.x[i].sqrt()).abs())
            .fold(0.0, f64::max);
        let b = rest
            .iter()
            .map(|&i| (z0.x[i] - z1.x[i]).abs())
            .fold(0.0, f64::max);
        let c = z0
            .y
            .iter()
            .zip(&z1.y)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        a + b + c
    }

    #[test]
    fn sandwich_holds_with_unit_constant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let n = rng.random_range(1..4);
            let m = rng.random_range(0..3);
            let mut draw = |n: usize, m: usize| {
                let x = (0..n)
                    .map(|_| if rng.random_bool(0.5) { rng.random_range(0.0..1.0) } else { rng.random_range(0.0..5.0) })
                    .collect();
                let y = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
                StatePoint::new(x, y)
            };
            let z0 = draw(n, m);
            let z1 = draw(n, m);
            let e = bracket(&z0, &z1);
            let d = wf_distance(&z0, &z1).unwrap();
            assert!(e <= d + 1e-15 && d <= e + 1e-15, "{d} vs {e}");
        }
    }

    fn raw_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..4, 0usize..3).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(-5.0f64..5.0, n + m),
                proptest::collection::vec(-5.0f64..5.0, n + m),
            )
                .prop_map(move |(a, b)| {
                    let mut a = a;
                    a.insert(0, n as f64);
                    (a, b)
                })
        })
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_nonexpansive((a, b) in raw_strategy()) {
            let n = a[0] as usize;
            let coords_a = a[1..].to_vec();
            let total = coords_a.len();
            let dims = Dims::new(n, total - n).unwrap();
            let p = RawPoint::new(dims, coords_a.clone()).unwrap();
            let q = RawPoint::new(dims, b.clone()).unwrap();
            let pp = project(&p);
            prop_assert_eq!(project(&RawPoint::from_state(&pp)), pp.clone());
            let pq = project(&q);
            let dist = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(s, t)| (s - t).powi(2)).sum::<f64>().sqrt();
            prop_assert!(dist(&pp.to_vec(), &pq.to_vec()) <= dist(&coords_a, &b) + 1e-12);
        }

        #[test]
        fn coordinate_distance_symmetric_and_separating(s in 0.0f64..10.0, t in 0.0f64..10.0) {
            prop_assert_eq!(wf_coordinate_distance(s, t), wf_coordinate_distance(t, s));
            prop_assert_eq!(wf_coordinate_distance(s, t) == 0.0, s == t);
        }

        #[test]
        fn spacetime_distance_symmetric(x0 in 0.0f64..3.0, x1 in 0.0f64..3.0, y0 in -2.0f64..2.0, y1 in -2.0f64..2.0, t0 in 0.0f64..5.0, t1 in 0.0f64..5.0) {
            let a = StatePoint::new(vec![x0], vec![y0]);
            let b = StatePoint::new(vec![x1], vec![y1]);
            prop_assert_eq!(spacetime_distance((t0, &a), (t1, &b)).unwrap(), spacetime_distance((t1, &b), (t0, &a)).unwrap());
            prop_assert_eq!(spacetime_distance((t0, &a), (t0, &a)).unwrap(), 0.0);
        }
    }
}
