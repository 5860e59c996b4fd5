//! Low-discrepancy sample points for the pointwise validators. The state
//! space is unbounded, so samples live in a box `[0, R]^n × [−R, R]^m`.

use crate::geometry::{Dims, RegionIndex, StatePoint};

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

pub const DEFAULT_RADIUS: f64 = 10.0;

/// Radical inverse of `index` in `base`; lies in `(0, 1)` for `index >= 1`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    acc
}

/// Halton point `k` (1-based) in `[0, 1)^d`.
pub fn halton(k: u64, d: usize) -> Vec<f64> {
    assert!(d <= PRIMES.len(), "halton dimension capped at {}", PRIMES.len());
    PRIMES[..d].iter().map(|&p| radical_inverse(k, p)).collect()
}

/// Points with every orthant coordinate in `(0, R)` and free coordinates in
/// `(−R, R)`.
pub fn interior_samples(dims: Dims, count: usize, radius: f64) -> Vec<StatePoint> {
    (1..=count as u64)
        .map(|k| {
            let u = halton(k, dims.total());
            StatePoint::new(
                u[..dims.n].iter().map(|v| v * radius).collect(),
                u[dims.n..].iter().map(|v| (2.0 * v - 1.0) * radius).collect(),
            )
        })
        .collect()
}

/// `count` points on each face `{x_i = 0}`.
pub fn boundary_samples(dims: Dims, count: usize, radius: f64) -> Vec<StatePoint> {
    let mut out = Vec::with_capacity(dims.n * count);
    for face in 0..dims.n {
        for mut z in interior_samples(dims, count, radius) {
            z.x[face] = 0.0;
            out.push(z);
        }
    }
    out
}

/// Points of the closed region `M̄_I` inside the box: coordinates in `I` in
/// `[0, 1]`, the rest in `[1, R]`. The first point sits on the corner
/// `x_I = 0` so the degenerate face is always probed.
pub fn region_samples(dims: Dims, region: &RegionIndex, count: usize, radius: f64) -> Vec<StatePoint> {
    (0..count as u64)
        .map(|k| {
            let u = if k == 0 { vec![0.0; dims.total()] } else { halton(k, dims.total()) };
            StatePoint::new(
                (0..dims.n)
                    .map(|i| if region.contains(i) { u[i] } else { 1.0 + u[i] * (radius - 1.0) })
                    .collect(),
                u[dims.n..].iter().map(|v| (2.0 * v - 1.0) * radius).collect(),
            )
        })
        .collect()
}
