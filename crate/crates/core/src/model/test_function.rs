use nalgebra::DMatrix;

use crate::geometry::StatePoint;

/// A smooth compactly supported function with analytic derivatives.
pub trait TestFunction: Send + Sync {
    fn value(&self, z: &StatePoint) -> f64;

    /// Gradient in `(x, y)` order.
    fn gradient(&self, z: &StatePoint, out: &mut [f64]);

    fn hessian(&self, z: &StatePoint, out: &mut DMatrix<f64>);

    /// Radius of a ball containing the support.
    fn support_radius(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantFunction(pub f64);

impl TestFunction for ConstantFunction {
    fn value(&self, _z: &StatePoint) -> f64 {
        self.0
    }

    fn gradient(&self, _z: &StatePoint, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn hessian(&self, _z: &StatePoint, out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }

    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }
}

/// `u(z) = exp(1 − 1/(1 − s))` with `s = |z − c|² / w²`, zero for `s >= 1`.
/// Peaks at 1 on the center.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothBump {
    center: Vec<f64>,
    width: f64,
}

impl SmoothBump {
    pub fn new(center: Vec<f64>, width: f64) -> Self {
        assert!(width > 0.0, "bump width must be positive");
        Self { center, width }
    }

    fn s(&self, z: &StatePoint) -> f64 {
        z.coords()
            .zip(&self.center)
            .map(|(v, c)| (v - c).powi(2))
            .sum::<f64>()
            / (self.width * self.width)
    }

    /// `(g, g', g'')` of the profile `g(s)`.
    fn profile(s: f64) -> (f64, f64, f64) {
        if s >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let t = 1.0 - s;
        let g = (1.0 - 1.0 / t).exp();
        (g, -g / (t * t), g * (2.0 * s - 1.0) / t.powi(4))
    }
}

impl TestFunction for SmoothBump {
    fn value(&self, z: &StatePoint) -> f64 {
        Self::profile(self.s(z)).0
    }

    fn gradient(&self, z: &StatePoint, out: &mut [f64]) {
        let (_, g1, _) = Self::profile(self.s(z));
        let w2 = self.width * self.width;
        for ((o, v), c) in out.iter_mut().zip(z.coords()).zip(&self.center) {
            *o = g1 * 2.0 * (v - c) / w2;
        }
    }

    fn hessian(&self, z: &StatePoint, out: &mut DMatrix<f64>) {
        let (_, g1, g2) = Self::profile(self.s(z));
        let w2 = self.width * self.width;
        let ds: Vec<f64> = z.coords().zip(&self.center).map(|(v, c)| 2.0 * (v - c) / w2).collect();
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                out[(i, j)] = g2 * ds[i] * ds[j] + if i == j { 2.0 * g1 / w2 } else { 0.0 };
            }
        }
    }

    fn support_radius(&self) -> f64 {
        self.width
    }
}

/// Smooth `[0, 1]`-valued cutoff: 1 on `s <= inner`, 0 on `s >= outer`,
/// infinitely differentiable in between.
pub fn smooth_cutoff(s: f64, inner: f64, outer: f64) -> f64 {
    if s <= inner {
        return 1.0;
    }
    if s >= outer {
        return 0.0;
    }
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let t = (s - inner) / (outer - inner);
    let a = psi(1.0 - t);
    a / (a + psi(t))
}
