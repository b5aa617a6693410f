//! Special functions and quadrature rules used across the crate.

use std::f64::consts::PI;

/// Bessel function of the first kind `J_n(z)` for integer order.
///
/// Evaluated from the integral representation
/// `J_n(z) = (1/2π) ∫_0^{2π} cos(nθ - z sin θ) dθ`. The integrand is smooth
/// and periodic, so the trapezoidal rule converges geometrically once the
/// node count exceeds `|z| + n` by a margin that grows like `|z|^{1/3}`.
pub fn bessel_j(n: u32, z: f64) -> f64 {
    let az = z.abs();
    let m = (az + n as f64 + 12.0 * az.cbrt() + 32.0).ceil() as usize;
    let dtheta = 2.0 * PI / m as f64;
    let nf = n as f64;
    let mut sum = 0.0;
    for k in 0..m {
        let theta = k as f64 * dtheta;
        sum += (nf * theta - z * theta.sin()).cos();
    }
    sum / m as f64
}

/// `J_1(z) / z`, continuous through `z = 0` where it equals 1/2.
pub fn bessel_j1_over_z(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        0.5 - z2 / 16.0 + z2 * z2 / 384.0
    } else {
        bessel_j(1, z) / z
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule over `[a, b]` with `panels` equal panels.
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let width = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * width;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * width * (xi + 1.0));
                weights.push(0.5 * width * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        // Abramowitz & Stegun table 9.1.
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j(0, 10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-14);
        assert!((bessel_j(2, 5.0) - 0.046_565_116_277_752_2).abs() < 1e-14);
        assert!(bessel_j(0, 0.0) == 1.0);
    }

    #[test]
    fn bessel_identity_large_argument() {
        // J_0(z) + J_2(z) = 2 J_1(z) / z
        for &z in &[3.7, 40.0, 199.3] {
            let lhs = bessel_j(0, z) + bessel_j(2, z);
            let rhs = 2.0 * bessel_j1_over_z(z);
            assert!((lhs - rhs).abs() < 1e-13, "z = {z}");
        }
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_integrates_smooth_function() {
        let rule = CompositeRule::new(0.0, PI, 8, 8);
        assert!((rule.integrate(f64::sin) - 2.0).abs() < 1e-14);
    }
}
