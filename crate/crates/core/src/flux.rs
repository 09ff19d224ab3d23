//! Pointwise flux algebra for the regularized p-Laplacian.
//!
//! Everything here is a pure function of a gradient vector: the flux map
//! `(eps^2 + |xi|^2)^((p-2)/2) xi`, its symmetric Jacobian, the monotonicity
//! gap that drives the coercivity estimate, and the radial comparison function
//! used for the Hopf boundary-point check.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or gradient in the `(x, z)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub z: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, z: 0.0 };
    pub const E_Z: Vec2 = Vec2 { x: 0.0, z: 1.0 };

    pub const fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.z * other.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.z)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.z.is_finite()
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.z, s * self.x + c * self.z)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.z + o.z)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.z - o.z)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.z * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.z)
    }
}

/// Symmetric 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub xx: f64,
    pub xz: f64,
    pub zz: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { xx: 1.0, xz: 0.0, zz: 1.0 };

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xz * v.z, self.xz * v.x + self.zz * v.z)
    }

    pub fn scaled(&self, s: f64) -> Mat2 {
        Mat2 { xx: self.xx * s, xz: self.xz * s, zz: self.zz * s }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.zz);
        let half_diff = 0.5 * (self.xx - self.zz);
        let r = half_diff.hypot(self.xz);
        (mean - r, mean + r)
    }

    /// Bilinear form `a . M b`.
    pub fn form(&self, a: Vec2, b: Vec2) -> f64 {
        a.dot(self.mul_vec(b))
    }
}

/// Regularized flux `A_eps(xi) = (eps^2 + |xi|^2)^((p-2)/2) xi`.
///
/// With `eps = 0` this is the p-Laplacian flux; `xi = 0` maps to zero for
/// every `p`, including `p < 2` where the coefficient alone would blow up.
pub fn flux_eps(xi: Vec2, p: f64, eps: f64) -> Vec2 {
    let s = eps * eps + xi.norm_sq();
    if s == 0.0 {
        return Vec2::ZERO;
    }
    xi * s.powf(0.5 * (p - 2.0))
}

/// Derivative of [`flux_eps`] with respect to `xi`:
/// `(eps^2+|xi|^2)^((p-2)/2) [I + (p-2) xi (x) xi / (eps^2+|xi|^2)]`.
pub fn flux_jacobian(xi: Vec2, p: f64, eps: f64) -> Result<Mat2> {
    if p == 2.0 {
        return Ok(Mat2::IDENTITY);
    }
    let s = eps * eps + xi.norm_sq();
    if s == 0.0 {
        return Err(Error::NonDifferentiable);
    }
    let c = s.powf(0.5 * (p - 2.0));
    let k = (p - 2.0) / s;
    Ok(Mat2 {
        xx: c * (1.0 + k * xi.x * xi.x),
        xz: c * k * xi.x * xi.z,
        zz: c * (1.0 + k * xi.z * xi.z),
    })
}

/// `(|xi|^{p-2} xi - |eta|^{p-2} eta) . (xi - eta)`, nonnegative for every `p > 1`.
pub fn monotonicity_gap(xi: Vec2, eta: Vec2, p: f64) -> f64 {
    let diff = flux_eps(xi, p, 0.0) - flux_eps(eta, p, 0.0);
    diff.dot(xi - eta)
}

/// Barrier exponent threshold `2(N+p-2)/(p-1)` on the unit disc.
pub fn hopf_lambda(p: f64, dim: usize) -> f64 {
    2.0 * (dim as f64 + p - 2.0) / (p - 1.0)
}

/// Raw barrier `gamma (exp(-lambda |X|^2) - exp(-lambda r^2))`, `X` measured
/// from the disc center.
pub fn barrier_value(offset: Vec2, r: f64, gamma: f64, lambda: f64) -> f64 {
    gamma * ((-lambda * offset.norm_sq()).exp() - (-lambda * r * r).exp())
}

/// Hopf barrier on a disc of radius `r` with the threshold exponent
/// `lambda = hopf_lambda(p, N)` taken literally (no rescaling with `r`).
pub fn hopf_barrier(offset: Vec2, r: f64, gamma: f64, p: f64, dim: usize) -> f64 {
    barrier_value(offset, r, gamma, hopf_lambda(p, dim))
}

/// Scale `gamma` that makes the barrier equal `inf_u` on the half-radius circle.
pub fn barrier_gamma(inf_u: f64, r: f64, lambda: f64) -> f64 {
    let denom = (-lambda * r * r / 4.0).exp() - (-lambda * r * r).exp();
    inf_u / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn flux_examples() {
        assert_eq!(flux_eps(Vec2::new(3.0, -1.0), 2.0, 0.7), Vec2::new(3.0, -1.0));
        assert_eq!(flux_eps(Vec2::new(2.0, 0.0), 4.0, 0.0), Vec2::new(8.0, 0.0));
        assert_eq!(flux_eps(Vec2::ZERO, 3.0, 1.0), Vec2::ZERO);
        assert_eq!(flux_eps(Vec2::ZERO, 1.5, 0.0), Vec2::ZERO);
    }

    #[test]
    fn flux_is_odd_and_rotation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let xi = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let p = rng.random_range(1.2..6.0);
            let eps = rng.random_range(0.0..0.5);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let f = flux_eps(xi, p, eps);
            let odd = flux_eps(-xi, p, eps);
            assert!(close(f.x, -odd.x, 1e-14) && close(f.z, -odd.z, 1e-14));
            let lhs = flux_eps(xi.rotated(angle), p, eps);
            let rhs = f.rotated(angle);
            assert!(close(lhs.x, rhs.x, 1e-12) && close(lhs.z, rhs.z, 1e-12));
        }
    }

    #[test]
    fn jacobian_examples() {
        let j = flux_jacobian(Vec2::ZERO, 3.0, 0.5).unwrap();
        assert!(close(j.xx, 0.5, 1e-15) && j.xz == 0.0 && close(j.zz, 0.5, 1e-15));
        assert_eq!(flux_jacobian(Vec2::new(4.0, -2.0), 2.0, 0.0).unwrap(), Mat2::IDENTITY);
        assert!(matches!(
            flux_jacobian(Vec2::ZERO, 3.0, 0.0),
            Err(Error::NonDifferentiable)
        ));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = rng.random_range(1.5..6.0);
            let eps = rng.random_range(1e-3..0.5);
            let xi = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let eta = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let t = 1e-6 * (1.0 + xi.norm());
            let fd = (flux_eps(xi + eta * t, p, eps) - flux_eps(xi - eta * t, p, eps)) * (0.5 / t);
            let jv = flux_jacobian(xi, p, eps).unwrap().mul_vec(eta);
            let err = (fd - jv).norm() / jv.norm().max(1e-300);
            assert!(err < 1e-6, "p={p} eps={eps} err={err}");
        }
    }

    #[test]
    fn jacobian_eigenvalues_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = rng.random_range(1.1..7.0);
            let eps = rng.random_range(1e-4..1.0);
            let xi = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let (lo, hi) = flux_jacobian(xi, p, eps).unwrap().eigenvalues();
            let c = (eps * eps + xi.norm_sq()).powf(0.5 * (p - 2.0));
            assert!(lo >= c * (1.0f64).min(p - 1.0) * (1.0 - 1e-12));
            assert!(hi <= c * (1.0f64).max(p - 1.0) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gap_examples() {
        let xi = Vec2::new(0.3, -1.2);
        assert_eq!(monotonicity_gap(xi, xi, 3.0), 0.0);
        assert!(close(monotonicity_gap(Vec2::new(1.0, 0.0), Vec2::ZERO, 2.0), 1.0, 1e-15));
    }

    #[test]
    fn barrier_examples() {
        let r = 0.8;
        let on_circle = Vec2::new(r, 0.0).rotated(0.7);
        assert!(hopf_barrier(on_circle, r, 2.0, 3.0, 2).abs() < 1e-15);
        let lambda = std::f64::consts::LN_2 / (r * r);
        assert!(close(barrier_value(Vec2::ZERO, r, 1.0, lambda), 0.5, 1e-15));
        assert_eq!(hopf_lambda(3.0, 2), 3.0);
        assert!(hopf_barrier(Vec2::new(0.1, 0.2), r, 1.0, 3.0, 2) > 0.0);
        let at_center = hopf_barrier(Vec2::ZERO, r, 1.5, 3.0, 2);
        assert!(close(at_center, 1.5 * (1.0 - (-3.0 * r * r).exp()), 1e-15));
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(barrier_gamma(0.0, 1.0, 3.0), 0.0);
        let lambda = 4.0f64.ln();
        let expected = 1.0 / (4.0f64.powf(-0.25) - 0.25);
        assert!(close(barrier_gamma(1.0, 1.0, lambda), expected, 1e-14));
        let (r, lam, inf_u) = (0.3, 5.0, 0.42);
        let gamma = barrier_gamma(inf_u, r, lam);
        let half = Vec2::new(0.0, -r / 2.0);
        assert!(close(barrier_value(half, r, gamma, lam), inf_u, 1e-14));
    }

    proptest::proptest! {
        #[test]
        fn flux_is_monotone_and_homogeneous(
            xi in (-5.0f64..5.0, -5.0f64..5.0),
            eta in (-5.0f64..5.0, -5.0f64..5.0),
            p in 1.2f64..8.0,
            t in 0.1f64..10.0,
        ) {
            let (xi, eta) = (Vec2::new(xi.0, xi.1), Vec2::new(eta.0, eta.1));
            proptest::prop_assert!(monotonicity_gap(xi, eta, p) >= 0.0);
            let scaled = flux_eps(xi * t, p, 0.0);
            let expected = flux_eps(xi, p, 0.0) * t.powf(p - 1.0);
            proptest::prop_assert!((scaled - expected).norm() <= 1e-12 * (1.0 + expected.norm()));
        }

        #[test]
        fn barrier_vanishes_on_the_rim_and_is_radially_decreasing(
            angle in 0.0f64..std::f64::consts::TAU,
            s in 0.0f64..1.0,
            p in 1.5f64..6.0,
        ) {
            let lam = hopf_lambda(p, 2);
            let dir = Vec2::new(angle.cos(), angle.sin());
            proptest::prop_assert!(barrier_value(dir, 1.0, 1.0, lam).abs() < 1e-15);
            proptest::prop_assert!(barrier_value(dir * s, 1.0, 1.0, lam) >= barrier_value(dir * (0.5 + 0.5 * s), 1.0, 1.0, lam));
        }
    }
}
