//! Planar poses in SE(2).

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Wraps an angle into `[0, period)`.
pub fn wrap_angle_period(theta: f64, period: f64) -> f64 {
    let w = theta.rem_euclid(period);
    // rem_euclid can return `period` itself for tiny negative inputs.
    if w >= period {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    wrap_angle_period(theta, TAU)
}

/// Wraps an angle difference into `(-period/2, period/2]`.
pub fn wrap_diff_period(delta: f64, period: f64) -> f64 {
    let half = period / 2.0;
    let w = (delta + half).rem_euclid(period) - half;
    if w <= -half {
        w + period
    } else {
        w
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_to_pi(theta: f64) -> f64 {
    wrap_diff_period(theta, TAU)
}

/// Planar pose `[x, y, θ]`: position in meters, heading in radians.
///
/// `theta` is always stored wrapped to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub const fn identity() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`, mapped to
    /// the parent frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    /// This pose expressed in `frame`, i.e. `frame⁻¹ ∘ self`.
    pub fn relative_to(&self, frame: &Pose2) -> Pose2 {
        frame.inverse().compose(self)
    }

    pub fn transform_point2(&self, p: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    pub fn inverse_transform_point2(&self, p: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        let d = p - self.translation();
        Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    /// Planar transform of a 3D point; `z` is left unchanged.
    pub fn transform_point3(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let q = self.transform_point2(Vector2::new(p.x, p.y));
        Vector3::new(q.x, q.y, p.z)
    }

    pub fn rotate_vector2(&self, v: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// Pose translated by a world-frame offset, heading unchanged bit for bit.
    pub fn translated(&self, dx: f64, dy: f64) -> Pose2 {
        Pose2 { x: self.x + dx, y: self.y + dy, theta: self.theta }
    }

    /// Heading as a signed angle in `(-π, π]`.
    pub fn theta_signed(&self) -> f64 {
        if self.theta > PI {
            self.theta - TAU
        } else {
            self.theta
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        (a.x - b.x).abs() < tol
            && (a.y - b.y).abs() < tol
            && wrap_to_pi(a.theta - b.theta).abs() < tol
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_angle(-1e-20), 0.0);
        assert!((wrap_angle(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert!((wrap_to_pi(TAU - 0.01) + 0.01).abs() < 1e-12);
        assert_eq!(wrap_to_pi(PI), PI);
        assert_eq!(wrap_to_pi(-PI), PI);
        assert!((wrap_diff_period(3.0, PI) - (3.0 - PI)).abs() < 1e-15);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let p = Pose2::new(0.3, -0.2, 2.0);
        assert!(close(&p.compose(&p.inverse()), &Pose2::identity(), 1e-12));
    }

    proptest! {
        #[test]
        fn frame_consistency(x in -1.0..1.0f64, y in -1.0..1.0f64, t in -7.0..7.0f64,
                             ux in -1.0..1.0f64, uy in -1.0..1.0f64, ut in -7.0..7.0f64) {
            let obj = Pose2::new(x, y, t);
            let sensor = Pose2::new(ux, uy, ut);
            let rel = obj.relative_to(&sensor);
            prop_assert!(close(&sensor.compose(&rel), &obj, 1e-12));
            prop_assert!((0.0..TAU).contains(&rel.theta));
        }

        #[test]
        fn point_round_trip(x in -1.0..1.0f64, y in -1.0..1.0f64, t in 0.0..7.0f64,
                            px in -1.0..1.0f64, py in -1.0..1.0f64) {
            let p = Pose2::new(x, y, t);
            let q = Vector2::new(px, py);
            let r = p.inverse_transform_point2(p.transform_point2(q));
            prop_assert!((r - q).norm() < 1e-12);
        }
    }
}
