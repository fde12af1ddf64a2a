//! Scripted quasi-static pushing.
//!
//! A kinematic stand-in for rigid-body contact dynamics: the sensor moves in
//! short substeps, and whenever its skin penetrates the object the object is
//! translated out of contact along a blend of the surface normal and the
//! motion direction, and turned by the moment of that translation about its
//! centre. There is no inertia and no sticking; contact ends as soon as the
//! sensor moves away.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::contact::{ContactConfig, ContactModel};
use crate::pose::Pose2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PusherParams {
    /// 0 pushes along the surface normal, 1 along the sensor motion.
    pub friction_blend: f64,
    /// Gain of the rotation induced by an off-centre push.
    pub k_rot: f64,
    /// Radius of gyration ρ of the object footprint (m).
    pub gyration_radius: f64,
    /// Longest sensor displacement per substep (m).
    pub substep: f64,
    /// Penetration resolution passes per substep.
    pub iterations: usize,
    /// Process noise added to pushed particles in the filter (m, rad).
    pub noise_xy: f64,
    pub noise_theta: f64,
    /// Relative spread of the simulated ground truth's friction blend and
    /// rotation gain around the values above, drawn once per recording. The
    /// filter always uses the nominal values, so this stands in for contact
    /// dynamics it does not model. 0 gives the filter the true dynamics.
    pub mismatch: f64,
}

impl Default for PusherParams {
    fn default() -> Self {
        Self { friction_blend: 0.5, k_rot: 1.0, gyration_radius: 0.1, substep: 0.002, iterations: 4, noise_xy: 0.002, noise_theta: 0.02, mismatch: 0.5 }
    }
}

impl PusherParams {
    /// Ground-truth dynamics for one recording: blend and gain scaled by
    /// independent factors in `1 ± mismatch`.
    pub fn perturbed<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut scale = || if self.mismatch > 0.0 { 1.0 + rng.random_range(-self.mismatch..self.mismatch) } else { 1.0 };
        Self { friction_blend: (self.friction_blend * scale()).clamp(0.0, 1.0), k_rot: self.k_rot * scale(), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushOutcome {
    pub pose: Pose2,
    /// The sensor touched and displaced the object.
    pub pushed: bool,
}

/// Penetration of the sensor skin into the object, with the world-frame
/// outward normal and contact point.
fn penetration(model: &ContactModel, object: &Pose2, sensor: &Pose2) -> Option<(f64, Vector2<f64>, Vector2<f64>)> {
    let cfg = ContactConfig::new(*object, *sensor);
    let axis = model.closest_axis_point(&cfg);
    let depth = model.ee.radius - axis.phi;
    if depth <= 0.0 || axis.far_field {
        return None;
    }
    let g = model.grid.gradient(&axis.point).value;
    let n = Vector2::new(g.x, g.y);
    if n.norm() < 1e-9 {
        return None;
    }
    let n_world = object.rotate_vector2(n.normalize());
    let axis_world = object.transform_point2(Vector2::new(axis.point.x, axis.point.y));
    Some((depth, n_world, axis_world - n_world * axis.phi))
}

/// Moves the sensor from `from` to `to` and returns the resulting object pose.
pub fn push_object(model: &ContactModel, object: Pose2, from: Pose2, to: Pose2, params: &PusherParams) -> PushOutcome {
    let motion = to.translation() - from.translation();
    let dist = motion.norm();
    if dist == 0.0 && from.theta == to.theta {
        let mut pose = object;
        let pushed = resolve(model, &mut pose, &to, Vector2::zeros(), params);
        return PushOutcome { pose, pushed };
    }
    let steps = ((dist / params.substep).ceil() as usize).max(1);
    let dir = if dist > 0.0 { motion / dist } else { Vector2::zeros() };
    let dtheta = crate::pose::wrap_to_pi(to.theta - from.theta);
    let mut pose = object;
    let mut pushed = false;
    for i in 1..=steps {
        let f = i as f64 / steps as f64;
        let sensor = Pose2::new(from.x + motion.x * f, from.y + motion.y * f, from.theta + dtheta * f);
        pushed |= resolve(model, &mut pose, &sensor, dir, params);
    }
    PushOutcome { pose, pushed }
}

fn resolve(model: &ContactModel, pose: &mut Pose2, sensor: &Pose2, dir: Vector2<f64>, params: &PusherParams) -> bool {
    let mut moved = false;
    for _ in 0..params.iterations {
        let Some((depth, n, contact)) = penetration(model, pose, sensor) else { break };
        // The object leaves along −n (away from the sensor).
        let away = -n;
        let mut d = away * (1.0 - params.friction_blend) + dir * params.friction_blend;
        if d.norm() < 1e-9 || d.normalize().dot(&away) < 0.1 {
            d = away;
        }
        let d = d.normalize();
        let t = d * (depth / d.dot(&away));
        let r = contact - pose.translation();
        let turn = params.k_rot * (r.x * t.y - r.y * t.x) / (params.gyration_radius * params.gyration_radius);
        // Rotate about the object centre after translating.
        *pose = Pose2::new(pose.x + t.x, pose.y + t.y, pose.theta + turn);
        moved = true;
    }
    moved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{ContactThresholds, EndEffector};
    use crate::sdf::{Aabb, SdfGrid};
    use crate::tactile::make_cylindrical_layout;
    use nalgebra::Vector3;
    use std::sync::Arc;

    fn box_model() -> ContactModel {
        let bbox = Aabb::centered(Vector3::new(0.0, 0.0, 0.1), Vector3::new(0.4, 0.4, 0.3));
        // Box of half extents 0.05 × 0.08 as an exact planar SDF.
        let grid = SdfGrid::from_fn(bbox, [81, 81, 31], |p| {
            let q = Vector2::new(p.x.abs() - 0.05, p.y.abs() - 0.08);
            let outside = Vector2::new(q.x.max(0.0), q.y.max(0.0)).norm();
            outside + q.x.max(q.y).min(0.0)
        })
        .unwrap();
        let layout = make_cylindrical_layout(0.035, 0.15, 0.29).unwrap();
        ContactModel::new(Arc::new(grid), EndEffector::default(), Arc::new(layout), ContactThresholds::default())
    }

    #[test]
    fn zero_motion_away_from_object_is_identity() {
        let m = box_model();
        let obj = Pose2::new(0.3, 0.0, 0.4);
        let s = Pose2::new(0.0, 0.0, 0.0);
        let out = push_object(&m, obj, s, s, &PusherParams::default());
        assert!(!out.pushed);
        assert_eq!(out.pose, obj);
    }

    #[test]
    fn frontal_push_displaces_by_at_least_the_penetration() {
        let m = box_model();
        let obj = Pose2::new(0.0, 0.0, 0.0);
        // Sensor skin touching the -x face, then driven 1 cm further in.
        let start = Pose2::new(-0.05 - 0.035, 0.0, 0.0);
        let end = Pose2::new(start.x + 0.01, 0.0, 0.0);
        let out = push_object(&m, obj, start, end, &PusherParams::default());
        assert!(out.pushed);
        assert!(out.pose.x >= 0.01 - 5e-4, "{:?}", out.pose);
        assert!(out.pose.y.abs() < 1e-6);
        assert!(out.pose.theta_signed().abs() < 1e-6);
    }

    #[test]
    fn perturbed_dynamics_stay_within_the_mismatch() {
        let mut rng = crate::rng::seeded(4);
        let exact = PusherParams { mismatch: 0.0, ..PusherParams::default() };
        assert_eq!(exact.perturbed(&mut rng), exact);
        let p = PusherParams::default();
        for _ in 0..200 {
            let q = p.perturbed(&mut rng);
            assert!((0.0..=1.0).contains(&q.friction_blend));
            assert!((q.k_rot / p.k_rot - 1.0).abs() <= p.mismatch);
            assert_eq!((q.noise_xy, q.gyration_radius), (p.noise_xy, p.gyration_radius));
        }
    }

    #[test]
    fn off_centre_push_turns_the_object() {
        let m = box_model();
        let obj = Pose2::new(0.0, 0.0, 0.0);
        let start = Pose2::new(-0.05 - 0.035, 0.06, 0.0);
        let end = Pose2::new(start.x + 0.01, 0.06, 0.0);
        let out = push_object(&m, obj, start, end, &PusherParams::default());
        assert!(out.pose.theta_signed() < 0.0);
    }
}
