//! Constraint-satisfying hypotheses: DDIM samples pushed onto the contact
//! manifold by SDF projection.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::Denoiser;
use super::sampler::DdimConfig;
use crate::contact::{ContactModel, Delta};
use crate::pose::Pose2;
use crate::rng;
use crate::tactile::Observation;

/// Fraction of dropped hypotheses above which callers are warned.
pub const DROP_WARNING_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnforceReport {
    pub requested: usize,
    pub redrawn: usize,
    pub dropped: usize,
}

impl EnforceReport {
    pub fn drop_fraction(&self) -> f64 {
        if self.requested == 0 {
            0.0
        } else {
            self.dropped as f64 / self.requested as f64
        }
    }

    pub fn warning(&self) -> Option<String> {
        (self.drop_fraction() > DROP_WARNING_FRACTION)
            .then(|| format!("{} of {} hypotheses could not be projected into contact", self.dropped, self.requested))
    }
}

/// Projects sensor-frame poses into contact with a fixed δ. Failed entries
/// come back as `None`.
pub fn project_all<R: Rng + ?Sized>(poses: &[Pose2], model: &ContactModel, delta: Delta, rng: &mut R) -> Vec<Option<Pose2>> {
    let base: u64 = rng.random();
    poses
        .par_iter()
        .enumerate()
        .map(|(i, p)| model.project_relative(p, delta, &mut rng::stream(base, i as u64)).ok())
        .collect()
}

/// Projects every pose, redraws the failures once through `redraw`, and
/// drops what still fails.
pub fn enforce_constraints<R: Rng + ?Sized>(
    poses: Vec<Pose2>,
    model: &ContactModel,
    delta: Delta,
    rng: &mut R,
    mut redraw: impl FnMut(usize, &mut R) -> Vec<Pose2>,
) -> (Vec<Pose2>, EnforceReport) {
    let mut report = EnforceReport { requested: poses.len(), ..Default::default() };
    let first = project_all(&poses, model, delta, rng);
    let mut out: Vec<Pose2> = first.iter().flatten().copied().collect();
    let failed = poses.len() - out.len();
    if failed > 0 {
        report.redrawn = failed;
        let fresh = redraw(failed, rng);
        let second = project_all(&fresh, model, delta, rng);
        out.extend(second.iter().flatten());
        report.dropped = poses.len() - out.len();
    }
    if let Some(w) = report.warning() {
        log::warn!("{w}");
    }
    (out, report)
}

/// Draws `n` hypotheses (object poses in the sensor frame) for an
/// observation. With `project` false the raw DDIM samples are returned.
pub fn sample_hypotheses<R: Rng + ?Sized>(
    denoiser: &Denoiser,
    obs: &Observation,
    model: &ContactModel,
    n: usize,
    ddim: &DdimConfig,
    project: bool,
    rng: &mut R,
) -> (Vec<Pose2>, EnforceReport) {
    let raw = denoiser.sample(obs, n, ddim, rng);
    if !project {
        return (raw, EnforceReport { requested: n, ..Default::default() });
    }
    enforce_constraints(raw, model, Delta::inference(&model.thresholds), rng, |k, r| denoiser.sample(obs, k, ddim, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{ContactConfig, ContactThresholds, EndEffector};
    use crate::sdf::{Aabb, SdfGrid};
    use crate::tactile::make_cylindrical_layout;
    use nalgebra::Vector3;
    use std::sync::Arc;

    const R_O: f64 = 0.05;

    fn disk_model() -> ContactModel {
        let bbox = Aabb::centered(Vector3::new(0.0, 0.0, 0.1), Vector3::new(0.4, 0.4, 0.3));
        let grid = SdfGrid::from_fn(bbox, [81, 81, 31], |p| (p.x * p.x + p.y * p.y).sqrt() - R_O).unwrap();
        let layout = make_cylindrical_layout(0.035, 0.15, 0.79).unwrap();
        ContactModel::new(Arc::new(grid), EndEffector::default(), Arc::new(layout), ContactThresholds::default())
    }

    #[test]
    fn outward_offset_is_pulled_back() {
        let model = disk_model();
        let delta = Delta::inference(&model.thresholds);
        let gap = R_O + model.ee.radius + model.thresholds.delta_pen / 2.0;
        // Valid under the grid's own interpolated field.
        let valid = model.project_relative(&Pose2::new(gap, 0.0, 0.7), delta, &mut rng::seeded(0)).unwrap();
        assert!((valid.x - gap).abs() < 1e-4);
        let moved = Pose2::new(valid.x + 0.005, 0.0, 0.7);
        let (out, rep) = enforce_constraints(vec![valid, moved], &model, delta, &mut rng::seeded(1), |_, _| unreachable!());
        assert_eq!(rep.dropped, 0);
        assert!((out[0].x - valid.x).abs() < 1e-6 && out[0].y.abs() < 1e-6, "{:?}", out[0]);
        assert!((moved.x - out[1].x - 0.005).abs() < 2e-4, "{}", moved.x - out[1].x);
        assert_eq!(out[1].theta.to_bits(), moved.theta.to_bits());
        for p in out {
            assert!(model.check(&ContactConfig::from_relative(Pose2::identity(), p)));
        }
    }

    #[test]
    fn failures_are_redrawn_then_dropped() {
        let model = disk_model();
        let delta = Delta::inference(&model.thresholds);
        // The disk centre on the sensor axis has no usable gradient.
        let bad = Pose2::new(0.0, 0.0, 0.0);
        let good = Pose2::new(0.1, 0.02, 0.0);
        let mut calls = 0;
        let (out, rep) = enforce_constraints(vec![bad, good], &model, delta, &mut rng::seeded(1), |k, _| {
            calls += 1;
            vec![good; k]
        });
        if rep.redrawn > 0 {
            assert_eq!(calls, 1);
            assert_eq!(out.len(), 2);
        }
        let (out, rep) = enforce_constraints(vec![bad, bad], &model, delta, &mut rng::seeded(1), |k, _| vec![bad; k]);
        assert_eq!(out.len() + rep.dropped, 2);
    }
}
