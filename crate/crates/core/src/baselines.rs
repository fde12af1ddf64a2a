//! Baseline proposers: local perturbation of the current belief, and the
//! force-torque reduction of an observation to a single virtual contact.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contact::{ContactConfig, ContactModel, Delta};
use crate::filter::{low_variance_resample, ProposalContext, Proposer};
use crate::pose::Pose2;
use crate::rng;
use crate::tactile::{LikelihoodParams, Observation, TaxelLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalSamplerConfig {
    /// Bounds of the planar offset length (m).
    pub radius: (f64, f64),
    /// Bounds of the offset direction (rad).
    pub angle: (f64, f64),
    /// Bounds of the heading perturbation at the first contact (rad).
    pub orientation: (f64, f64),
    /// Per-contact decay k_θ of the heading bounds.
    pub k_theta: f64,
    /// Floor of the decayed heading bound (rad).
    pub floor: f64,
    /// Projection gap (m).
    pub delta: f64,
}

impl Default for LocalSamplerConfig {
    fn default() -> Self {
        Self { radius: (0.0, 0.03), angle: (-PI, PI), orientation: (-PI, PI), k_theta: 0.6, floor: 0.1, delta: -0.0015 }
    }
}

impl LocalSamplerConfig {
    /// Heading perturbation bounds at contact `n` (1-based).
    pub fn orientation_bounds(&self, n: usize) -> (f64, f64) {
        let decay = self.k_theta.powi(n.max(1) as i32 - 1);
        let lo = (self.orientation.0 * decay).min(-self.floor);
        let hi = (self.orientation.1 * decay).max(self.floor);
        (lo, hi)
    }

    /// Uniform perturbation in cylindrical coordinates.
    pub fn perturb<R: Rng + ?Sized>(&self, p: &Pose2, n: usize, rng: &mut R) -> Pose2 {
        let r = uniform(rng, self.radius);
        let a = uniform(rng, self.angle);
        let t = uniform(rng, self.orientation_bounds(n));
        Pose2::new(p.x + r * a.cos(), p.y + r * a.sin(), p.theta + t)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Resamples the measurement-updated belief, perturbs each survivor and
/// projects it back into contact. Survivors whose projection fails are
/// kept unprojected only if they already satisfy the contact test;
/// otherwise they are dropped.
pub struct LocalSampler {
    pub config: LocalSamplerConfig,
}

impl Proposer for LocalSampler {
    fn name(&self) -> &'static str {
        "sdf"
    }

    fn propose(&self, ctx: &ProposalContext<'_>, n: usize, rng: &mut rng::Rng) -> Vec<Pose2> {
        local_samples(ctx.poses, ctx.weights, &ctx.sensor, ctx.model, &self.config, ctx.contact_index, n, rng)
    }
}

/// Alg.-2 style proposals from any weighted particle set.
#[allow(clippy::too_many_arguments)]
pub fn local_samples(
    poses: &[Pose2],
    weights: &[f64],
    sensor: &Pose2,
    model: &ContactModel,
    cfg: &LocalSamplerConfig,
    contact_index: usize,
    n: usize,
    rng: &mut rng::Rng,
) -> Vec<Pose2> {
    if poses.is_empty() || n == 0 {
        return Vec::new();
    }
    let idx = low_variance_resample(weights, n, rng);
    let delta = Delta::Fixed(cfg.delta);
    let base: u64 = rng.random();
    use rayon::prelude::*;
    idx.par_iter()
        .enumerate()
        .filter_map(|(j, &i)| {
            let mut r = rng::stream(base, j as u64);
            let p = cfg.perturb(&poses[i], contact_index, &mut r);
            let config = ContactConfig::new(p, *sensor);
            model.project(&config, delta, &mut r).ok()
        })
        .collect()
}

/// Observation collapsed to one virtual contact: mean activation and the
/// centroid of active taxels, pushed radially onto the sensor skin
/// (layout coordinates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedContact {
    pub value: f64,
    pub point: Vector3<f64>,
}

/// Averages the taxels above `zeta`. When the centroid lies on the axis
/// the direction of the lowest-index active taxel is used.
pub fn ft_reduce(obs: &Observation, layout: &TaxelLayout, zeta: f64) -> Option<ReducedContact> {
    let mut sum = 0.0;
    let mut c = Vector3::zeros();
    let mut count = 0usize;
    let mut first = None;
    for (i, (&z, p)) in obs.values().iter().zip(layout.positions()).enumerate() {
        if z as f64 > zeta {
            sum += z as f64;
            c += p;
            count += 1;
            first.get_or_insert(i);
        }
    }
    let first = first?;
    c /= count as f64;
    let planar = nalgebra::Vector2::new(c.x, c.y);
    let dir = if planar.norm() > 1e-9 {
        planar.normalize()
    } else {
        let p = layout.positions()[first];
        nalgebra::Vector2::new(p.x, p.y).normalize()
    };
    Some(ReducedContact { value: sum / count as f64, point: Vector3::new(dir.x * layout.radius, dir.y * layout.radius, c.z) })
}

/// Single-point likelihood of the reduced contact; constant when there is
/// nothing to reduce.
pub fn ft_log_likelihood(reduced: Option<&ReducedContact>, config: &ContactConfig, model: &ContactModel, params: &LikelihoodParams) -> f64 {
    let Some(r) = reduced else { return 0.0 };
    let (band_lo, _) = model.ee.sensing_band();
    let q = config.sensor_in_object().transform_point3(&Vector3::new(r.point.x, r.point.y, r.point.z + band_lo));
    params.taxel_log_density(r.value, model.grid.distance(&q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tactile::make_cylindrical_layout;

    #[test]
    fn orientation_bound_schedule() {
        let c = LocalSamplerConfig::default();
        assert_eq!(c.orientation_bounds(1), (-PI, PI));
        assert_eq!(c.orientation_bounds(200), (-0.1, 0.1));
        let (lo, hi) = c.orientation_bounds(2);
        assert!((hi - 0.6 * PI).abs() < 1e-12 && (lo + 0.6 * PI).abs() < 1e-12);
    }

    #[test]
    fn reduction_examples() {
        let l = make_cylindrical_layout(0.035, 0.15, 0.79).unwrap();
        let mut z = vec![0.0f32; l.len()];
        assert!(ft_reduce(&Observation(z.clone()), &l, 0.2).is_none());
        z[7] = 0.6;
        let r = ft_reduce(&Observation(z.clone()), &l, 0.2).unwrap();
        assert!((r.value - 0.6).abs() < 1e-6);
        assert!((r.point - l.positions()[7]).norm() < 1e-12);
        // Diametrically opposite pair on the same row.
        let z2: Vec<f32> = (0..l.len()).map(|i| if i == 0 || i == l.cols / 2 { 0.5 } else { 0.0 }).collect();
        assert_eq!(l.cols % 2, 0);
        let r = ft_reduce(&Observation(z2), &l, 0.2).unwrap();
        assert!((r.point - l.positions()[0]).norm() < 1e-12);
    }

    #[test]
    fn reduction_is_permutation_invariant() {
        let l = make_cylindrical_layout(0.035, 0.15, 0.79).unwrap();
        let z: Vec<f32> = (0..l.len()).map(|i| if (5..9).contains(&(i % l.cols)) && i / l.cols < 4 { 0.7 } else { 0.0 }).collect();
        let a = ft_reduce(&Observation(z.clone()), &l, 0.2).unwrap();
        // Summation in a different order gives the same centroid up to rounding.
        let mut idx: Vec<usize> = (0..l.len()).collect();
        idx.reverse();
        let (mut c, mut n) = (Vector3::zeros(), 0.0);
        for i in idx {
            if z[i] > 0.2 {
                c += l.positions()[i];
                n += 1.0;
            }
        }
        c /= n;
        let d = nalgebra::Vector2::new(c.x, c.y).normalize() * l.radius;
        assert!((a.point - Vector3::new(d.x, d.y, c.z)).norm() < 1e-12);
    }
}
