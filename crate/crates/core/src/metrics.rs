//! Pose-error metrics and summary statistics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{ContactConfig, ContactModel};
use crate::mesh::TriangleMesh;
use crate::pose::Pose2;
use crate::tactile::{log_likelihood, LikelihoodParams, Observation};

/// Normalized ADD below this counts as a successful estimate.
pub const SUCCESS_THRESHOLD: f64 = 0.1;
/// Model points per object.
pub const MODEL_POINTS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("the model point set is empty")]
    EmptyPointSet,
}

/// Seed-fixed farthest-point samples of the mesh surface.
pub fn model_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    mesh.farthest_point_samples(n, &mut crate::rng::named_stream(seed, "model-points"))
}

/// Mean distance between corresponding points under the two poses.
pub fn add(points: &[Vector3<f64>], est: &Pose2, gt: &Pose2) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::EmptyPointSet);
    }
    let s: f64 = points.iter().map(|p| (est.transform_point3(p) - gt.transform_point3(p)).norm()).sum();
    Ok(s / points.len() as f64)
}

/// Mean distance from each estimated point to the closest ground-truth point.
pub fn add_s(points: &[Vector3<f64>], est: &Pose2, gt: &Pose2) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::EmptyPointSet);
    }
    let target: Vec<Vector3<f64>> = points.iter().map(|p| gt.transform_point3(p)).collect();
    let tree = KdTree::new(&target);
    let s: f64 = points.iter().map(|p| tree.nearest_dist2(&est.transform_point3(p)).sqrt()).sum();
    Ok(s / points.len() as f64)
}

/// Brute-force ADD-S, the reference for the accelerated version.
pub fn add_s_brute(points: &[Vector3<f64>], est: &Pose2, gt: &Pose2) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::EmptyPointSet);
    }
    let target: Vec<Vector3<f64>> = points.iter().map(|p| gt.transform_point3(p)).collect();
    let s: f64 = points
        .iter()
        .map(|p| {
            let q = est.transform_point3(p);
            target.iter().map(|t| (q - t).norm_squared()).fold(f64::INFINITY, f64::min).sqrt()
        })
        .sum();
    Ok(s / points.len() as f64)
}

pub fn normalized_add(value: f64, d_obj: f64) -> f64 {
    value / d_obj
}

/// Pose error normalized by the object diameter, ADD-S for symmetric objects.
#[derive(Debug, Clone)]
pub struct PoseErrorMetric {
    pub points: Vec<Vector3<f64>>,
    pub d_obj: f64,
    pub symmetric: bool,
}

impl PoseErrorMetric {
    pub fn error(&self, est: &Pose2, gt: &Pose2) -> f64 {
        let v = if self.symmetric { add_s(&self.points, est, gt) } else { add(&self.points, est, gt) };
        normalized_add(v.expect("model points are never empty"), self.d_obj)
    }
}

/// Static 3-d tree over a point set; exact nearest-neighbour queries.
struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    /// Node order: a permutation of point indices laid out as an implicit
    /// balanced tree over index ranges.
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl<'a> KdTree<'a> {
    fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        Self::build(points, &mut order, &mut axes, 0);
        Self { points, order, axes }
    }

    fn build(points: &[Vector3<f64>], idx: &mut [usize], axes: &mut [u8], depth: usize) {
        if idx.is_empty() {
            return;
        }
        // Split on the axis of largest spread.
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in idx.iter() {
            lo = lo.inf(&points[i]);
            hi = hi.sup(&points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        axes[mid] = axis as u8;
        let (left, rest) = idx.split_at_mut(mid);
        let (la, ra) = axes.split_at_mut(mid);
        Self::build(points, left, la, depth + 1);
        Self::build(points, &mut rest[1..], &mut ra[1..], depth + 1);
    }

    fn nearest_dist2(&self, q: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, self.order.len(), q, &mut best);
        best
    }

    fn search(&self, start: usize, end: usize, q: &Vector3<f64>, best: &mut f64) {
        if start >= end {
            return;
        }
        let mid = start + (end - start) / 2;
        let p = &self.points[self.order[mid]];
        *best = best.min((p - q).norm_squared());
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((start, mid), (mid + 1, end)) } else { ((mid + 1, end), (start, mid)) };
        self.search(near.0, near.1, q, best);
        if diff * diff < *best {
            self.search(far.0, far.1, q, best);
        }
    }
}

/// Median and interquartile range with linearly interpolated quartiles
/// (the position `q·(n−1)` in the sorted list).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub mean: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    Some(Summary { n: v.len(), median, q1, q3, iqr: q3 - q1, mean: v.iter().sum::<f64>() / v.len() as f64 })
}

pub fn success_count(normalized_errors: &[f64]) -> usize {
    normalized_errors.iter().filter(|&&e| e < SUCCESS_THRESHOLD).count()
}

/// One ground-truth contact for sample-quality evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthContact {
    pub config: ContactConfig,
    pub obs: Observation,
}

/// Mean log-likelihood of each ground-truth observation under the
/// hypotheses `sampler` draws for it. `sampler` returns object poses in the
/// sensor frame.
pub fn avg_loglik(
    cases: &[GroundTruthContact],
    model: &ContactModel,
    params: &LikelihoodParams,
    mut sampler: impl FnMut(usize, &GroundTruthContact) -> Vec<Pose2>,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, case) in cases.iter().enumerate() {
        for rel in sampler(i, case) {
            let cfg = ContactConfig::from_relative(case.config.sensor, rel);
            total += log_likelihood(&case.obs, &cfg, model, params);
            count += 1;
        }
    }
    total / count.max(1) as f64
}

/// The hypothesis with the highest log-likelihood.
pub fn map_hypothesis(case: &GroundTruthContact, hyps: &[Pose2], model: &ContactModel, params: &LikelihoodParams) -> Option<Pose2> {
    use rayon::prelude::*;
    let scores: Vec<f64> = hyps
        .par_iter()
        .map(|rel| log_likelihood(&case.obs, &ContactConfig::from_relative(case.config.sensor, *rel), model, params))
        .collect();
    let mut best: Option<(f64, Pose2)> = None;
    for (s, h) in scores.into_iter().zip(hyps) {
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, *h));
        }
    }
    best.map(|(_, h)| h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::cylinder;
    use proptest::prelude::*;
    use rand::Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut r = crate::rng::seeded(seed);
        (0..n).map(|_| Vector3::new(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), r.random_range(0.0..0.2))).collect()
    }

    #[test]
    fn add_examples() {
        let pts = cloud(50, 1);
        let p = Pose2::new(0.3, 0.1, 1.0);
        assert_eq!(add(&pts, &p, &p).unwrap(), 0.0);
        assert_eq!(add_s(&pts, &p, &p).unwrap(), 0.0);
        let q = p.translated(0.01, 0.0);
        assert!((add(&pts, &q, &p).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(add(&[], &p, &p), Err(MetricError::EmptyPointSet));
        assert!((normalized_add(0.02263, 0.2263) - 0.1).abs() < 1e-12);
        assert_eq!(normalized_add(0.0, 0.2263), 0.0);
    }

    #[test]
    fn add_matches_loop_oracle() {
        let pts = cloud(500, 2);
        let (a, b) = (Pose2::new(0.1, 0.2, 0.3), Pose2::new(-0.1, 0.05, 2.0));
        let mut s = 0.0;
        for p in &pts {
            let (ca, sa) = (a.theta.cos(), a.theta.sin());
            let (cb, sb) = (b.theta.cos(), b.theta.sin());
            let pa = Vector3::new(a.x + ca * p.x - sa * p.y, a.y + sa * p.x + ca * p.y, p.z);
            let pb = Vector3::new(b.x + cb * p.x - sb * p.y, b.y + sb * p.x + cb * p.y, p.z);
            s += (pa - pb).norm();
        }
        assert!((add(&pts, &a, &b).unwrap() - s / 500.0).abs() < 1e-15);
    }

    #[test]
    fn cylinder_spin_is_invisible_to_add_s() {
        let mesh = cylinder(0.05, 0.1, 128);
        let pts = model_points(&mesh, 500, 0);
        let gt = Pose2::new(0.3, 0.0, 0.0);
        let est = Pose2::new(0.3, 0.0, 1.3);
        let s = add_s(&pts, &est, &gt).unwrap();
        let a = add(&pts, &est, &gt).unwrap();
        assert!(s < 0.1 * a, "{s} vs {a}");
        assert!(a > 0.02);
    }

    #[test]
    fn quartiles() {
        let s = summarize(&[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!((s.median, s.iqr, s.q1, s.q3), (3.0, 2.0, 2.0, 4.0));
        assert!(summarize(&[]).is_none());
        assert_eq!(success_count(&[0.05, 0.1, 0.2, 0.099]), 2);
    }

    proptest! {
        #[test]
        fn accelerated_add_s_is_exact(seed in 0u64..1000, n in 1usize..300,
                                      a in (-0.3f64..0.3, -0.3f64..0.3, 0.0f64..6.3),
                                      b in (-0.3f64..0.3, -0.3f64..0.3, 0.0f64..6.3)) {
            let pts = cloud(n, seed);
            let (pa, pb) = (Pose2::new(a.0, a.1, a.2), Pose2::new(b.0, b.1, b.2));
            let fast = add_s(&pts, &pa, &pb).unwrap();
            prop_assert_eq!(fast, add_s_brute(&pts, &pa, &pb).unwrap());
            prop_assert!(fast <= add(&pts, &pa, &pb).unwrap() + 1e-15);
        }
    }
}
