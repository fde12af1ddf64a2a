//! Contact constraint between the cylindrical sensor and an object.
//!
//! The sensor is a vertical cylinder of radius `r_s` whose axis passes
//! through the sensor pose. A configuration is in contact when the object
//! surface touches the sensor skin without penetrating deeper than a small
//! tolerance. Projection restores that condition by translating the object
//! along the horizontal SDF gradient at the axis point closest to it.

use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::Pose2;
use crate::sdf::SdfGrid;
use crate::tactile::TaxelLayout;

/// Maximum number of projection steps (one initial step plus refinements).
const MAX_PROJECTION_STEPS: usize = 16;
/// A taxel must sit this much deeper than the axis estimate to take over.
const TAXEL_OVERRIDE_MARGIN: f64 = 5e-5;
/// A projection step shorter than this counts as converged.
const STEP_TOLERANCE: f64 = 1e-9;
const MIN_GRADIENT: f64 = 1e-6;
/// Nudges tried when no axis sample has a usable gradient.
const MAX_JITTERS: u32 = 4;
/// Smallest horizontal component of the unit normal that still defines a
/// usable projection direction.
const MIN_PLANAR_NORMAL: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("SDF gradient vanishes at the closest axis point {point:?} (medial axis)")]
    ZeroGradient { point: [f64; 3] },
    #[error("projection did not reach a valid contact (residual step {residual:.3e} m, min contact value {min_value:.3e} m)")]
    NotConverged { residual: f64, min_value: f64 },
    #[error("non-finite pose during projection")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndEffector {
    /// Cylinder radius r_s (m).
    pub radius: f64,
    /// Total length of the end-effector below the flange (m).
    pub length: f64,
    /// Height of the sensorized band (m), measured from the tip.
    pub sensing_height: f64,
    /// Flange height z_ee (m) in the object frame.
    pub z_ee: f64,
    /// Number K of samples along the axis.
    pub axis_samples: usize,
}

impl Default for EndEffector {
    fn default() -> Self {
        Self { radius: 0.035, length: 0.2, sensing_height: 0.15, z_ee: 0.2, axis_samples: 16 }
    }
}

impl EndEffector {
    pub fn with_z(mut self, z_ee: f64) -> Self {
        self.z_ee = z_ee;
        self
    }

    /// `(z_lo, z_hi)` of the sensorized band in the object frame.
    pub fn sensing_band(&self) -> (f64, f64) {
        let lo = self.z_ee - self.length;
        (lo, lo + self.sensing_height)
    }

    /// Axis sample heights, evenly spaced over the band, ends included.
    pub fn axis_heights(&self) -> Vec<f64> {
        let (lo, hi) = self.sensing_band();
        let k = self.axis_samples.max(2);
        (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactThresholds {
    /// Deepest admissible penetration δ_pen (m, negative).
    pub delta_pen: f64,
    /// Largest admissible gap δ_max (m).
    pub delta_max: f64,
    /// Numerical slack applied to both bounds (m).
    pub tol: f64,
}

impl Default for ContactThresholds {
    fn default() -> Self {
        Self { delta_pen: -0.003, delta_max: 0.0, tol: 1e-4 }
    }
}

/// Target signed gap δ between the sensor skin and the object surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Delta {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl Delta {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Delta::Fixed(d) => d,
            Delta::Uniform { lo, hi } if hi > lo => rng.random_range(lo..=hi),
            Delta::Uniform { lo, .. } => lo,
        }
    }

    /// Uniform over the admissible band, as used for training data.
    pub fn training(th: &ContactThresholds) -> Self {
        Delta::Uniform { lo: th.delta_pen, hi: th.delta_max }
    }

    /// Fixed midpoint of the penetration band, as used at inference.
    pub fn inference(th: &ContactThresholds) -> Self {
        Delta::Fixed(th.delta_pen / 2.0)
    }
}

/// An object pose and a sensor pose, both in the world frame, plus the
/// object pose expressed in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    pub object: Pose2,
    pub sensor: Pose2,
    pub relative: Pose2,
}

impl ContactConfig {
    pub fn new(object: Pose2, sensor: Pose2) -> Self {
        Self { object, sensor, relative: object.relative_to(&sensor) }
    }

    /// Builds the configuration from the object pose in the sensor frame.
    pub fn from_relative(sensor: Pose2, relative: Pose2) -> Self {
        Self { object: sensor.compose(&relative), sensor, relative }
    }

    /// The sensor pose expressed in the object frame.
    pub fn sensor_in_object(&self) -> Pose2 {
        self.sensor.relative_to(&self.object)
    }

    /// Maps a point from the sensor frame into the object frame.
    pub fn sensor_to_object(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.sensor_in_object().transform_point3(p)
    }
}

/// Closest point of the sensor axis to the object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPoint {
    /// Position in the object frame.
    pub point: Vector3<f64>,
    pub phi: f64,
    pub index: usize,
    /// Every axis sample lay outside the grid.
    pub far_field: bool,
}

pub fn closest_axis_point(config: &ContactConfig, grid: &SdfGrid, ee: &EndEffector) -> AxisPoint {
    closest_on_heights(config, grid, &ee.axis_heights())
}

fn closest_on_heights(config: &ContactConfig, grid: &SdfGrid, heights: &[f64]) -> AxisPoint {
    let s = config.sensor_in_object();
    let mut best: Option<AxisPoint> = None;
    let mut all_outside = true;
    for (index, &z) in heights.iter().enumerate() {
        let point = Vector3::new(s.x, s.y, z);
        let q = grid.query(&point);
        all_outside &= q.extrapolated;
        if best.map_or(true, |b| q.value < b.phi) {
            best = Some(AxisPoint { point, phi: q.value, index, far_field: false });
        }
    }
    let mut best = best.expect("at least one axis sample");
    best.far_field = all_outside;
    best
}

/// Signed distances of every sampled point of the sensor skin: each taxel,
/// plus each axis sample inflated by the radius.
pub fn contact_values(config: &ContactConfig, grid: &SdfGrid, ee: &EndEffector, layout: &TaxelLayout) -> Vec<f64> {
    let s = config.sensor_in_object();
    let (band_lo, _) = ee.sensing_band();
    let mut out = Vec::with_capacity(layout.len() + ee.axis_samples);
    for p in layout.positions() {
        let q = s.transform_point3(&Vector3::new(p.x, p.y, p.z + band_lo));
        out.push(grid.distance(&q));
    }
    for z in ee.axis_heights() {
        out.push(grid.distance(&Vector3::new(s.x, s.y, z)) - ee.radius);
    }
    out
}

fn values_valid(values: &[f64], th: &ContactThresholds) -> bool {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    min > th.delta_pen - th.tol && min < th.delta_max + th.tol
}

/// Contact validity: nothing penetrates deeper than `δ_pen` and the closest
/// point lies within the admissible band.
pub fn check_contact(config: &ContactConfig, grid: &SdfGrid, ee: &EndEffector, layout: &TaxelLayout, th: &ContactThresholds) -> bool {
    values_valid(&contact_values(config, grid, ee, layout), th)
}

/// Projects the object onto the contact manifold by planar translation;
/// the object heading is left untouched.
///
/// Each step moves the object along the horizontal surface normal at the
/// axis sample closest to it, so that the sensor skin sits at gap `δ`. If a
/// taxel penetrates clearly deeper than the axis estimate suggests (a
/// concave pocket next to the contact), that taxel drives the step instead.
pub fn project_to_contact<R: Rng + ?Sized>(
    config: &ContactConfig,
    grid: &SdfGrid,
    ee: &EndEffector,
    layout: &TaxelLayout,
    th: &ContactThresholds,
    delta: Delta,
    rng: &mut R,
) -> Result<Pose2, ContactError> {
    let delta = delta.sample(rng);
    let target = ee.radius + delta;
    let (band_lo, _) = ee.sensing_band();
    let mut heights = ee.axis_heights();
    let mut jitters = 0u32;
    let mut offset = Vector2::zeros();
    let mut previous = Vector2::zeros();
    let mut object = config.object;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_PROJECTION_STEPS {
        let cfg = ContactConfig::new(object, config.sensor);
        let axis = closest_on_heights(&cfg, grid, &heights);
        let s = cfg.sensor_in_object();
        let deepest_taxel = layout
            .positions()
            .iter()
            .map(|p| {
                let q = s.transform_point3(&Vector3::new(p.x, p.y, p.z + band_lo));
                (grid.distance(&q), q)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let taxel_step = deepest_taxel
            .filter(|(phi, _)| *phi < axis.phi - ee.radius - TAXEL_OVERRIDE_MARGIN)
            .and_then(|(phi, q)| planar_step(grid, &q, phi, delta));
        let pending_jitter = offset != Vector2::zeros();
        let mut step = match taxel_step {
            Some(step) => step,
            None => loop {
                match step_on_heights(&cfg, grid, &heights, offset, target) {
                    Ok(step) => break step,
                    Err(_) if jitters < MAX_JITTERS => {
                        // Nudge the samples off the symmetry plane or medial
                        // surface: by up to half a sample pitch vertically and
                        // a few grid cells horizontally. Interpolation flattens
                        // the field within a cell or so of a medial axis, hence
                        // the growing radius.
                        jitters += 1;
                        let dz = (ee.axis_heights()[1] - ee.axis_heights()[0]) / 2.0;
                        heights = ee.axis_heights();
                        for h in &mut heights {
                            *h += rng.random_range(-dz..dz);
                        }
                        let h = grid.max_spacing() * f64::from(1u32 << (jitters - 1));
                        offset = Vector2::new(rng.random_range(-h..h), rng.random_range(-h..h));
                    }
                    Err(point) => return Err(ContactError::ZeroGradient { point: point.into() }),
                }
            },
        };
        // Two parts of a compound object can hand the axis back and forth;
        // halving a reversing step breaks such cycles.
        if step.dot(&previous) < -0.5 * step.norm() * previous.norm() {
            step *= 0.5;
        }
        previous = step;
        if pending_jitter {
            // The nudge only seeds one step; later steps use the true axis.
            offset = Vector2::zeros();
            heights = ee.axis_heights();
        }
        residual = step.norm();
        if residual < STEP_TOLERANCE {
            break;
        }
        let world = Pose2 { x: 0.0, y: 0.0, theta: object.theta }.rotate_vector2(step);
        object = object.translated(world.x, world.y);
        if !object.is_finite() {
            return Err(ContactError::NonFinite);
        }
    }
    let values = contact_values(&ContactConfig::new(object, config.sensor), grid, ee, layout);
    if values_valid(&values, th) {
        Ok(object)
    } else {
        let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        Err(ContactError::NotConverged { residual, min_value })
    }
}

/// Projection step computed at the closest axis sample. When the surface
/// nearest to that sample is horizontal (for example the sensor tip sits just
/// above an overhang) its planar normal is undefined, so the next closest
/// samples are tried in order. Returns the offending point if none works.
fn step_on_heights(
    config: &ContactConfig,
    grid: &SdfGrid,
    heights: &[f64],
    offset: Vector2<f64>,
    target: f64,
) -> Result<Vector2<f64>, Vector3<f64>> {
    let mut s = config.sensor_in_object();
    s.x += offset.x;
    s.y += offset.y;
    let shifted = ContactConfig::new(Pose2::identity(), s);
    let closest = closest_on_heights(&shifted, grid, heights);
    if let Some(step) = planar_step(grid, &closest.point, closest.phi, target) {
        return Ok(step);
    }
    let mut samples: Vec<(f64, usize)> = heights
        .iter()
        .enumerate()
        .map(|(i, &z)| (grid.distance(&Vector3::new(s.x, s.y, z)), i))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (phi, i) in samples {
        if let Some(step) = planar_step(grid, &Vector3::new(s.x, s.y, heights[i]), phi, target) {
            return Ok(step);
        }
    }
    Err(closest.point)
}

/// Object-frame translation that brings a sample point to the target
/// signed distance by moving the object horizontally.
///
/// With `n` the unit gradient at the point, a horizontal translation `s` of
/// the object along `n̂_xy` changes the distance at the point by `s·|n_xy|`
/// to first order, so `s = (φ − target) / |n_xy|`. On vertical walls this is
/// the usual "distance minus radius" move. Positive `s` brings the surface
/// closer to the point whatever the sign of `φ`.
fn planar_step(grid: &SdfGrid, point: &Vector3<f64>, phi: f64, target: f64) -> Option<Vector2<f64>> {
    let g = grid.gradient(point).value;
    let norm = g.norm();
    if !(norm > MIN_GRADIENT) {
        return None;
    }
    let n = g / norm;
    let nxy = Vector2::new(n.x, n.y);
    let planar = nxy.norm();
    if !(planar > MIN_PLANAR_NORMAL) {
        return None;
    }
    Some(nxy / planar * ((phi - target) / planar))
}

/// A grid, sensor geometry and taxel layout bundled for repeated use.
#[derive(Debug, Clone)]
pub struct ContactModel {
    pub grid: Arc<SdfGrid>,
    pub ee: EndEffector,
    pub layout: Arc<TaxelLayout>,
    pub thresholds: ContactThresholds,
}

impl ContactModel {
    pub fn new(grid: Arc<SdfGrid>, ee: EndEffector, layout: Arc<TaxelLayout>, thresholds: ContactThresholds) -> Self {
        Self { grid, ee, layout, thresholds }
    }

    pub fn closest_axis_point(&self, config: &ContactConfig) -> AxisPoint {
        closest_axis_point(config, &self.grid, &self.ee)
    }

    pub fn contact_values(&self, config: &ContactConfig) -> Vec<f64> {
        contact_values(config, &self.grid, &self.ee, &self.layout)
    }

    pub fn check(&self, config: &ContactConfig) -> bool {
        check_contact(config, &self.grid, &self.ee, &self.layout, &self.thresholds)
    }

    pub fn project<R: Rng + ?Sized>(&self, config: &ContactConfig, delta: Delta, rng: &mut R) -> Result<Pose2, ContactError> {
        project_to_contact(config, &self.grid, &self.ee, &self.layout, &self.thresholds, delta, rng)
    }

    /// Projects an object pose given in the sensor frame and returns the
    /// projected pose, again in the sensor frame.
    pub fn project_relative<R: Rng + ?Sized>(&self, relative: &Pose2, delta: Delta, rng: &mut R) -> Result<Pose2, ContactError> {
        let cfg = ContactConfig::from_relative(Pose2::identity(), *relative);
        self.project(&cfg, delta, rng)
    }

    /// Signed distance of each taxel to the object surface.
    pub fn taxel_distances(&self, config: &ContactConfig) -> Vec<f64> {
        let s = config.sensor_in_object();
        let (band_lo, _) = self.ee.sensing_band();
        self.layout
            .positions()
            .iter()
            .map(|p| self.grid.distance(&s.transform_point3(&Vector3::new(p.x, p.y, p.z + band_lo))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::Aabb;
    use crate::tactile::make_cylindrical_layout;
    use proptest::prelude::*;

    const R_DISK: f64 = 0.05;

    fn disk_model() -> ContactModel {
        cylinder_model(0.2)
    }

    /// Solid vertical cylinder of radius R_DISK from z = 0 to `height`.
    fn cylinder_model(height: f64) -> ContactModel {
        let bbox = Aabb::new(Vector3::new(-0.2, -0.2, -0.05), Vector3::new(0.2, 0.2, 0.25));
        let grid = SdfGrid::from_fn(bbox, [81, 81, 31], |p| {
            let radial = (p.x * p.x + p.y * p.y).sqrt() - R_DISK;
            let axial = (p.z - height / 2.0).abs() - height / 2.0;
            let outside = Vector2::new(radial.max(0.0), axial.max(0.0)).norm();
            outside + radial.max(axial).min(0.0)
        })
        .unwrap();
        let ee = EndEffector::default().with_z(0.21);
        let layout = make_cylindrical_layout(ee.radius, ee.sensing_height, 1.56).unwrap();
        ContactModel::new(Arc::new(grid), ee, Arc::new(layout), ContactThresholds::default())
    }

    #[test]
    fn disk_projection_hits_analytic_distance() {
        let m = disk_model();
        let mut rng = crate::rng::seeded(3);
        for delta in [-0.003, -0.0015, 0.0] {
            let cfg = ContactConfig::new(Pose2::new(0.03, 0.12, 1.0), Pose2::new(0.0, 0.0, 0.4));
            let p = m.project(&cfg, Delta::Fixed(delta), &mut rng).unwrap();
            let d = p.translation().norm();
            assert!((d - (R_DISK + m.ee.radius + delta)).abs() < 2e-4, "{d}");
            assert_eq!(p.theta, cfg.object.theta);
            assert!(m.check(&ContactConfig::new(p, cfg.sensor)));
        }
    }

    #[test]
    fn sensor_on_the_axis_of_a_squat_cylinder_still_projects() {
        // Along the axis the caps are nearer than the side, so no axis
        // sample has a horizontal normal until the sensor is nudged well
        // away from the center.
        let m = cylinder_model(0.06);
        for seed in 0..20 {
            let mut rng = crate::rng::seeded(seed);
            let cfg = ContactConfig::new(Pose2::new(1e-5, -2e-5, 0.3), Pose2::identity());
            let p = m.project(&cfg, Delta::Fixed(-0.0015), &mut rng).unwrap();
            assert!(m.check(&ContactConfig::new(p, cfg.sensor)));
        }
    }

    #[test]
    fn far_and_penetrating_configs_are_invalid() {
        let m = disk_model();
        let sensor = Pose2::identity();
        assert!(!m.check(&ContactConfig::new(Pose2::new(0.3, 0.0, 0.0), sensor)));
        assert!(!m.check(&ContactConfig::new(Pose2::new(0.06, 0.0, 0.0), sensor)));
        assert!(m.check(&ContactConfig::new(Pose2::new(R_DISK + 0.035 - 0.001, 0.0, 0.0), sensor)));
    }

    #[test]
    fn fixed_point_is_preserved() {
        let m = disk_model();
        let mut rng = crate::rng::seeded(0);
        let object = Pose2::new(0.0, -(R_DISK + 0.035 - 0.001), 2.0);
        let cfg = ContactConfig::new(object, Pose2::identity());
        let gap = m.closest_axis_point(&cfg).phi - m.ee.radius;
        let p = m.project(&cfg, Delta::Fixed(gap), &mut rng).unwrap();
        assert!((p.translation() - object.translation()).norm() < 1e-9);
    }

    #[test]
    fn axis_tie_prefers_lowest_index() {
        let m = disk_model();
        let ee = EndEffector { axis_samples: 2, z_ee: 0.19, length: 0.18, sensing_height: 0.16, ..m.ee };
        // Both samples sit beside the straight wall at the same distance.
        let cfg = ContactConfig::new(Pose2::identity(), Pose2::new(0.1, 0.0, 0.0));
        let a = closest_axis_point(&cfg, &m.grid, &ee);
        assert_eq!(a.index, 0);
        assert!(!a.far_field);
        let inside = closest_axis_point(&ContactConfig::new(Pose2::identity(), Pose2::new(0.01, 0.0, 0.0)), &m.grid, &ee);
        assert!(inside.phi < 0.0);
    }

    proptest! {
        #[test]
        fn frame_consistency(ox in -1.0..1.0f64, oy in -1.0..1.0f64, ot in -7.0..7.0f64,
                             sx in -1.0..1.0f64, sy in -1.0..1.0f64, st in -7.0..7.0f64) {
            let cfg = ContactConfig::new(Pose2::new(ox, oy, ot), Pose2::new(sx, sy, st));
            let back = cfg.sensor.compose(&cfg.relative);
            prop_assert!((back.x - ox).abs() < 1e-12 && (back.y - oy).abs() < 1e-12);
            prop_assert!(crate::pose::wrap_diff_period(back.theta - cfg.object.theta, std::f64::consts::TAU).abs() < 1e-12);
        }

        #[test]
        fn projection_is_idempotent(x in -0.2..0.2f64, y in -0.2..0.2f64, t in 0.0..6.28f64, seed in 0u64..1000) {
            let m = disk_model();
            let mut rng = crate::rng::seeded(seed);
            let delta = Delta::Fixed(-0.0015);
            let cfg = ContactConfig::new(Pose2::new(x, y, t), Pose2::identity());
            if let Ok(p) = m.project(&cfg, delta, &mut rng) {
                let q = m.project(&ContactConfig::new(p, cfg.sensor), delta, &mut rng).unwrap();
                prop_assert!((q.translation() - p.translation()).norm() < 1e-6);
                prop_assert_eq!(q.theta.to_bits(), p.theta.to_bits());
            }
        }
    }
}
