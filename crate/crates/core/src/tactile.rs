//! Taxel layouts, the distance-based observation model and its likelihood.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{ContactConfig, ContactModel};
use crate::pose::Pose2;

#[derive(Debug, Error)]
pub enum TactileError {
    #[error("taxel density {density} taxels/cm² yields only {count} taxels (need at least 4)")]
    TooFewTaxels { density: f64, count: usize },
    #[error("raw reading has {raw} entries but the baseline has {baseline}")]
    LengthMismatch { raw: usize, baseline: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed observation log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// Taxel centres on the cylindrical sensor skin, in the sensor frame.
///
/// Heights are measured from the bottom of the sensorized band.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxelLayout {
    pub radius: f64,
    pub height: f64,
    pub density: f64,
    pub cols: usize,
    pub rows: usize,
    positions: Vec<Vector3<f64>>,
    angles: Vec<f64>,
}

/// Regular grid of taxels on the unwrapped cylinder, one taxel per
/// `1/density` cm².
pub fn make_cylindrical_layout(radius: f64, height: f64, density: f64) -> Result<TaxelLayout, TactileError> {
    let pitch = if density > 0.0 { density.sqrt() } else { 0.0 };
    let cols = (TAU * radius * 100.0 * pitch).round() as usize;
    let rows = (height * 100.0 * pitch).round() as usize;
    if !(density > 0.0) || cols * rows < 4 || cols == 0 || rows == 0 {
        return Err(TactileError::TooFewTaxels { density, count: cols * rows });
    }
    let mut positions = Vec::with_capacity(cols * rows);
    let mut angles = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        let z = height * (r as f64 + 0.5) / rows as f64;
        for c in 0..cols {
            let a = TAU * (c as f64 + 0.5) / cols as f64;
            positions.push(Vector3::new(radius * a.cos(), radius * a.sin(), z));
            angles.push(a);
        }
    }
    Ok(TaxelLayout { radius, height, density, cols, rows, positions, angles })
}

impl TaxelLayout {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    /// Angular coordinate of each taxel around the axis, in `[0, 2π)`.
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// Normalized taxel activations in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f32>);

impl Observation {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    /// True when at least one taxel is active.
    pub fn in_contact(&self) -> bool {
        self.0.iter().any(|&v| v > 0.0)
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&v| v > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorParams {
    /// Activation noise standard deviation σ_tax.
    pub sigma_tax: f64,
    /// Distance at which activation vanishes (m).
    pub d_max: f64,
    /// Noise floor ζ; smaller activations are reported as zero.
    pub zeta: f64,
    /// Probability of an inactive patch per observation.
    pub p_fail: f64,
    /// Angular width range of an inactive patch (degrees).
    pub patch_width_deg: (f64, f64),
    /// Height range of an inactive patch, as a fraction of the band.
    pub patch_height_frac: (f64, f64),
}

impl Default for SensorParams {
    fn default() -> Self {
        Self { sigma_tax: 0.02, d_max: 0.003, zeta: 0.2, p_fail: 0.0, patch_width_deg: (20.0, 120.0), patch_height_frac: (0.25, 1.0) }
    }
}

/// Piecewise-linear activation for a taxel at signed distance `phi`.
/// Penetration gives values above one; callers clip.
pub fn expected_activation(phi: f64, d_max: f64) -> f64 {
    if phi < d_max {
        1.0 - phi / d_max
    } else {
        0.0
    }
}

fn finalize(v: f64, zeta: f64) -> f32 {
    let c = v.clamp(0.0, 1.0);
    if c < zeta {
        0.0
    } else {
        c as f32
    }
}

/// Draws a noisy array response from the taxel signed distances.
pub fn sample_from_distances<R: Rng + ?Sized>(
    phis: &[f64],
    layout: &TaxelLayout,
    params: &SensorParams,
    rng: &mut R,
) -> Observation {
    let mut mask = vec![false; phis.len()];
    if params.p_fail > 0.0 && rng.random::<f64>() < params.p_fail {
        let width = rng.random_range(params.patch_width_deg.0..=params.patch_width_deg.1).to_radians();
        let center = rng.random_range(0.0..TAU);
        let frac = rng.random_range(params.patch_height_frac.0..=params.patch_height_frac.1);
        let band = frac * layout.height;
        let start = rng.random_range(0.0..=(layout.height - band).max(0.0));
        for (i, p) in layout.positions().iter().enumerate() {
            let da = crate::pose::wrap_diff_period(layout.angles()[i] - center, TAU).abs();
            mask[i] = da <= width / 2.0 && p.z >= start && p.z <= start + band;
        }
    }
    let noise = (params.sigma_tax > 0.0).then(|| Normal::new(0.0, params.sigma_tax).expect("finite sigma"));
    let values = phis
        .iter()
        .zip(&mask)
        .map(|(&phi, &inactive)| {
            let mu = if inactive { 0.0 } else { expected_activation(phi, params.d_max) };
            let z = mu + noise.as_ref().map_or(0.0, |n| n.sample(rng));
            finalize(z, params.zeta)
        })
        .collect();
    Observation(values)
}

/// Simulated observation for a contact configuration.
pub fn sample_observation<R: Rng + ?Sized>(config: &ContactConfig, model: &ContactModel, params: &SensorParams, rng: &mut R) -> Observation {
    sample_from_distances(&model.taxel_distances(config), &model.layout, params, rng)
}

/// Noise model of the filter likelihood: a logistic blend between a wide
/// deviation near the surface and a narrow one far from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodParams {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub kappa: f64,
    pub d0: f64,
    /// Activation distance used for the expected response (m).
    pub d_max: f64,
    /// Include the `−ln σ̃` normalizer of each Gaussian. Without it the
    /// wider deviation near the surface only softens the residual penalty;
    /// with it every near-surface taxel also costs `ln(σ̃_max/σ̃_min)`,
    /// which favours poses that touch as little as possible.
    pub normalized: bool,
}

impl Default for LikelihoodParams {
    fn default() -> Self {
        Self { sigma_min: 0.4, sigma_max: 1.2, kappa: 1000.0, d0: 0.01, d_max: 0.003, normalized: false }
    }
}

impl LikelihoodParams {
    pub fn sigma(&self, phi: f64) -> f64 {
        // 1 / (1 + e^x) evaluated without overflow.
        let x = self.kappa * (phi - self.d0);
        let s = if x > 0.0 {
            let e = (-x).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + x.exp())
        };
        self.sigma_min + (self.sigma_max - self.sigma_min) * s
    }

    /// Log score of one taxel reading: the Gaussian log density, up to the
    /// normalizer when `normalized` is off.
    pub fn taxel_log_density(&self, z: f64, phi: f64) -> f64 {
        let mu = expected_activation(phi, self.d_max).clamp(0.0, 1.0);
        let s = self.sigma(phi);
        let r = (z - mu) / s;
        if self.normalized {
            -0.5 * r * r - s.ln() - 0.5 * (TAU).ln()
        } else {
            -0.5 * r * r
        }
    }
}

/// Sum of per-taxel Gaussian log densities.
pub fn log_likelihood_from_distances(obs: &Observation, phis: &[f64], params: &LikelihoodParams) -> f64 {
    debug_assert_eq!(obs.len(), phis.len());
    obs.values().iter().zip(phis).map(|(&z, &phi)| params.taxel_log_density(z as f64, phi)).sum()
}

pub fn log_likelihood(obs: &Observation, config: &ContactConfig, model: &ContactModel, params: &LikelihoodParams) -> f64 {
    log_likelihood_from_distances(obs, &model.taxel_distances(config), params)
}

/// Converts raw sensor counts into a normalized observation.
pub fn preprocess_raw(raw: &[i64], baseline: &[i64], z_max: f64, zeta: f64) -> Result<Observation, TactileError> {
    if raw.len() != baseline.len() {
        return Err(TactileError::LengthMismatch { raw: raw.len(), baseline: baseline.len() });
    }
    let values = raw
        .iter()
        .zip(baseline)
        .map(|(&r, &b)| {
            let z = (r - b).max(0) as f64 / z_max;
            if z < zeta {
                0.0
            } else {
                z.min(1.0) as f32
            }
        })
        .collect();
    Ok(Observation(values))
}

/// One line of an observation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub t: f64,
    pub u: Pose2,
    pub z: Observation,
}

pub fn write_observation_log(path: impl AsRef<Path>, records: &[ObservationRecord]) -> Result<(), TactileError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observation_log(path: impl AsRef<Path>) -> Result<Vec<ObservationRecord>, TactileError> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| TactileError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// Angle of the activation centroid around the sensor axis, if any taxel is
/// active. Useful for diagnostics and data binning.
pub fn contact_angle(obs: &Observation, layout: &TaxelLayout) -> Option<f64> {
    let (mut sx, mut sy) = (0.0, 0.0);
    for (&z, p) in obs.values().iter().zip(layout.positions()) {
        sx += z as f64 * p.x;
        sy += z as f64 * p.y;
    }
    (sx != 0.0 || sy != 0.0).then(|| sy.atan2(sx).rem_euclid(TAU))
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> TaxelLayout {
        make_cylindrical_layout(0.035, 0.15, 1.56).unwrap()
    }

    #[test]
    fn reference_layout_size() {
        let l = layout();
        assert!((l.len() as f64 - 514.0).abs() <= 0.05 * 514.0, "{}", l.len());
        let max_dev = l.positions().iter().map(|p| ((p.x * p.x + p.y * p.y).sqrt() - 0.035).abs()).fold(0.0, f64::max);
        assert!(max_dev < 1e-12);
        assert!(l.positions().iter().all(|p| p.z > 0.0 && p.z < 0.15));
    }

    #[test]
    fn doubling_density_doubles_count() {
        for d in [0.29, 0.79, 1.56] {
            let a = make_cylindrical_layout(0.035, 0.15, d).unwrap().len() as f64;
            let b = make_cylindrical_layout(0.035, 0.15, 2.0 * d).unwrap().len() as f64;
            assert!((b / a - 2.0).abs() < 0.15, "{d}: {a} -> {b}");
        }
        assert!(make_cylindrical_layout(0.035, 0.15, 1e-4).is_err());
    }

    #[test]
    fn activation_profile() {
        assert_eq!(expected_activation(0.0, 0.003), 1.0);
        assert_eq!(expected_activation(0.003, 0.003), 0.0);
        assert!((expected_activation(0.0015, 0.003) - 0.5).abs() < 1e-15);
        assert!(expected_activation(-0.003, 0.003) > 1.0);
    }

    #[test]
    fn noiseless_observation_is_clipped_activation() {
        let l = layout();
        let params = SensorParams { sigma_tax: 0.0, ..Default::default() };
        let mut rng = crate::rng::seeded(0);
        let phis: Vec<f64> = (0..l.len()).map(|i| -0.004 + 0.008 * i as f64 / l.len() as f64).collect();
        let obs = sample_from_distances(&phis, &l, &params, &mut rng);
        for (&z, &phi) in obs.values().iter().zip(&phis) {
            assert_eq!(z, finalize(expected_activation(phi, 0.003), 0.2));
        }
        let far = sample_from_distances(&vec![0.1; l.len()], &l, &params, &mut rng);
        assert!(!far.in_contact());
        let touch = sample_from_distances(&vec![0.0; l.len()], &l, &params, &mut rng);
        assert!(touch.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn monte_carlo_mean_matches_expected_activation() {
        // Without thresholding or clipping the sample mean is unbiased.
        let l = make_cylindrical_layout(0.035, 0.15, 0.29).unwrap();
        let params = SensorParams { zeta: 0.0, ..Default::default() };
        let phis: Vec<f64> = (0..l.len()).map(|i| 0.0003 + 0.0024 * i as f64 / l.len() as f64).collect();
        let mut sums = vec![0.0f64; l.len()];
        let mut rng = crate::rng::seeded(11);
        let n = 10_000;
        for _ in 0..n {
            let o = sample_from_distances(&phis, &l, &params, &mut rng);
            for (s, &v) in sums.iter_mut().zip(o.values()) {
                *s += v as f64;
            }
        }
        for (s, &phi) in sums.iter().zip(&phis) {
            let mu = expected_activation(phi, 0.003);
            assert!((s / n as f64 - mu).abs() < 3.0 * 0.02 / 100.0, "phi {phi}");
        }
    }

    #[test]
    fn patches_silence_a_contiguous_band() {
        let l = layout();
        let params = SensorParams { sigma_tax: 0.0, p_fail: 1.0, ..Default::default() };
        let mut rng = crate::rng::seeded(5);
        for _ in 0..20 {
            let o = sample_from_distances(&vec![0.0; l.len()], &l, &params, &mut rng);
            let off = o.values().iter().filter(|&&v| v == 0.0).count();
            assert!(off > 0 && off < l.len());
        }
    }

    #[test]
    fn likelihood_noise_blend() {
        let p = LikelihoodParams::default();
        assert!((p.sigma(p.d0) - 0.8).abs() < 1e-12);
        assert!((p.sigma(0.5) - p.sigma_min).abs() < 1e-6);
        assert!((p.sigma(-0.5) - p.sigma_max).abs() < 1e-6);
    }

    #[test]
    fn preprocess_examples() {
        let z = preprocess_raw(&[100, 3100, 400, 50], &[100, 100, 100, 100], 3000.0, 0.2).unwrap();
        assert_eq!(z.values(), &[0.0, 1.0, 0.0, 0.0]);
        assert!(preprocess_raw(&[1, 2], &[1], 3000.0, 0.2).is_err());
    }

    #[test]
    fn observation_log_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.jsonl");
        let recs = vec![
            ObservationRecord { t: 0.0, u: Pose2::new(0.1, 0.2, 0.3), z: Observation(vec![0.0, 0.5, 1.0]) },
            ObservationRecord { t: 0.05, u: Pose2::new(0.1, 0.25, 0.3), z: Observation(vec![0.25, 0.0, 0.0]) },
        ];
        write_observation_log(&path, &recs).unwrap();
        assert_eq!(read_observation_log(&path).unwrap(), recs);
    }

    proptest! {
        #[test]
        fn sigma_is_monotone(a in -0.05..0.05f64, b in -0.05..0.05f64) {
            let p = LikelihoodParams::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(p.sigma(lo) >= p.sigma(hi));
        }

        #[test]
        fn observations_are_thresholded(phis in proptest::collection::vec(-0.01..0.01f64, 513), seed in 0u64..100) {
            let l = layout();
            let mut rng = crate::rng::seeded(seed);
            let params = SensorParams { p_fail: 0.7, ..Default::default() };
            let o = sample_from_distances(&phis, &l, &params, &mut rng);
            prop_assert!(o.values().iter().all(|&v| v == 0.0 || (0.2..=1.0).contains(&v)));
        }

        #[test]
        fn preprocess_never_below_threshold(raw in proptest::collection::vec(0i64..5000, 16)) {
            let o = preprocess_raw(&raw, &[0; 16], 3000.0, 0.2).unwrap();
            prop_assert!(o.values().iter().all(|&v| v == 0.0 || (0.2..=1.0).contains(&v)));
        }
    }
}
