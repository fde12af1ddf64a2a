//! Contact datasets: uniformly drawn poses, projected into contact, simulated
//! observations, and a joint histogram cap that evens out the coverage of
//! the contact manifold.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{ContactConfig, ContactModel, Delta};
use crate::pose::Pose2;
use crate::rng;
use crate::tactile::{sample_observation, Observation, SensorParams};

const MAGIC: &[u8; 4] = b"TPDS";
const FORMAT_VERSION: u32 = 1;
/// Candidates evaluated in parallel before sequential binning.
const CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} is not a contact dataset: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("metadata of {path}: {source}")]
    Meta { path: PathBuf, source: serde_json::Error },
}

/// Joint histogram over contact angle and relative orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinSpec {
    pub n_pos: usize,
    pub n_ori: usize,
    pub n_bin: usize,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self { n_pos: 50, n_ori: 100, n_bin: 10 }
    }
}

impl BinSpec {
    /// Bin of a configuration: the angle of the sensor around the object
    /// and the heading of the object relative to the sensor.
    pub fn bin_of(&self, config: &ContactConfig) -> usize {
        let s = config.sensor_in_object();
        let angle = s.y.atan2(s.x).rem_euclid(TAU);
        let a = ((angle / TAU * self.n_pos as f64) as usize).min(self.n_pos - 1);
        let o = ((config.relative.theta / TAU * self.n_ori as f64) as usize).min(self.n_ori - 1);
        a * self.n_ori + o
    }
}

/// Planar object-pose workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub theta_max: f64,
}

impl Workspace {
    pub fn with_theta_max(theta_max: f64) -> Self {
        Self { x: (0.2, 0.6), y: (-0.3, 0.3), theta_max }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Pose2 {
        Pose2::new(rng.random_range(self.x.0..self.x.1), rng.random_range(self.y.0..self.y.1), rng.random_range(0.0..self.theta_max))
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x.0 + self.x.1) / 2.0, (self.y.0 + self.y.1) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_records: usize,
    pub bins: BinSpec,
    pub workspace: Workspace,
    /// Sensor positions are drawn uniformly in a disc of this radius around
    /// the object before projection (m).
    pub sensor_radius: f64,
    pub sensor: SensorParams,
    /// Draw budget as a multiple of `n_records`.
    pub budget_factor: usize,
}

impl DatasetConfig {
    pub fn new(n_records: usize, workspace: Workspace, sensor_radius: f64) -> Self {
        Self { n_records, bins: BinSpec::default(), workspace, sensor_radius, sensor: SensorParams::default(), budget_factor: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub n_tax: usize,
    pub density: f64,
    pub seed: u64,
    pub config: DatasetConfig,
    pub draws: usize,
    pub projection_failures: usize,
    pub no_contact: usize,
    pub rejected_by_bin: usize,
    pub warning: Option<String>,
    /// Object id, config hash and other caller provenance.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    /// Object pose in the sensor frame.
    pub relative: Pose2,
    pub obs: Observation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactDataset {
    pub records: Vec<ContactRecord>,
    pub meta: DatasetMeta,
}

enum Draw {
    Failed,
    NoContact,
    Kept(ContactRecord, usize),
}

fn draw_candidate(model: &ContactModel, cfg: &DatasetConfig, seed: u64, index: u64) -> Draw {
    let mut rng = rng::stream(seed, index);
    let object = cfg.workspace.sample(&mut rng);
    let r = cfg.sensor_radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..TAU);
    let sensor = Pose2::new(object.x + r * a.cos(), object.y + r * a.sin(), rng.random_range(0.0..TAU));
    let config = ContactConfig::new(object, sensor);
    let Ok(projected) = model.project(&config, Delta::training(&model.thresholds), &mut rng) else {
        return Draw::Failed;
    };
    let config = ContactConfig::new(projected, sensor);
    if !model.check(&config) {
        return Draw::Failed;
    }
    let obs = sample_observation(&config, model, &cfg.sensor, &mut rng);
    if !obs.in_contact() {
        return Draw::NoContact;
    }
    Draw::Kept(ContactRecord { relative: config.relative, obs }, cfg.bins.bin_of(&config))
}

/// Draws, projects and bins candidate contacts until `n_records` are kept or
/// the draw budget runs out. The result does not depend on the number of
/// worker threads: every draw has its own generator and binning runs in
/// draw order.
pub fn generate_dataset(model: &ContactModel, cfg: &DatasetConfig, seed: u64) -> ContactDataset {
    let budget = cfg.n_records.saturating_mul(cfg.budget_factor);
    let mut counts = vec![0usize; cfg.bins.n_pos * cfg.bins.n_ori];
    let mut records = Vec::with_capacity(cfg.n_records);
    let (mut draws, mut failures, mut no_contact, mut rejected) = (0, 0, 0, 0);
    while records.len() < cfg.n_records && draws < budget {
        let end = (draws + CHUNK).min(budget);
        let batch: Vec<Draw> = (draws..end).into_par_iter().map(|i| draw_candidate(model, cfg, seed, i as u64)).collect();
        for d in batch {
            if records.len() >= cfg.n_records {
                break;
            }
            draws += 1;
            match d {
                Draw::Failed => failures += 1,
                Draw::NoContact => no_contact += 1,
                Draw::Kept(rec, bin) if counts[bin] < cfg.bins.n_bin => {
                    counts[bin] += 1;
                    records.push(rec);
                }
                Draw::Kept(..) => rejected += 1,
            }
        }
    }
    let warning = (records.len() < cfg.n_records)
        .then(|| format!("draw budget of {budget} exhausted with {} of {} records", records.len(), cfg.n_records));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    if failures > 0 {
        log::info!("{failures} of {draws} projections failed and were discarded");
    }
    ContactDataset {
        meta: DatasetMeta {
            format_version: FORMAT_VERSION,
            n_tax: model.layout.len(),
            density: model.layout.density,
            seed,
            config: cfg.clone(),
            draws,
            projection_failures: failures,
            no_contact,
            rejected_by_bin: rejected,
            warning,
            provenance: serde_json::Value::Null,
        },
        records,
    }
}

impl ContactDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let n_tax = self.meta.n_tax;
        let mut buf = Vec::with_capacity(self.records.len() * (24 + 4 * n_tax) + 20);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(n_tax as u32).to_le_bytes());
        for r in &self.records {
            for v in r.relative.as_array() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            assert_eq!(r.obs.len(), n_tax, "record length differs from the layout");
            for v in r.obs.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::File::create(path).and_then(|mut f| f.write_all(&buf)).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        let side = Self::sidecar_path(path);
        std::fs::write(&side, serde_json::to_string_pretty(&self.meta).expect("metadata serializes"))
            .map_err(|source| DatasetError::Io { path: side, source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let side = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|source| DatasetError::Io { path: side.clone(), source })?;
        let meta: DatasetMeta = serde_json::from_str(&text).map_err(|source| DatasetError::Meta { path: side, source })?;
        let mut raw = Vec::new();
        std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        let bad = |reason: String| DatasetError::Format { path: path.to_path_buf(), reason };
        if raw.len() < 20 || &raw[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u32::from_le_bytes(raw[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(raw[8..16].try_into().unwrap()) as usize;
        let n_tax = u32::from_le_bytes(raw[16..20].try_into().unwrap()) as usize;
        let stride = 24 + 4 * n_tax;
        if n_tax != meta.n_tax || raw.len() != 20 + n * stride {
            return Err(bad("size does not match the header".into()));
        }
        let records = raw[20..]
            .chunks_exact(stride)
            .map(|c| {
                let f = |i: usize| f64::from_le_bytes(c[8 * i..8 * i + 8].try_into().unwrap());
                let obs = c[24..].chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
                ContactRecord { relative: Pose2::new(f(0), f(1), f(2)), obs: Observation(obs) }
            })
            .collect();
        Ok(Self { records, meta })
    }
}
