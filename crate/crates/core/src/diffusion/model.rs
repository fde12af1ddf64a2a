//! The conditional denoiser: network, pose normalization and checkpoints.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{Mlp, MlpShape, Real};
use super::sampler::{ddim_sample, DdimConfig, NoisePredictor};
use super::schedule::{timestep_embedding, NoiseSchedule};
use crate::pose::{wrap_to_pi, Pose2};
use crate::tactile::Observation;

const MAGIC: &[u8; 4] = b"TPDN";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} is not a denoiser checkpoint: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("metadata of {path}: {source}")]
    Meta { path: PathBuf, source: serde_json::Error },
}

/// Maps sensor-frame poses to network coordinates: positions divided by a
/// fixed range, heading taken in `(−π, π]` and divided by π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseNormalizer {
    pub position_scale: f64,
}

impl Default for PoseNormalizer {
    fn default() -> Self {
        Self { position_scale: 0.4 }
    }
}

impl PoseNormalizer {
    pub fn normalize(&self, p: &Pose2) -> [f64; 3] {
        [p.x / self.position_scale, p.y / self.position_scale, wrap_to_pi(p.theta) / PI]
    }

    pub fn denormalize(&self, v: &[f64; 3]) -> Pose2 {
        Pose2::new(v[0] * self.position_scale, v[1] * self.position_scale, v[2] * PI)
    }
}

/// Everything stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    pub shape: MlpShape,
    pub embed_dim: usize,
    pub schedule: NoiseSchedule,
    pub normalizer: PoseNormalizer,
    /// Free-form provenance: training config, dataset metadata, config hash, seed.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub net: Mlp<f32>,
    pub schedule: NoiseSchedule,
    pub normalizer: PoseNormalizer,
    pub embed_dim: usize,
    pub provenance: serde_json::Value,
}

/// Non-zero taxels of an observation as sparse network input.
pub fn sparse_observation<R: Real>(obs: &Observation) -> Vec<(u32, R)> {
    obs.values().iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i as u32, R::from_f64(v as f64))).collect()
}

impl Denoiser {
    pub fn shape_for(n_tax: usize, hidden: usize, depth: usize, embed_dim: usize) -> MlpShape {
        MlpShape { dense_in: 3 + embed_dim, sparse_in: n_tax, hidden, depth, out: 3 }
    }

    pub fn new<R: Rng + ?Sized>(shape: MlpShape, schedule: NoiseSchedule, normalizer: PoseNormalizer, rng: &mut R) -> Self {
        Self { net: Mlp::new(shape, rng), schedule, normalizer, embed_dim: shape.dense_in - 3, provenance: serde_json::Value::Null }
    }

    pub fn n_tax(&self) -> usize {
        self.net.shape().sparse_in
    }

    /// Writes the dense input row `[x, emb(t)]`.
    pub fn dense_row<R: Real>(&self, x: &[f64], t: usize, out: &mut [R]) {
        let mut emb = vec![0.0; self.embed_dim];
        timestep_embedding(t, self.schedule.steps(), self.embed_dim, &mut emb);
        for (o, v) in out.iter_mut().zip(x.iter().take(3).chain(&emb)) {
            *o = R::from_f64(*v);
        }
    }

    /// Draws `n` hypotheses in network coordinates.
    pub fn sample_normalized<R: Rng + ?Sized>(&self, obs: &Observation, n: usize, cfg: &DdimConfig, rng: &mut R) -> Vec<[f64; 3]> {
        let ctx = self.context(obs);
        ddim_sample(self, &ctx, &self.schedule, cfg, n, rng)
    }

    /// Draws `n` object poses in the sensor frame.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &Observation, n: usize, cfg: &DdimConfig, rng: &mut R) -> Vec<Pose2> {
        self.sample_normalized(obs, n, cfg, rng).iter().map(|v| self.normalizer.denormalize(v)).collect()
    }

    pub fn context(&self, obs: &Observation) -> DenoiserContext {
        DenoiserContext { offset: self.net.sparse_bias(&sparse_observation::<f32>(obs)) }
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            format_version: FORMAT_VERSION,
            shape: self.net.shape(),
            embed_dim: self.embed_dim,
            schedule: self.schedule.clone(),
            normalizer: self.normalizer,
            provenance: self.provenance.clone(),
        }
    }

    /// Sidecar path used for a checkpoint: same name with `.json`.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
        let mut buf = Vec::with_capacity(self.net.params.len() * 4 + 64);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.net.params.len() as u64).to_le_bytes());
        for p in &self.net.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::File::create(path).and_then(|mut f| f.write_all(&buf)).map_err(io)?;
        let side = Self::sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.meta()).expect("metadata serializes");
        std::fs::write(&side, json).map_err(|source| CheckpointError::Io { path: side, source })?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let side = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|source| CheckpointError::Io { path: side.clone(), source })?;
        let meta: ModelMeta = serde_json::from_str(&text).map_err(|source| CheckpointError::Meta { path: side, source })?;
        let mut raw = Vec::new();
        std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
        let bad = |reason: &str| CheckpointError::Format { path: path.to_path_buf(), reason: reason.to_string() };
        if raw.len() < 16 || &raw[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(raw[4..8].try_into().unwrap());
        if version != FORMAT_VERSION || meta.format_version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(raw[8..16].try_into().unwrap()) as usize;
        if n != meta.shape.num_params() || raw.len() != 16 + 4 * n {
            return Err(bad("parameter count does not match the metadata"));
        }
        let params = raw[16..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(Self {
            net: Mlp::from_params(meta.shape, params),
            schedule: meta.schedule,
            normalizer: meta.normalizer,
            embed_dim: meta.embed_dim,
            provenance: meta.provenance,
        })
    }
}

/// First-layer offset from the observation, shared by every chain.
pub struct DenoiserContext {
    offset: Vec<f32>,
}

impl NoisePredictor for Denoiser {
    type Context = DenoiserContext;

    fn predict(&self, ctx: &DenoiserContext, x: &[f64], t: usize, out: &mut [f64]) {
        let n = x.len() / 3;
        let d = self.net.shape().dense_in;
        let mut row = vec![0.0f32; d];
        self.dense_row(&[0.0, 0.0, 0.0], t, &mut row);
        let mut dense = Vec::with_capacity(n * d);
        for c in x.chunks_exact(3) {
            row[0] = c[0] as f32;
            row[1] = c[1] as f32;
            row[2] = c[2] as f32;
            dense.extend_from_slice(&row);
        }
        let acts = self.net.forward_shared(n, &dense, &ctx.offset);
        for (o, &v) in out.iter_mut().zip(&acts.output) {
            *o = v as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizer_roundtrip() {
        let n = PoseNormalizer::default();
        let p = Pose2::new(0.1, -0.2, 4.0);
        let v = n.normalize(&p);
        assert!(v[2] < 0.0 && v[2] > -1.0);
        let q = n.denormalize(&v);
        assert!((q.x - p.x).abs() < 1e-15 && (q.theta - p.theta).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = crate::rng::seeded(2);
        let d = Denoiser::new(Denoiser::shape_for(20, 16, 3, 16), NoiseSchedule::default(), PoseNormalizer::default(), &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        d.save(&path).unwrap();
        assert_eq!(Denoiser::load(&path).unwrap(), d);
        std::fs::write(&path, b"nope").unwrap();
        assert!(matches!(Denoiser::load(&path), Err(CheckpointError::Format { .. })));
    }

    #[test]
    fn eta_zero_sampling_repeats() {
        let mut rng = crate::rng::seeded(2);
        let d = Denoiser::new(Denoiser::shape_for(20, 16, 3, 16), NoiseSchedule::default(), PoseNormalizer::default(), &mut rng);
        let obs = Observation((0..20).map(|i| if i % 3 == 0 { 0.5 } else { 0.0 }).collect());
        let cfg = DdimConfig { steps: 10, eta: 0.0 };
        let a = d.sample(&obs, 5, &cfg, &mut crate::rng::seeded(7));
        let b = d.sample(&obs, 5, &cfg, &mut crate::rng::seeded(7));
        assert_eq!(a, b);
    }
}
