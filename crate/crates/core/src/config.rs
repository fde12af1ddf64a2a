//! Experiment configuration.
//!
//! One TOML file describes a run. Its sections follow the parameter groups
//! of the method: `[sensor]` (geometry, noise and contact thresholds),
//! `[filter]` (particle filter and likelihood), `[workspace]`, `[baseline]`
//! (local sampling), `[diffusion]` (dataset, training, DDIM), `[pusher]`
//! and `[experiment]` (seeds, counts, output). Every key has a default, so
//! an empty file is valid; unknown keys are rejected.
//!
//! The resolved configuration (defaults filled in, environment overrides
//! applied) is hashed and the hash is written into every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::LocalSamplerConfig;
use crate::contact::{ContactThresholds, EndEffector};
use crate::diffusion::{BinSpec, DdimConfig, TrainConfig, Workspace};
use crate::filter::FilterConfig;
use crate::objects::{self, ObjectSpec};
use crate::push::PusherParams;
use crate::tactile::SensorParams;

/// Overrides the master seed.
pub const ENV_SEED: &str = "TACTILE_POSE_SEED";
/// Overrides the output directory.
pub const ENV_OUT_DIR: &str = "TACTILE_POSE_OUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error(transparent)]
    Object(#[from] objects::ObjectError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectSection {
    /// Registry key: id, slug or name.
    pub id: String,
    /// Mesh file replacing the built-in stand-in.
    pub mesh: Option<PathBuf>,
    /// SDF nodes per axis.
    pub grid_resolution: usize,
    /// Overrides the registry's end-effector height.
    pub z_ee: Option<f64>,
}

impl Default for ObjectSection {
    fn default() -> Self {
        Self { id: "035".into(), mesh: None, grid_resolution: 128, z_ee: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    /// Taxels per cm² of sensor skin.
    pub density: f64,
    pub radius: f64,
    pub length: f64,
    pub sensing_height: f64,
    pub axis_samples: usize,
    pub noise: SensorParams,
    pub thresholds: ContactThresholds,
}

impl Default for SensorSection {
    fn default() -> Self {
        let ee = EndEffector::default();
        Self {
            density: 1.56,
            radius: ee.radius,
            length: ee.length,
            sensing_height: ee.sensing_height,
            axis_samples: ee.axis_samples,
            noise: SensorParams::default(),
            thresholds: ContactThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceSection {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Default for WorkspaceSection {
    fn default() -> Self {
        let w = Workspace::with_theta_max(std::f64::consts::TAU);
        Self { x: w.x, y: w.y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub local: LocalSamplerConfig,
    /// Activation threshold of the force-torque reduction.
    pub ft_zeta: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { local: LocalSamplerConfig::default(), ft_zeta: SensorParams::default().zeta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    /// Number of training records N_d.
    pub dataset_size: usize,
    /// Radius of the disc around the object in which sensor positions are
    /// drawn before projection. Unset means half the object diameter plus
    /// the sensor radius.
    pub sensor_radius: Option<f64>,
    pub bins: BinSpec,
    pub budget_factor: usize,
    pub train: TrainConfig,
    pub ddim: DdimConfig,
    /// Enforce the contact constraint on generated hypotheses.
    pub project: bool,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self {
            dataset_size: 20_000,
            sensor_radius: None,
            bins: BinSpec::default(),
            budget_factor: 20,
            train: TrainConfig::default(),
            ddim: DdimConfig::default(),
            project: true,
        }
    }
}

/// Hypothesis source inside the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProposerKind {
    /// Learned inverse model with constraint projection.
    Ddim,
    /// Learned inverse model, raw samples.
    DdimNoSdf,
    /// Local sampling around the belief.
    Sdf,
    /// Local sampling scored by the force-torque reduction.
    SdfFt,
}

impl ProposerKind {
    pub fn label(self) -> &'static str {
        match self {
            ProposerKind::Ddim => "ddim",
            ProposerKind::DdimNoSdf => "ddim-no-sdf",
            ProposerKind::Sdf => "sdf",
            ProposerKind::SdfFt => "sdf-ft",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, ProposerKind::Ddim | ProposerKind::DdimNoSdf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Proposers compared by the estimation runs.
    pub proposers: Vec<ProposerKind>,
    /// Static estimation: episodes and contacts per episode.
    pub episodes: usize,
    pub contacts: usize,
    /// Sample-quality evaluation: ground-truth contacts and samples each.
    pub n_ground_truth: usize,
    pub n_samples: usize,
    /// Pushing: scripted recordings, filter reruns per recording, pushes
    /// per recording, push length beyond first touch (m) and sensor travel
    /// per filter step (m).
    pub pushes: usize,
    pub reruns: usize,
    pub push_segments: usize,
    pub push_length: f64,
    pub push_step: f64,
    /// Ablation grids.
    pub densities: Vec<f64>,
    pub sample_counts: Vec<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            proposers: vec![ProposerKind::Ddim, ProposerKind::Sdf, ProposerKind::SdfFt],
            episodes: 100,
            contacts: 6,
            n_ground_truth: 100,
            n_samples: 100,
            pushes: 8,
            reruns: 5,
            push_segments: 3,
            push_length: 0.06,
            push_step: 0.005,
            densities: vec![0.29, 0.79, 1.56, 2.30],
            sample_counts: vec![1, 10, 100, 1000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub object: ObjectSection,
    pub sensor: SensorSection,
    pub filter: FilterConfig,
    pub workspace: WorkspaceSection,
    pub baseline: BaselineSection,
    pub diffusion: DiffusionSection,
    pub pusher: PusherParams,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), source: Box::new(e) })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text, path)
    }

    /// Defaults for one object.
    pub fn for_object(id: &str) -> Self {
        let mut c = Self::default();
        c.object.id = id.to_string();
        c
    }

    /// Applies the seed and output-directory environment overrides.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_overrides(std::env::var(ENV_SEED).ok().as_deref(), std::env::var_os(ENV_OUT_DIR).map(PathBuf::from))
    }

    pub fn apply_overrides(&mut self, seed: Option<&str>, out_dir: Option<PathBuf>) -> Result<(), ConfigError> {
        if let Some(s) = seed {
            self.experiment.seed = s
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid { key: ENV_SEED.into(), reason: format!("'{s}' is not an unsigned integer") })?;
        }
        if let Some(d) = out_dir {
            self.experiment.output_dir = d;
        }
        Ok(())
    }

    /// The registry entry, with the configured mesh and height applied.
    pub fn object_spec(&self) -> Result<ObjectSpec, ConfigError> {
        let mut spec = objects::lookup(&self.object.id)?;
        if let Some(m) = &self.object.mesh {
            spec = spec.with_mesh_path(m);
        }
        if let Some(z) = self.object.z_ee {
            spec.z_ee = z;
        }
        Ok(spec)
    }

    pub fn end_effector(&self, spec: &ObjectSpec) -> EndEffector {
        EndEffector {
            radius: self.sensor.radius,
            length: self.sensor.length,
            sensing_height: self.sensor.sensing_height,
            z_ee: spec.z_ee,
            axis_samples: self.sensor.axis_samples,
        }
    }

    pub fn workspace(&self, spec: &ObjectSpec) -> Workspace {
        Workspace { x: self.workspace.x, y: self.workspace.y, theta_max: spec.theta_max() }
    }

    /// Filter parameters with the heading period of the object.
    pub fn filter_config(&self, spec: &ObjectSpec) -> FilterConfig {
        FilterConfig { theta_period: spec.theta_period(), ..self.filter.clone() }
    }

    pub fn sensor_radius(&self, spec: &ObjectSpec) -> f64 {
        self.diffusion.sensor_radius.unwrap_or(spec.d_obj / 2.0 + self.sensor.radius)
    }

    /// Checks value ranges that the types cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| Err(ConfigError::Invalid { key: key.into(), reason: reason.into() });
        let s = &self.sensor;
        if !(s.density > 0.0) {
            return bad("sensor.density", "must be positive");
        }
        if !(s.radius > 0.0 && s.length > 0.0 && s.sensing_height > 0.0 && s.sensing_height <= s.length) {
            return bad("sensor", "need positive radius and length and 0 < sensing_height ≤ length");
        }
        if s.thresholds.delta_pen > s.thresholds.delta_max {
            return bad("sensor.thresholds", "delta_pen must not exceed delta_max");
        }
        let f = &self.filter;
        if f.n_particles == 0 {
            return bad("filter.n_particles", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&f.ess_fraction) {
            return bad("filter.ess_fraction", "must lie in [0, 1]");
        }
        if !(f.h_min > 0.0 && f.h_min <= f.h_max) {
            return bad("filter.h_min", "need 0 < h_min ≤ h_max");
        }
        if f.k_neighbors == 0 {
            return bad("filter.k_neighbors", "must be at least 1");
        }
        if self.workspace.x.0 >= self.workspace.x.1 || self.workspace.y.0 >= self.workspace.y.1 {
            return bad("workspace", "empty range");
        }
        let d = &self.diffusion;
        if d.dataset_size == 0 || d.train.batch_size == 0 {
            return bad("diffusion", "dataset_size and batch_size must be positive");
        }
        if d.ddim.steps == 0 || d.ddim.steps > d.train.schedule.steps() {
            return bad("diffusion.ddim.steps", "need 1 ≤ S ≤ T");
        }
        if !(0.0..=1.0).contains(&d.ddim.eta) {
            return bad("diffusion.ddim.eta", "must lie in [0, 1]");
        }
        if self.object.grid_resolution < 2 {
            return bad("object.grid_resolution", "needs at least 2 nodes per axis");
        }
        if !(self.experiment.push_step > 0.0 && self.experiment.push_length >= 0.0) {
            return bad("experiment.push_step", "need a positive step and a non-negative length");
        }
        if !(0.0..1.0).contains(&self.pusher.mismatch) {
            return bad("pusher.mismatch", "must lie in [0, 1)");
        }
        if self.experiment.densities.iter().any(|&v| !(v > 0.0)) {
            return bad("experiment.densities", "must be positive");
        }
        self.object_spec()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical JSON form, as 16 hex digits.
    pub fn hash(&self) -> String {
        hash_value(self)
    }
}

/// Short SHA-256 digest of any serializable value's JSON form.
pub fn hash_value<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Fixed-point label of a density for file names, e.g. `1.56` → `d156`.
pub fn density_label(density: f64) -> String {
    format!("d{:03}", (density * 100.0).round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c = ExperimentConfig::from_toml_str("", Path::new("x.toml")).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_partial_sections() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, c);
        let text = "[object]\nid = \"mug\"\n[filter]\nn_particles = 100\n[diffusion.ddim]\neta = 0.0\n";
        let p = ExperimentConfig::from_toml_str(text, Path::new("x")).unwrap();
        assert_eq!(p.filter.n_particles, 100);
        assert_eq!(p.filter.n_inject, FilterConfig::default().n_inject);
        assert_eq!(p.diffusion.ddim.steps, 80);
        assert_eq!(p.object_spec().unwrap().id, "025");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_toml_str("[filter]\nn_particle = 3\n", Path::new("x")).unwrap_err();
        assert!(e.to_string().contains("n_particle"), "{e}");
        assert!(ExperimentConfig::from_toml_str("[filter]\ntheta_period = 3.0\n", Path::new("x")).is_err());
    }

    #[test]
    fn validation_names_the_key() {
        let mut c = ExperimentConfig::default();
        c.diffusion.ddim.steps = 101;
        match c.validate() {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "diffusion.ddim.steps"),
            other => panic!("{other:?}"),
        }
        c = ExperimentConfig::for_object("nope");
        assert!(matches!(c.validate(), Err(ConfigError::Object(_))));
    }

    #[test]
    fn overrides_and_hash() {
        let mut c = ExperimentConfig::default();
        let h0 = c.hash();
        assert_eq!(h0.len(), 16);
        assert_eq!(h0, ExperimentConfig::default().hash());
        c.apply_overrides(Some("42"), Some("/tmp/o".into())).unwrap();
        assert_eq!(c.experiment.seed, 42);
        assert_eq!(c.experiment.output_dir, PathBuf::from("/tmp/o"));
        assert_ne!(c.hash(), h0);
        assert!(c.apply_overrides(Some("x"), None).is_err());
    }

    #[test]
    fn derived_parameters_follow_the_object() {
        let c = ExperimentConfig::for_object("mustard");
        let spec = c.object_spec().unwrap();
        assert_eq!(c.filter_config(&spec).theta_period, std::f64::consts::PI);
        assert_eq!(c.workspace(&spec).theta_max, std::f64::consts::PI);
        assert_eq!(c.end_effector(&spec).z_ee, 0.20);
        assert_eq!(density_label(1.56), "d156");
        assert_eq!(density_label(0.29), "d029");
    }
}
