use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::config::{density_label, hash_value, ExperimentConfig};
use crate::contact::ContactModel;
use crate::diffusion::{generate_dataset, train_denoiser, ContactDataset, DatasetConfig, Denoiser, TrainReport};
use crate::mesh::TriangleMesh;
use crate::metrics::{model_points, PoseErrorMetric, MODEL_POINTS};
use crate::objects::ObjectSpec;
use crate::sdf::{build_sdf, SdfGrid};
use crate::tactile::make_cylindrical_layout;

/// Seed of the evaluation point sets; fixed so that errors are comparable
/// across runs with different master seeds.
const MODEL_POINT_SEED: u64 = 0;

/// Where an artifact came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    /// Hash of the configuration subset the artifact depends on.
    pub key: String,
    /// Hash of the full resolved configuration of the producing run.
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn new(stage: &str, key: String, cfg: &ExperimentConfig) -> Self {
        Self { stage: stage.into(), key, config_hash: cfg.hash(), seed: cfg.experiment.seed, config: cfg.clone() }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}

/// Everything needed to simulate and score contacts with one object.
#[derive(Debug, Clone)]
pub struct ObjectContext {
    pub spec: ObjectSpec,
    pub mesh: TriangleMesh,
    pub model: ContactModel,
    pub metric: PoseErrorMetric,
}

impl ObjectContext {
    /// Assembles the context around an existing grid.
    pub fn with_grid(cfg: &ExperimentConfig, grid: Arc<SdfGrid>) -> Result<Self, ExperimentError> {
        let spec = cfg.object_spec()?;
        let mesh = spec.mesh()?;
        let layout = make_cylindrical_layout(cfg.sensor.radius, cfg.sensor.sensing_height, cfg.sensor.density)?;
        let model = ContactModel::new(grid, cfg.end_effector(&spec), Arc::new(layout), cfg.sensor.thresholds);
        let metric =
            PoseErrorMetric { points: model_points(&mesh, MODEL_POINTS, MODEL_POINT_SEED), d_obj: spec.d_obj, symmetric: spec.uses_add_s() };
        Ok(Self { spec, mesh, model, metric })
    }

    /// Loads the cached grid or builds it.
    pub fn prepare(cfg: &ExperimentConfig, store: &ArtifactStore) -> Result<Self, ExperimentError> {
        let grid = store.ensure_sdf(cfg)?;
        Self::with_grid(cfg, Arc::new(grid))
    }

    pub fn dataset_config(&self, cfg: &ExperimentConfig) -> DatasetConfig {
        let d = &cfg.diffusion;
        DatasetConfig {
            n_records: d.dataset_size,
            bins: d.bins,
            workspace: cfg.workspace(&self.spec),
            sensor_radius: cfg.sensor_radius(&self.spec),
            sensor: cfg.sensor.noise,
            budget_factor: d.budget_factor,
        }
    }
}

/// File layout of cached and emitted artifacts.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    pub root: PathBuf,
}

#[derive(Serialize)]
struct SdfKey<'a> {
    id: &'a str,
    mesh: &'a Option<PathBuf>,
    center: [f64; 3],
    extent: [f64; 3],
    resolution: usize,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        Self::new(&cfg.experiment.output_dir)
    }

    fn object_dir(&self, cfg: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
        Ok(self.root.join(cfg.object_spec()?.slug()))
    }

    fn density_dir(&self, cfg: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
        Ok(self.object_dir(cfg)?.join(density_label(cfg.sensor.density)))
    }

    pub fn sdf_key(cfg: &ExperimentConfig) -> Result<String, ExperimentError> {
        let spec = cfg.object_spec()?;
        Ok(hash_value(&SdfKey {
            id: &spec.id,
            mesh: &cfg.object.mesh,
            center: spec.grid_center,
            extent: spec.grid_extent,
            resolution: cfg.object.grid_resolution,
        }))
    }

    /// Depends on the grid, the sensor, the workspace, the dataset
    /// parameters and the seed.
    pub fn data_key(cfg: &ExperimentConfig) -> Result<String, ExperimentError> {
        let d = &cfg.diffusion;
        Ok(hash_value(&(
            Self::sdf_key(cfg)?,
            &cfg.sensor,
            &cfg.workspace,
            (d.dataset_size, d.sensor_radius, d.bins, d.budget_factor),
            cfg.object.z_ee,
            cfg.experiment.seed,
        )))
    }

    pub fn model_key(cfg: &ExperimentConfig) -> Result<String, ExperimentError> {
        Ok(hash_value(&(Self::data_key(cfg)?, &cfg.diffusion.train)))
    }

    pub fn sdf_path(&self, cfg: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
        Ok(self.object_dir(cfg)?.join(format!("sdf_{}.sdfgrid", Self::sdf_key(cfg)?)))
    }

    pub fn dataset_path(&self, cfg: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
        Ok(self.density_dir(cfg)?.join(format!("data_{}.tpds", Self::data_key(cfg)?)))
    }

    pub fn model_path(&self, cfg: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
        Ok(self.density_dir(cfg)?.join(format!("model_{}.tpdn", Self::model_key(cfg)?)))
    }

    /// Output directory of one run, tagged with the config hash and seed.
    pub fn run_dir(&self, cfg: &ExperimentConfig, name: &str) -> Result<PathBuf, ExperimentError> {
        Ok(self.density_dir(cfg)?.join(format!("{name}_{}_s{}", cfg.hash(), cfg.experiment.seed)))
    }

    pub fn ensure_sdf(&self, cfg: &ExperimentConfig) -> Result<SdfGrid, ExperimentError> {
        let path = self.sdf_path(cfg)?;
        if path.exists() {
            return Ok(SdfGrid::load(&path)?);
        }
        let spec = cfg.object_spec()?;
        let grid = build_object_sdf(&spec, cfg.object.grid_resolution)?;
        create_parent(&path)?;
        grid.save(&path)?;
        Ok(grid)
    }

    pub fn generate_dataset(&self, cfg: &ExperimentConfig, ctx: &ObjectContext) -> Result<ContactDataset, ExperimentError> {
        let path = self.dataset_path(cfg)?;
        let t0 = Instant::now();
        let mut data = generate_dataset(&ctx.model, &ctx.dataset_config(cfg), cfg.experiment.seed);
        data.meta.provenance = Provenance::new("dataset", Self::data_key(cfg)?, cfg).to_json();
        log::info!("generated {} records in {:.1} s", data.len(), t0.elapsed().as_secs_f64());
        create_parent(&path)?;
        data.save(&path)?;
        Ok(data)
    }

    pub fn load_dataset(&self, cfg: &ExperimentConfig) -> Result<ContactDataset, ExperimentError> {
        let path = self.dataset_path(cfg)?;
        if !path.exists() {
            return Err(missing("dataset", path, "gen-data", cfg));
        }
        Ok(ContactDataset::load(&path)?)
    }

    pub fn train(&self, cfg: &ExperimentConfig, data: &ContactDataset) -> Result<(Denoiser, TrainReport), ExperimentError> {
        let path = self.model_path(cfg)?;
        let t0 = Instant::now();
        let (mut model, report) = train_denoiser(&data.records, &cfg.diffusion.train, cfg.experiment.seed)?;
        log::info!(
            "trained for {} epochs in {:.1} s, best validation loss {:.4} at epoch {}",
            report.history.len(),
            t0.elapsed().as_secs_f64(),
            report.best_loss,
            report.best_epoch
        );
        model.provenance = serde_json::json!({
            "artifact": Provenance::new("model", Self::model_key(cfg)?, cfg),
            "dataset": data.meta,
            "best_epoch": report.best_epoch,
            "best_loss": report.best_loss,
        });
        create_parent(&path)?;
        model.save(&path)?;
        Ok((model, report))
    }

    pub fn load_model(&self, cfg: &ExperimentConfig) -> Result<Denoiser, ExperimentError> {
        let path = self.model_path(cfg)?;
        if !path.exists() {
            return Err(missing("checkpoint", path, "train", cfg));
        }
        Ok(Denoiser::load(&path)?)
    }

    /// Loads the checkpoint, generating data and training first if needed.
    pub fn ensure_model(&self, cfg: &ExperimentConfig, ctx: &ObjectContext) -> Result<Denoiser, ExperimentError> {
        if self.model_path(cfg)?.exists() {
            return self.load_model(cfg);
        }
        let data = if self.dataset_path(cfg)?.exists() { self.load_dataset(cfg)? } else { self.generate_dataset(cfg, ctx)? };
        Ok(self.train(cfg, &data)?.0)
    }
}

/// Builds the grid over the object's registered box at `resolution` nodes
/// per axis.
pub fn build_object_sdf(spec: &ObjectSpec, resolution: usize) -> Result<SdfGrid, ExperimentError> {
    let mesh = spec.mesh()?;
    Ok(build_sdf(&mesh, spec.grid_box(), [resolution; 3])?)
}

fn missing(what: &'static str, path: PathBuf, command: &str, cfg: &ExperimentConfig) -> ExperimentError {
    let hint = format!(
        "tactile-pose {command} --object {} --density {} --seed {}",
        cfg.object.id, cfg.sensor.density, cfg.experiment.seed
    );
    ExperimentError::MissingArtifact { what, path, hint }
}

pub(crate) fn create_parent(path: &Path) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(ExperimentError::io(dir))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_separate_stages() {
        let a = ExperimentConfig::for_object("drill");
        let mut b = a.clone();
        b.filter.n_particles = 100;
        assert_eq!(ArtifactStore::model_key(&a).unwrap(), ArtifactStore::model_key(&b).unwrap());
        assert_ne!(a.hash(), b.hash());
        b.sensor.density = 0.79;
        assert_eq!(ArtifactStore::sdf_key(&a).unwrap(), ArtifactStore::sdf_key(&b).unwrap());
        assert_ne!(ArtifactStore::data_key(&a).unwrap(), ArtifactStore::data_key(&b).unwrap());
        let mut c = a.clone();
        c.diffusion.train.epochs = 10;
        assert_eq!(ArtifactStore::data_key(&a).unwrap(), ArtifactStore::data_key(&c).unwrap());
        assert_ne!(ArtifactStore::model_key(&a).unwrap(), ArtifactStore::model_key(&c).unwrap());
    }

    #[test]
    fn missing_checkpoint_names_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::new(dir.path());
        let cfg = ExperimentConfig::for_object("mug");
        let e = store.load_model(&cfg).unwrap_err();
        assert!(matches!(e, ExperimentError::MissingArtifact { .. }));
        assert!(e.to_string().contains("tactile-pose train --object mug"), "{e}");
    }
}
