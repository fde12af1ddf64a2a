//! End-to-end pipelines: artifact management, sample-quality evaluation,
//! static estimation, push tracking, ablations and reports.
//!
//! Artifacts live under the configured output directory and are keyed by
//! a hash of exactly the configuration that produced them, so changing a
//! filter parameter never invalidates a trained model while changing the
//! taxel density does.

mod artifacts;
mod contacts;
pub mod ablation;
pub mod pushing;
pub mod report;
pub mod samples;
pub mod tracking;

pub use artifacts::{ArtifactStore, ObjectContext, Provenance};
pub use contacts::{random_contact, RandomContact};

use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::diffusion::{CheckpointError, DatasetError, TrainError};
use crate::filter::FilterError;
use crate::mesh::MeshError;
use crate::objects::ObjectError;
use crate::sdf::SdfError;
use crate::tactile::TactileError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing {what} at {path}; create it with `{hint}`")]
    MissingArtifact { what: &'static str, path: PathBuf, hint: String },
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sdf(#[from] SdfError),
    #[error(transparent)]
    Tactile(#[from] TactileError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Failed(String),
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| ExperimentError::Io { path, source }
    }
}
