//! The inverse sensor model: contact datasets, the conditional
//! noise-prediction network, its training, and DDIM sampling followed by
//! projection onto the contact manifold.

pub mod dataset;
pub mod inference;
pub mod model;
pub mod network;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use dataset::{generate_dataset, DatasetError, DatasetMeta, BinSpec, ContactDataset, ContactRecord, DatasetConfig, Workspace};
pub use inference::{enforce_constraints, sample_hypotheses, EnforceReport};
pub use model::{CheckpointError, Denoiser, PoseNormalizer};
pub use sampler::{ddim_sample, DdimConfig};
pub use schedule::NoiseSchedule;
pub use train::{train_denoiser, TrainError, LossWeighting, TrainConfig, TrainReport};
