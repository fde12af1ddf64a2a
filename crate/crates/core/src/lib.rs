//! Planar tactile object pose estimation.
//!
//! The crate trains a conditional denoising-diffusion model that maps the
//! response of a cylindrical distributed tactile sensor to object pose
//! hypotheses, entirely from simulated contacts, and feeds those hypotheses
//! into a particle filter with belief-informed injection.
//!
//! The building blocks, bottom-up:
//!
//! - [`mesh`] and [`sdf`]: triangle meshes, voxelized signed distance fields.
//! - [`pose`] and [`contact`]: planar poses, the sensor geometry and SDF
//!   projection onto the contact manifold.
//! - [`tactile`]: taxel layouts, the distance-based observation model and
//!   the filter likelihood.
//! - [`diffusion`]: dataset generation, the noise-prediction network,
//!   training and DDIM sampling.
//! - [`filter`] and [`baselines`]: belief tracking, hypothesis injection and
//!   the local-sampling / force-torque baselines.
//! - [`metrics`], [`objects`], [`config`], [`experiments`]: evaluation and
//!   end-to-end experiment pipelines.

pub mod baselines;
pub mod config;
pub mod contact;
pub mod diffusion;
pub mod experiments;
pub mod filter;
pub mod mesh;
pub mod metrics;
pub mod objects;
pub mod pose;
pub mod push;
pub mod rng;
pub mod sdf;
pub mod tactile;

pub use contact::{ContactConfig, ContactModel, ContactThresholds, EndEffector};
pub use pose::Pose2;
pub use sdf::SdfGrid;
pub use tactile::{Observation, SensorParams, TaxelLayout};
