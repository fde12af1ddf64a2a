//! Taxel-density and sample-count ablations of single-contact hypothesis
//! quality.

use serde::{Deserialize, Serialize};

use super::artifacts::{ArtifactStore, ObjectContext};
use super::samples::{eval_samples, MethodScores};
use super::ExperimentError;
use crate::config::{ExperimentConfig, ProposerKind};

/// One cell of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub density: f64,
    pub method: ProposerKind,
    pub n_samples: usize,
    pub avg_loglik: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl AblationRow {
    fn new(density: f64, s: &MethodScores) -> Self {
        Self {
            density,
            method: s.method,
            n_samples: s.n_samples,
            avg_loglik: s.avg_loglik,
            median: s.map_summary.median,
            q1: s.map_summary.q1,
            q3: s.map_summary.q3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub object: String,
    pub config_hash: String,
    pub seed: u64,
    /// Every density at the configured sample count.
    pub by_density: Vec<AblationRow>,
    /// Every sample count at the configured density.
    pub by_count: Vec<AblationRow>,
    /// Checkpoints that were missing; their learned-model rows are absent.
    pub gaps: Vec<String>,
}

const METHODS: [ProposerKind; 3] = [ProposerKind::Ddim, ProposerKind::DdimNoSdf, ProposerKind::Sdf];

/// Evaluates every configured density with existing checkpoints. Missing
/// checkpoints are listed in `gaps` instead of failing the run; the
/// baseline rows are still produced for those densities.
pub fn run_ablations(cfg: &ExperimentConfig, store: &ArtifactStore) -> Result<AblationReport, ExperimentError> {
    let e = &cfg.experiment;
    let mut by_density = Vec::new();
    let mut by_count = Vec::new();
    let mut gaps = Vec::new();
    let mut object = String::new();
    let mut densities = e.densities.clone();
    if !densities.iter().any(|&d| d == cfg.sensor.density) {
        densities.push(cfg.sensor.density);
    }
    for &density in &densities {
        let mut c = cfg.clone();
        c.sensor.density = density;
        let ctx = ObjectContext::prepare(&c, store)?;
        object = ctx.spec.slug();
        let model = match store.load_model(&c) {
            Ok(m) => Some(m),
            Err(err @ ExperimentError::MissingArtifact { .. }) => {
                log::warn!("{err}");
                gaps.push(err.to_string());
                None
            }
            Err(err) => return Err(err),
        };
        let methods: Vec<ProposerKind> = METHODS.iter().copied().filter(|m| model.is_some() || !m.needs_model()).collect();
        if e.densities.contains(&density) {
            let rep = eval_samples(&ctx, &c, model.as_ref(), &methods, &[e.n_samples])?;
            by_density.extend(rep.methods.iter().map(|s| AblationRow::new(density, s)));
        }
        if density == cfg.sensor.density {
            let rep = eval_samples(&ctx, &c, model.as_ref(), &methods, &e.sample_counts)?;
            by_count.extend(rep.methods.iter().map(|s| AblationRow::new(density, s)));
        }
    }
    Ok(AblationReport { object, config_hash: cfg.hash(), seed: e.seed, by_density, by_count, gaps })
}
