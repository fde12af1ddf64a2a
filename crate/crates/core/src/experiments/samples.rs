//! Single-contact hypothesis quality: average log-likelihood of the ground
//! truth observation and accuracy of the MAP hypothesis.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::ObjectContext;
use super::contacts::random_contact;
use super::ExperimentError;
use crate::baselines::local_samples;
use crate::config::{ExperimentConfig, ProposerKind};
use crate::diffusion::{sample_hypotheses, Denoiser};
use crate::filter::{normalize_log_weights, Belief, ObservationModel};
use crate::metrics::{avg_loglik, map_hypothesis, summarize, GroundTruthContact, Summary};
use crate::pose::Pose2;
use crate::rng;

/// Scores of one hypothesis source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: ProposerKind,
    pub n_samples: usize,
    pub avg_loglik: f64,
    /// Normalized ADD / ADD-S of the MAP hypothesis, one per ground truth.
    pub map_errors: Vec<f64>,
    pub map_summary: Summary,
    /// Mean wall time per ground-truth contact (ms).
    pub ms_per_contact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvalReport {
    pub object: String,
    pub density: f64,
    pub n_ground_truth: usize,
    pub config_hash: String,
    pub seed: u64,
    pub methods: Vec<MethodScores>,
}

impl SampleEvalReport {
    pub fn get(&self, method: ProposerKind, n_samples: usize) -> Option<&MethodScores> {
        self.methods.iter().find(|m| m.method == method && m.n_samples == n_samples)
    }
}

/// `n` ground-truth contacts: uniform object poses, uniform approach
/// directions. Case `i` depends only on the seed and `i`.
pub fn ground_truth_cases(ctx: &ObjectContext, cfg: &ExperimentConfig, n: usize, seed: u64) -> Vec<GroundTruthContact> {
    let ws = cfg.workspace(&ctx.spec);
    let reach = cfg.sensor_radius(&ctx.spec);
    let base = rng::derive_seed(seed, 0x6774);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(base, i as u64);
            loop {
                let object = ws.sample(&mut r);
                if let Some(c) = random_contact(&ctx.model, object, reach, &cfg.sensor.noise, &mut r) {
                    return c;
                }
            }
        })
        .collect()
}

/// Draws `n` hypotheses (sensor frame) for one ground-truth contact.
///
/// The local-sampling baseline has no generative model: it starts from a
/// uniform prior over the workspace, weights it by the observation and
/// runs one round of perturb-and-project, as at the first contact of an
/// estimation run.
pub fn draw_hypotheses(
    method: ProposerKind,
    ctx: &ObjectContext,
    cfg: &ExperimentConfig,
    denoiser: Option<&Denoiser>,
    case: &GroundTruthContact,
    n: usize,
    rng: &mut rng::Rng,
) -> Result<Vec<Pose2>, ExperimentError> {
    match method {
        ProposerKind::Ddim | ProposerKind::DdimNoSdf => {
            let d = denoiser.ok_or_else(|| ExperimentError::Failed(format!("{} needs a trained model", method.label())))?;
            let project = method == ProposerKind::Ddim;
            Ok(sample_hypotheses(d, &case.obs, &ctx.model, n, &cfg.diffusion.ddim, project, rng).0)
        }
        ProposerKind::Sdf | ProposerKind::SdfFt => {
            let fc = cfg.filter_config(&ctx.spec);
            let prior = Belief::uniform(fc.n_particles, &cfg.workspace(&ctx.spec), fc.h_max, rng);
            let obs_model = observation_model(method, cfg);
            let sensor = case.config.sensor;
            let log_l = obs_model.log_likelihoods(&case.obs, &sensor, &prior.poses, &ctx.model);
            let (w, _) = normalize_log_weights(&log_l);
            let world = local_samples(&prior.poses, &w, &sensor, &ctx.model, &cfg.baseline.local, 1, n, rng);
            Ok(world.iter().map(|p| p.relative_to(&sensor)).collect())
        }
    }
}

/// Full-array likelihood, or the force-torque reduction for `SdfFt`.
pub fn observation_model(method: ProposerKind, cfg: &ExperimentConfig) -> ObservationModel {
    match method {
        ProposerKind::SdfFt => ObservationModel::ForceTorque { params: cfg.filter.likelihood, zeta: cfg.baseline.ft_zeta },
        _ => ObservationModel::Array(cfg.filter.likelihood),
    }
}

/// Scores every `(method, sample count)` pair on the same ground truth.
pub fn eval_samples(
    ctx: &ObjectContext,
    cfg: &ExperimentConfig,
    denoiser: Option<&Denoiser>,
    methods: &[ProposerKind],
    sample_counts: &[usize],
) -> Result<SampleEvalReport, ExperimentError> {
    let seed = cfg.experiment.seed;
    let cases = ground_truth_cases(ctx, cfg, cfg.experiment.n_ground_truth, seed);
    let params = cfg.filter.likelihood;
    let mut out = Vec::new();
    for &method in methods {
        for &n in sample_counts {
            let base = rng::derive_seed(rng::derive_seed(seed, method as u64 + 1), n as u64);
            let t0 = Instant::now();
            let hyps: Vec<Vec<Pose2>> = cases
                .iter()
                .enumerate()
                .map(|(i, c)| draw_hypotheses(method, ctx, cfg, denoiser, c, n, &mut rng::stream(base, i as u64)))
                .collect::<Result<_, _>>()?;
            let ms = t0.elapsed().as_secs_f64() * 1e3 / cases.len().max(1) as f64;
            let ll = avg_loglik(&cases, &ctx.model, &params, |i, _| hyps[i].clone());
            let errors: Vec<f64> = cases
                .iter()
                .zip(&hyps)
                .map(|(c, h)| match map_hypothesis(c, h, &ctx.model, &params) {
                    Some(rel) => ctx.metric.error(&c.config.sensor.compose(&rel), &c.config.object),
                    None => f64::INFINITY,
                })
                .collect();
            let map_summary = summarize(&errors).unwrap_or(Summary { n: 0, median: f64::NAN, q1: f64::NAN, q3: f64::NAN, iqr: f64::NAN, mean: f64::NAN });
            log::info!(
                "{} {} N_p={n}: avg loglik {ll:.2}, MAP median {:.4}",
                ctx.spec.slug(),
                method.label(),
                map_summary.median
            );
            out.push(MethodScores { method, n_samples: n, avg_loglik: ll, map_errors: errors, map_summary, ms_per_contact: ms });
        }
    }
    Ok(SampleEvalReport {
        object: ctx.spec.slug(),
        density: cfg.sensor.density,
        n_ground_truth: cases.len(),
        config_hash: cfg.hash(),
        seed,
        methods: out,
    })
}
