//! Running the filter over a sequence of sensor poses and observations, and
//! the static-estimation experiment built on it.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::ObjectContext;
use super::contacts::random_contact;
use super::samples::observation_model;
use super::ExperimentError;
use crate::baselines::LocalSampler;
use crate::config::{ExperimentConfig, ProposerKind};
use crate::diffusion::Denoiser;
use crate::filter::{belief_estimate, predict, update, Belief, BeliefSnapshot, DdimProposer, FilterConfig, ObservationModel, Proposer, TransitionModel};
use crate::metrics::{success_count, summarize, Summary};
use crate::pose::Pose2;
use crate::rng;
use crate::tactile::{Observation, ObservationRecord};

/// One filter step: the sensor moved from `from` to `sensor` and reported
/// `obs`; `truth` is the object pose afterwards (scoring only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackStep {
    pub from: Pose2,
    pub sensor: Pose2,
    pub obs: Observation,
    pub truth: Pose2,
}

/// Result of one filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    /// Error of the averaged belief before any step, then after each step.
    pub errors: Vec<f64>,
    /// Wall time of each predict-plus-update (ms).
    pub step_ms: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<BeliefSnapshot>,
}

impl TrackResult {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("the prior error is always present")
    }
}

/// The hypothesis source for `kind`.
pub fn make_proposer(kind: ProposerKind, cfg: &ExperimentConfig, denoiser: Option<Arc<Denoiser>>) -> Result<Box<dyn Proposer>, ExperimentError> {
    Ok(match kind {
        ProposerKind::Ddim | ProposerKind::DdimNoSdf => {
            let denoiser = denoiser.ok_or_else(|| ExperimentError::Failed(format!("{} needs a trained model", kind.label())))?;
            Box::new(DdimProposer { denoiser, ddim: cfg.diffusion.ddim, project: kind == ProposerKind::Ddim })
        }
        ProposerKind::Sdf | ProposerKind::SdfFt => Box::new(LocalSampler { config: cfg.baseline.local }),
    })
}

/// Filter components shared by every run of one method.
pub struct Tracker<'a> {
    pub ctx: &'a ObjectContext,
    pub filter: FilterConfig,
    pub observation_model: ObservationModel,
    pub proposer: Box<dyn Proposer>,
    pub transition: TransitionModel,
}

impl<'a> Tracker<'a> {
    pub fn new(
        ctx: &'a ObjectContext,
        cfg: &ExperimentConfig,
        kind: ProposerKind,
        denoiser: Option<Arc<Denoiser>>,
        transition: TransitionModel,
    ) -> Result<Self, ExperimentError> {
        Ok(Self {
            ctx,
            filter: cfg.filter_config(&ctx.spec),
            observation_model: observation_model(kind, cfg),
            proposer: make_proposer(kind, cfg, denoiser)?,
            transition,
        })
    }

    /// Runs the filter from `prior` over `steps`. The first step is not
    /// preceded by a prediction.
    pub fn run(&self, prior: Belief, truth0: Pose2, steps: &[TrackStep], rng: &mut rng::Rng, keep_snapshots: bool) -> TrackResult {
        let period = self.filter.theta_period;
        let (mean0, _) = belief_estimate(&prior.poses, &prior.weights, period);
        let mut errors = vec![self.ctx.metric.error(&mean0, &truth0)];
        let mut step_ms = Vec::with_capacity(steps.len());
        let mut snapshots = Vec::new();
        let mut belief = prior;
        for (t, s) in steps.iter().enumerate() {
            let t0 = Instant::now();
            let predicted = if t == 0 { belief } else { predict(&belief, &s.from, &s.sensor, &self.transition, &self.ctx.model, rng) };
            let (next, info) = update(
                &predicted,
                &s.obs,
                &s.sensor,
                &self.ctx.model,
                &self.observation_model,
                Some(self.proposer.as_ref()),
                &self.filter,
                rng,
            );
            step_ms.push(t0.elapsed().as_secs_f64() * 1e3);
            errors.push(self.ctx.metric.error(&info.mean, &s.truth));
            if keep_snapshots {
                snapshots.push(BeliefSnapshot::new(t + 1, &next, &info));
            }
            belief = next;
        }
        TrackResult { errors, step_ms, snapshots }
    }
}

/// Runs the filter over a recorded observation log (no ground truth) and
/// returns one belief snapshot per record. Consecutive records give the
/// sensor motion for the transition model.
pub fn replay(tracker: &Tracker<'_>, prior: Belief, records: &[ObservationRecord], rng: &mut rng::Rng) -> Vec<BeliefSnapshot> {
    let mut belief = prior;
    let mut out = Vec::with_capacity(records.len());
    for (t, rec) in records.iter().enumerate() {
        let predicted = match t {
            0 => belief,
            _ => predict(&belief, &records[t - 1].u, &rec.u, &tracker.transition, &tracker.ctx.model, rng),
        };
        let (next, info) = update(
            &predicted,
            &rec.z,
            &rec.u,
            &tracker.ctx.model,
            &tracker.observation_model,
            Some(tracker.proposer.as_ref()),
            &tracker.filter,
            rng,
        );
        out.push(BeliefSnapshot::new(t + 1, &next, &info));
        belief = next;
    }
    out
}

/// One episode's ground truth: the object pose and its contacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub truth: Pose2,
    pub steps: Vec<TrackStep>,
}

/// Uniform object pose and `n` independent random touches of it. Episode
/// `index` depends only on the seed and the index.
pub fn static_episode(ctx: &ObjectContext, cfg: &ExperimentConfig, n_contacts: usize, index: usize) -> Episode {
    let mut r = rng::stream(rng::derive_seed(cfg.experiment.seed, 0x5747), index as u64);
    let ws = cfg.workspace(&ctx.spec);
    let reach = cfg.sensor_radius(&ctx.spec);
    'episode: loop {
        let truth = ws.sample(&mut r);
        let mut steps = Vec::with_capacity(n_contacts);
        for _ in 0..n_contacts {
            let Some(c) = random_contact(&ctx.model, truth, reach, &cfg.sensor.noise, &mut r) else {
                continue 'episode;
            };
            steps.push(TrackStep { from: c.config.sensor, sensor: c.config.sensor, obs: c.obs, truth });
        }
        return Episode { truth, steps };
    }
}

/// Errors of one method over all episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRuns {
    pub method: ProposerKind,
    /// `errors[episode][n]`, with `n = 0` the prior.
    pub errors: Vec<Vec<f64>>,
    /// Per contact count `n`.
    pub summaries: Vec<Summary>,
    /// Runs ending below the success threshold.
    pub successes: usize,
    pub mean_step_ms: f64,
}

impl MethodRuns {
    pub(crate) fn new(method: ProposerKind, results: &[TrackResult]) -> Self {
        let errors: Vec<Vec<f64>> = results.iter().map(|r| r.errors.clone()).collect();
        let len = errors.iter().map(Vec::len).min().unwrap_or(0);
        let summaries = (0..len)
            .filter_map(|n| summarize(&errors.iter().map(|e| e[n]).collect::<Vec<_>>()))
            .collect();
        let finals: Vec<f64> = results.iter().map(TrackResult::final_error).collect();
        let steps: Vec<f64> = results.iter().flat_map(|r| r.step_ms.iter().copied()).collect();
        let mean_step_ms = if steps.is_empty() { 0.0 } else { steps.iter().sum::<f64>() / steps.len() as f64 };
        Self { method, errors, summaries, successes: success_count(&finals), mean_step_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub scenario: String,
    pub object: String,
    pub density: f64,
    pub runs: usize,
    pub config_hash: String,
    pub seed: u64,
    pub methods: Vec<MethodRuns>,
}

impl EstimationReport {
    pub fn get(&self, method: ProposerKind) -> Option<&MethodRuns> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Filter generator for run `index`. Methods share it, so they start from
/// the same prior.
pub fn run_rng(seed: u64, index: usize) -> rng::Rng {
    rng::stream(rng::derive_seed(seed, 0x7275_6e00), index as u64)
}

/// Static estimation: every method sees the same episodes.
pub fn run_static_estimation(
    ctx: &ObjectContext,
    cfg: &ExperimentConfig,
    denoiser: Option<Arc<Denoiser>>,
) -> Result<EstimationReport, ExperimentError> {
    let e = &cfg.experiment;
    let episodes: Vec<Episode> = (0..e.episodes).into_par_iter().map(|i| static_episode(ctx, cfg, e.contacts, i)).collect();
    let ws = cfg.workspace(&ctx.spec);
    let mut methods = Vec::new();
    for &kind in &e.proposers {
        let tracker = Tracker::new(ctx, cfg, kind, denoiser.clone(), TransitionModel::Static)?;
        let t0 = Instant::now();
        let results: Vec<TrackResult> = episodes
            .par_iter()
            .enumerate()
            .map(|(i, ep)| {
                let mut r = run_rng(e.seed, i);
                let prior = Belief::uniform(tracker.filter.n_particles, &ws, tracker.filter.h_max, &mut r);
                tracker.run(prior, ep.truth, &ep.steps, &mut r, false)
            })
            .collect();
        let runs = MethodRuns::new(kind, &results);
        log::info!(
            "{} static {}: {}/{} successes in {:.1} s",
            ctx.spec.slug(),
            kind.label(),
            runs.successes,
            results.len(),
            t0.elapsed().as_secs_f64()
        );
        methods.push(runs);
    }
    Ok(EstimationReport {
        scenario: "static".into(),
        object: ctx.spec.slug(),
        density: cfg.sensor.density,
        runs: episodes.len(),
        config_hash: cfg.hash(),
        seed: e.seed,
        methods,
    })
}
