//! Particle-filter belief over the planar object pose, with belief-informed
//! injection of generated hypotheses.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{ft_log_likelihood, ft_reduce};
use crate::contact::{ContactConfig, ContactModel};
use crate::diffusion::{sample_hypotheses, DdimConfig, Denoiser, Workspace};
use crate::pose::{wrap_angle_period, wrap_diff_period, Pose2};
use crate::push::{push_object, PusherParams};
use crate::rng;
use crate::tactile::{log_likelihood, LikelihoodParams, Observation};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// Weighted particle set. Weights are normalized after every public update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub poses: Vec<Pose2>,
    pub weights: Vec<f64>,
    /// Number of contacts integrated so far.
    pub contacts: usize,
    /// Current kernel bandwidth.
    pub bandwidth: f64,
}

impl Belief {
    pub fn new(poses: Vec<Pose2>, bandwidth: f64) -> Self {
        let n = poses.len();
        Self { poses, weights: vec![1.0 / n as f64; n], contacts: 0, bandwidth }
    }

    /// `n` particles drawn uniformly over the workspace.
    pub fn uniform<R: Rng + ?Sized>(n: usize, workspace: &Workspace, bandwidth: f64, rng: &mut R) -> Self {
        Self::new((0..n).map(|_| workspace.sample(rng)).collect(), bandwidth)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// How the kernel consistency score enters an injected particle's log score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencyMode {
    /// `ℓ = log L + ℓ̃`, the score added as is.
    Additive,
    /// `ℓ = log L + log ℓ̃`: the score acts as a prior density, so a
    /// hypothesis far from every particle is discounted rather than merely
    /// missing a bonus.
    #[default]
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub n_inject: usize,
    pub ess_fraction: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub h_decay: f64,
    pub k_neighbors: usize,
    pub metric: [f64; 3],
    pub likelihood: LikelihoodParams,
    pub consistency: ConsistencyMode,
    /// Heading period of the object: π for symmetric objects, 2π otherwise.
    /// Derived from the object, never read from a config file.
    #[serde(skip, default = "full_turn")]
    pub theta_period: f64,
}

fn full_turn() -> f64 {
    std::f64::consts::TAU
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: 300,
            n_inject: 100,
            ess_fraction: 0.6,
            h_min: 0.02,
            h_max: 0.1,
            h_decay: 0.7,
            k_neighbors: 5,
            metric: [1.0, 1.0, 0.1],
            likelihood: LikelihoodParams::default(),
            consistency: ConsistencyMode::Log,
            theta_period: std::f64::consts::TAU,
        }
    }
}

/// Effective sample size `1/Σw²` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling with a single uniform offset; returns the indices
/// of the selected particles.
pub fn low_variance_resample<R: Rng + ?Sized>(weights: &[f64], n_out: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / n_out as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n_out);
    let mut i = 0;
    let mut c = weights[0];
    for _ in 0..n_out {
        while u > c && i + 1 < weights.len() {
            i += 1;
            c += weights[i];
        }
        out.push(i);
        u += step;
    }
    out
}

/// Normalizes log weights in place into probabilities. Returns `false` if
/// nothing finite was left, in which case the weights are reset to uniform.
pub fn normalize_log_weights(log_w: &[f64]) -> (Vec<f64>, bool) {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (vec![1.0 / log_w.len() as f64; log_w.len()], false);
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    (w.into_iter().map(|v| v / s).collect(), true)
}

/// Squared λ-weighted pose distance with the heading difference wrapped.
pub fn metric_distance2(a: &Pose2, b: &Pose2, metric: &[f64; 3], period: f64) -> f64 {
    let dx = metric[0] * (a.x - b.x);
    let dy = metric[1] * (a.y - b.y);
    let dt = metric[2] * wrap_diff_period(a.theta - b.theta, period);
    dx * dx + dy * dy + dt * dt
}

/// Weighted mean of Gaussian kernel values over the `k` nearest prior
/// particles. Zero-weight particles are ignored, and ties in distance go to
/// the lower index.
pub fn consistency_score(candidate: &Pose2, poses: &[Pose2], weights: &[f64], k: usize, h: f64, metric: &[f64; 3], period: f64) -> f64 {
    let mut d: Vec<(f64, usize)> = poses
        .iter()
        .zip(weights)
        .enumerate()
        .filter(|(_, (_, &w))| w > 0.0)
        .map(|(i, (p, _))| (metric_distance2(candidate, p, metric, period), i))
        .collect();
    let k = k.max(1).min(d.len());
    if k == 0 {
        return 0.0;
    }
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(d2, i) in &d[..k] {
        num += weights[i] * (-0.5 * d2 / (h * h)).exp();
        den += weights[i];
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Weighted mean pose (circular mean for the heading, respecting the
/// object's heading period) and the highest-weight particle.
pub fn belief_estimate(poses: &[Pose2], weights: &[f64], period: f64) -> (Pose2, Pose2) {
    let k = std::f64::consts::TAU / period;
    let (mut x, mut y, mut s, mut c, mut total) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut best = 0;
    for (i, (p, &w)) in poses.iter().zip(weights).enumerate() {
        x += w * p.x;
        y += w * p.y;
        s += w * (k * p.theta).sin();
        c += w * (k * p.theta).cos();
        total += w;
        if w > weights[best] {
            best = i;
        }
    }
    let theta = wrap_angle_period(s.atan2(c) / k, period);
    (Pose2::new(x / total, y / total, theta), poses[best])
}

/// How the observation is scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservationModel {
    /// Every taxel.
    Array(LikelihoodParams),
    /// The array collapsed into a single virtual contact.
    ForceTorque { params: LikelihoodParams, zeta: f64 },
}

impl ObservationModel {
    pub fn params(&self) -> &LikelihoodParams {
        match self {
            ObservationModel::Array(p) | ObservationModel::ForceTorque { params: p, .. } => p,
        }
    }

    /// Log-likelihood of `obs` for each world-frame object pose.
    pub fn log_likelihoods(&self, obs: &Observation, sensor: &Pose2, poses: &[Pose2], model: &ContactModel) -> Vec<f64> {
        match self {
            ObservationModel::Array(p) => {
                poses.par_iter().map(|x| log_likelihood(obs, &ContactConfig::new(*x, *sensor), model, p)).collect()
            }
            ObservationModel::ForceTorque { params, zeta } => {
                let reduced = ft_reduce(obs, &model.layout, *zeta);
                poses
                    .par_iter()
                    .map(|x| ft_log_likelihood(reduced.as_ref(), &ContactConfig::new(*x, *sensor), model, params))
                    .collect()
            }
        }
    }
}

/// Everything a proposer may look at.
pub struct ProposalContext<'a> {
    pub obs: &'a Observation,
    pub sensor: Pose2,
    /// Predicted particles with measurement-updated, normalized weights.
    pub poses: &'a [Pose2],
    pub weights: &'a [f64],
    pub contact_index: usize,
    pub model: &'a ContactModel,
    pub observation_model: &'a ObservationModel,
}

/// Source of candidate particles (world frame) for one contact.
pub trait Proposer: Send + Sync {
    fn name(&self) -> &'static str;
    fn propose(&self, ctx: &ProposalContext<'_>, n: usize, rng: &mut rng::Rng) -> Vec<Pose2>;
}

/// Hypotheses from the learned inverse model, optionally projected.
pub struct DdimProposer {
    pub denoiser: std::sync::Arc<Denoiser>,
    pub ddim: DdimConfig,
    pub project: bool,
}

impl Proposer for DdimProposer {
    fn name(&self) -> &'static str {
        if self.project {
            "ddim"
        } else {
            "ddim-no-sdf"
        }
    }

    fn propose(&self, ctx: &ProposalContext<'_>, n: usize, rng: &mut rng::Rng) -> Vec<Pose2> {
        let (rel, _) = sample_hypotheses(&self.denoiser, ctx.obs, ctx.model, n, &self.ddim, self.project, rng);
        rel.iter().map(|r| ctx.sensor.compose(r)).collect()
    }
}

/// Temporal model of the object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransitionModel {
    Static,
    Pusher(PusherParams),
}

/// Propagates particles through the transition model. `from`/`to` are the
/// previous and current sensor poses.
pub fn predict<R: Rng + ?Sized>(belief: &Belief, from: &Pose2, to: &Pose2, transition: &TransitionModel, model: &ContactModel, rng: &mut R) -> Belief {
    match transition {
        TransitionModel::Static => belief.clone(),
        TransitionModel::Pusher(p) => {
            let base: u64 = rng.random();
            let poses = belief
                .poses
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let out = push_object(model, *x, *from, *to, p);
                    if !out.pushed {
                        return out.pose;
                    }
                    let mut r = rng::stream(base, i as u64);
                    let nxy = Normal::new(0.0, p.noise_xy).expect("finite noise");
                    let nth = Normal::new(0.0, p.noise_theta).expect("finite noise");
                    Pose2::new(out.pose.x + nxy.sample(&mut r), out.pose.y + nxy.sample(&mut r), out.pose.theta + nth.sample(&mut r))
                })
                .collect();
            Belief { poses, ..belief.clone() }
        }
    }
}

/// Diagnostics of one filter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub injected: usize,
    pub ess: f64,
    pub resampled: bool,
    pub degenerate: bool,
    pub mean: Pose2,
    pub map: Pose2,
}

/// Weights predicted particles by the observation, adds scored proposals,
/// normalizes the union and resamples it back to `n_particles` when it
/// grew or degenerated.
pub fn update(
    predicted: &Belief,
    obs: &Observation,
    sensor: &Pose2,
    model: &ContactModel,
    observation_model: &ObservationModel,
    proposer: Option<&dyn Proposer>,
    cfg: &FilterConfig,
    rng: &mut rng::Rng,
) -> (Belief, StepInfo) {
    let log_l = observation_model.log_likelihoods(obs, sensor, &predicted.poses, model);
    // Predicted particles are put on the scale of a uniform set (mean
    // weight one), the scale on which injected hypotheses are scored.
    let scale = predicted.len() as f64;
    let mut log_w: Vec<f64> = predicted.weights.iter().zip(&log_l).map(|(w, l)| (w * scale).ln() + l).collect();
    let mut poses = predicted.poses.clone();
    let contact = obs.in_contact();
    let mut injected = 0;
    if let (true, Some(p), n) = (contact, proposer, cfg.n_inject) {
        if n > 0 {
            let (updated, _) = normalize_log_weights(&log_w);
            let ctx = ProposalContext {
                obs,
                sensor: *sensor,
                poses: &predicted.poses,
                weights: &updated,
                contact_index: predicted.contacts + 1,
                model,
                observation_model,
            };
            let cands = p.propose(&ctx, n, rng);
            let cand_l = observation_model.log_likelihoods(obs, sensor, &cands, model);
            let h = predicted.bandwidth;
            let scores: Vec<f64> = cands
                .par_iter()
                .map(|c| consistency_score(c, &predicted.poses, &predicted.weights, cfg.k_neighbors, h, &cfg.metric, cfg.theta_period))
                .collect();
            for ((c, l), s) in cands.into_iter().zip(cand_l).zip(scores) {
                let extra = match cfg.consistency {
                    ConsistencyMode::Additive => s,
                    ConsistencyMode::Log => s.ln(),
                };
                poses.push(c);
                log_w.push(l + extra);
                injected += 1;
            }
        }
    }
    let (weights, ok) = normalize_log_weights(&log_w);
    if !ok {
        log::warn!("all particle weights underflowed; resetting to uniform");
    }
    let (mean, map) = belief_estimate(&poses, &weights, cfg.theta_period);
    let e = ess(&weights);
    let size = poses.len();
    let resample = size > cfg.n_particles || e < cfg.ess_fraction * size as f64;
    let (poses, weights) = if resample {
        let idx = low_variance_resample(&weights, cfg.n_particles, rng);
        (idx.iter().map(|&i| poses[i]).collect(), vec![1.0 / cfg.n_particles as f64; cfg.n_particles])
    } else {
        (poses, weights)
    };
    let (contacts, bandwidth) = if contact {
        (predicted.contacts + 1, (predicted.bandwidth * cfg.h_decay).max(cfg.h_min))
    } else {
        (predicted.contacts, predicted.bandwidth)
    };
    let belief = Belief { poses, weights, contacts, bandwidth };
    (belief, StepInfo { injected, ess: e, resampled: resample, degenerate: !ok, mean, map })
}

/// One line of a belief log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub t: usize,
    pub particles: Vec<[f64; 4]>,
    pub estimate: Pose2,
    pub map: Pose2,
}

impl BeliefSnapshot {
    pub fn new(t: usize, belief: &Belief, info: &StepInfo) -> Self {
        Self {
            t,
            particles: belief.poses.iter().zip(&belief.weights).map(|(p, &w)| [p.x, p.y, p.theta, w]).collect(),
            estimate: info.mean,
            map: info.map,
        }
    }
}

pub fn write_snapshots(path: impl AsRef<Path>, snaps: &[BeliefSnapshot]) -> Result<(), FilterError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in snaps {
        serde_json::to_writer(&mut f, s).map_err(|e| FilterError::Io(e.into()))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_snapshots(path: impl AsRef<Path>) -> Result<Vec<BeliefSnapshot>, FilterError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| FilterError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn ess_examples() {
        assert!((ess(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((ess(&[0.0, 1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((ess(&[0.5, 0.25, 0.25]) - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lvr_examples() {
        let mut r = rng::seeded(1);
        assert_eq!(low_variance_resample(&[0.0, 1.0, 0.0], 5, &mut r), vec![1; 5]);
        let idx = low_variance_resample(&[0.2; 5], 5, &mut r);
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn lvr_is_unbiased() {
        let w = [0.05, 0.3, 0.15, 0.5];
        let n_out = 7;
        let trials = 10_000;
        let mut counts = [0.0f64; 4];
        let mut sq = [0.0f64; 4];
        let mut r = rng::seeded(3);
        for _ in 0..trials {
            let mut c = [0.0; 4];
            for i in low_variance_resample(&w, n_out, &mut r) {
                c[i] += 1.0;
            }
            for j in 0..4 {
                counts[j] += c[j];
                sq[j] += c[j] * c[j];
            }
        }
        for j in 0..4 {
            let mean = counts[j] / trials as f64;
            let var = sq[j] / trials as f64 - mean * mean;
            let se = (var / trials as f64).sqrt().max(1e-9);
            assert!((mean - n_out as f64 * w[j]).abs() < 3.0 * se + 1e-9, "{j}: {mean}");
        }
    }

    #[test]
    fn kernel_examples() {
        let m = [1.0, 1.0, 0.1];
        let p = Pose2::new(0.3, 0.1, 1.0);
        assert!((consistency_score(&p, &[p], &[1.0], 1, 0.05, &m, TAU) - 1.0).abs() < 1e-15);
        let far = Pose2::new(1.3, 0.1, 1.0);
        assert!(consistency_score(&p, &[far, far], &[0.5, 0.5], 5, 0.05, &m, TAU) < 1e-6);
        let a = Pose2::new(0.0, 0.0, 0.0);
        let b = Pose2::new(0.0, 0.0, TAU - 0.01);
        assert!((metric_distance2(&a, &b, &[1.0, 1.0, 1.0], TAU) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn estimate_examples() {
        let p = Pose2::new(0.1, 0.2, 0.3);
        assert_eq!(belief_estimate(&[p], &[1.0], TAU), (p, p));
        let a = Pose2::new(0.0, 0.0, 170f64.to_radians());
        let b = Pose2::new(1.0, 0.0, (-170f64).to_radians());
        let (m, _) = belief_estimate(&[a, b], &[0.5, 0.5], TAU);
        assert!((m.theta - PI).abs() < 1e-9);
        let (m, map) = belief_estimate(&[Pose2::new(0.0, 0.0, 0.0), Pose2::new(1.0, 0.0, 0.0)], &[0.75, 0.25], TAU);
        assert!((m.x - 0.25).abs() < 1e-12 && m.y.abs() < 1e-12);
        assert_eq!(map.x, 0.0);
    }

    #[test]
    fn symmetric_heading_mean() {
        // θ and θ + π describe the same pose of a symmetric object.
        let a = Pose2::new(0.0, 0.0, 0.1);
        let b = Pose2::new(0.0, 0.0, PI + 0.1);
        let (m, _) = belief_estimate(&[a, b], &[0.5, 0.5], PI);
        assert!((m.theta - 0.1).abs() < 1e-9);
    }

    #[test]
    fn underflow_resets_to_uniform() {
        let (w, ok) = normalize_log_weights(&[f64::NEG_INFINITY; 3]);
        assert!(!ok);
        assert_eq!(w, vec![1.0 / 3.0; 3]);
    }

    fn poses_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
        prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5, 0.0f64..TAU, 0.01f64..1.0), 1..40)
    }

    proptest! {
        #[test]
        fn normalized_weights_and_ess_bounds(logs in prop::collection::vec(-50.0f64..50.0, 1..60)) {
            let (w, _) = normalize_log_weights(&logs);
            let s: f64 = w.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            let e = ess(&w);
            prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
        }

        #[test]
        fn kernel_ignores_order_and_zero_weights(ps in poses_strategy(), k in 1usize..8, c in (-0.5f64..0.5, -0.5f64..0.5, 0.0f64..TAU)) {
            let poses: Vec<Pose2> = ps.iter().map(|p| Pose2::new(p.0, p.1, p.2)).collect();
            let w: Vec<f64> = ps.iter().map(|p| p.3).collect();
            let cand = Pose2::new(c.0, c.1, c.2);
            let m = [1.0, 1.0, 0.1];
            let base = consistency_score(&cand, &poses, &w, k, 0.1, &m, TAU);
            let mut rp = poses.clone();
            let mut rw = w.clone();
            rp.reverse();
            rw.reverse();
            rp.push(cand);
            rw.push(0.0);
            let other = consistency_score(&cand, &rp, &rw, k, 0.1, &m, TAU);
            prop_assert!((base - other).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
