//! Scripted pushing with the quasi-static pusher standing in for real
//! contact dynamics.
//!
//! A recording starts with a random touch of the resting object, like a
//! static episode, and continues with straight pushes of varying length,
//! all from roughly the same side, as when a box is shoved across a table.
//! Between pushes the sensor is lifted and placed next to the object
//! again, which the filter sees as a step without motion.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, TAU};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::artifacts::ObjectContext;
use super::contacts::random_contact;
use super::tracking::{run_rng, EstimationReport, Episode, MethodRuns, TrackResult, TrackStep, Tracker};
use super::ExperimentError;
use crate::config::ExperimentConfig;
use crate::contact::ContactConfig;
use crate::diffusion::Denoiser;
use crate::filter::{Belief, TransitionModel};
use crate::pose::Pose2;
use crate::push::push_object;
use crate::rng;
use crate::tactile::sample_observation;

/// Clearance kept between the sensor skin and the object when a push
/// starts (m).
const START_CLEARANCE: f64 = 0.01;
/// Steps spent backing away after a push.
const RETRACT_STEPS: usize = 2;
/// Lateral offset of the push line, as a fraction of the object radius.
const LATERAL: f64 = 0.4;
/// Spread of the push direction around the side chosen for a recording.
const SIDE_SPREAD: f64 = FRAC_PI_6;
/// Upper bound on approach steps before a push is abandoned.
const MAX_APPROACH: usize = 40;

/// Ground truth of recording `index`. With no push segments it is the
/// first contact of static episode `index`.
pub fn push_recording(ctx: &ObjectContext, cfg: &ExperimentConfig, index: usize) -> Episode {
    let e = &cfg.experiment;
    // Same stream as the static episodes, so the first touch coincides.
    let mut r = rng::stream(rng::derive_seed(e.seed, 0x5747), index as u64);
    let ws = cfg.workspace(&ctx.spec);
    let reach = cfg.sensor_radius(&ctx.spec);
    let (mut truth, first) = loop {
        let truth = ws.sample(&mut r);
        if let Some(c) = random_contact(&ctx.model, truth, reach, &cfg.sensor.noise, &mut r) {
            break (truth, c);
        }
    };
    let start_truth = truth;
    let mut steps = vec![TrackStep { from: first.config.sensor, sensor: first.config.sensor, obs: first.obs, truth }];
    let dynamics = cfg.pusher.perturbed(&mut r);
    let side = r.random_range(0.0..TAU);
    for _ in 0..e.push_segments {
        let a = side + r.random_range(-SIDE_SPREAD..SIDE_SPREAD);
        let length = e.push_length * r.random_range(0.5..1.5);
        let dir = (a.cos(), a.sin());
        let lateral = r.random_range(-LATERAL..LATERAL) * ctx.spec.d_obj / 2.0;
        let (px, py) = (lateral * (a + FRAC_PI_2).cos(), lateral * (a + FRAC_PI_2).sin());
        let heading = r.random_range(0.0..TAU);
        let mut start = Pose2::new(truth.x + px + dir.0 * reach, truth.y + py + dir.1 * reach, heading);
        // Slide in along the push line until the skin is close to the surface.
        for _ in 0..8 {
            let gap = ctx.model.closest_axis_point(&ContactConfig::new(truth, start)).phi - ctx.model.ee.radius;
            if gap <= START_CLEARANCE {
                break;
            }
            start = start.translated(-dir.0 * (gap - START_CLEARANCE), -dir.1 * (gap - START_CLEARANCE));
        }
        let mut emit = |from: Pose2, to: Pose2, truth: &mut Pose2, r: &mut rng::Rng| {
            *truth = push_object(&ctx.model, *truth, from, to, &dynamics).pose;
            let obs = sample_observation(&ContactConfig::new(*truth, to), &ctx.model, &cfg.sensor.noise, r);
            let touching = obs.in_contact();
            steps.push(TrackStep { from, sensor: to, obs, truth: *truth });
            touching
        };
        // The lift-and-place move is not a push.
        emit(start, start, &mut truth, &mut r);
        let mut sensor = start;
        let step = (-dir.0 * e.push_step, -dir.1 * e.push_step);
        let mut travelled = None::<f64>;
        for _ in 0..MAX_APPROACH + (length / e.push_step).ceil() as usize {
            let next = sensor.translated(step.0, step.1);
            let touching = emit(sensor, next, &mut truth, &mut r);
            sensor = next;
            match travelled.as_mut() {
                None if touching => travelled = Some(0.0),
                Some(d) => *d += e.push_step,
                None => {}
            }
            if travelled.is_some_and(|d| d + 1e-9 >= length) {
                break;
            }
        }
        for _ in 0..RETRACT_STEPS {
            let next = sensor.translated(-step.0, -step.1);
            emit(sensor, next, &mut truth, &mut r);
            sensor = next;
        }
    }
    Episode { truth: start_truth, steps }
}

/// Pushing experiment: every method reruns every recording with the same
/// generators.
pub fn run_push_tracking(ctx: &ObjectContext, cfg: &ExperimentConfig, denoiser: Option<Arc<Denoiser>>) -> Result<EstimationReport, ExperimentError> {
    let e = &cfg.experiment;
    let recordings: Vec<Episode> = (0..e.pushes).into_par_iter().map(|i| push_recording(ctx, cfg, i)).collect();
    let ws = cfg.workspace(&ctx.spec);
    let mut methods = Vec::new();
    for &kind in &e.proposers {
        let tracker = Tracker::new(ctx, cfg, kind, denoiser.clone(), TransitionModel::Pusher(cfg.pusher))?;
        let t0 = Instant::now();
        let results: Vec<TrackResult> = (0..recordings.len() * e.reruns)
            .into_par_iter()
            .map(|j| {
                let rec = &recordings[j / e.reruns];
                let mut r = run_rng(e.seed, j);
                let prior = Belief::uniform(tracker.filter.n_particles, &ws, tracker.filter.h_max, &mut r);
                tracker.run(prior, rec.truth, &rec.steps, &mut r, false)
            })
            .collect();
        let runs = MethodRuns::new(kind, &results);
        log::info!(
            "{} pushing {}: {}/{} successes, {:.1} ms per step, {:.1} s",
            ctx.spec.slug(),
            kind.label(),
            runs.successes,
            results.len(),
            runs.mean_step_ms,
            t0.elapsed().as_secs_f64()
        );
        methods.push(runs);
    }
    Ok(EstimationReport {
        scenario: "push".into(),
        object: ctx.spec.slug(),
        density: cfg.sensor.density,
        runs: recordings.len() * e.reruns,
        config_hash: cfg.hash(),
        seed: e.seed,
        methods,
    })
}
