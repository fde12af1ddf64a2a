//! Tracks a resting object through six random touches with the particle
//! filter, printing the belief after every contact. Uses the local-sampling
//! proposer, so no trained model is needed; pass `ddim` to use the cached
//! inverse model instead.
//!
//! ```text
//! cargo run --release --example particle_filter [object] [sdf|sdf-ft|ddim]
//! ```

use std::sync::Arc;

use clap::ValueEnum;
use tactile_pose::config::{ExperimentConfig, ProposerKind};
use tactile_pose::experiments::tracking::{run_rng, static_episode, Tracker};
use tactile_pose::experiments::{ArtifactStore, ObjectContext};
use tactile_pose::filter::{Belief, TransitionModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let object = args.next().unwrap_or_else(|| "mustard".into());
    let kind = match args.next() {
        Some(s) => ProposerKind::from_str(&s, true)?,
        None => ProposerKind::Sdf,
    };
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.apply_env()?;
    let store = ArtifactStore::for_config(&cfg);
    let ctx = ObjectContext::prepare(&cfg, &store)?;
    let model = if kind.needs_model() { Some(Arc::new(store.load_model(&cfg)?)) } else { None };

    let tracker = Tracker::new(&ctx, &cfg, kind, model, TransitionModel::Static)?;
    let episode = static_episode(&ctx, &cfg, 6, 0);
    let mut rng = run_rng(cfg.experiment.seed, 0);
    let prior = Belief::uniform(tracker.filter.n_particles, &cfg.workspace(&ctx.spec), tracker.filter.h_max, &mut rng);
    let result = tracker.run(prior, episode.truth, &episode.steps, &mut rng, true);

    println!("{} at ({:.3}, {:.3}, {:.2}), proposer {}", ctx.spec.slug(), episode.truth.x, episode.truth.y, episode.truth.theta, kind.label());
    println!("prior: normalized error {:.3}", result.errors[0]);
    for (snap, (err, ms)) in result.snapshots.iter().zip(result.errors[1..].iter().zip(&result.step_ms)) {
        let e = snap.estimate;
        println!("contact {}: estimate ({:.3}, {:.3}, {:.2}), normalized error {err:.3}, {ms:.1} ms", snap.t, e.x, e.y, e.theta);
    }
    Ok(())
}
