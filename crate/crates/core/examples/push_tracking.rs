//! Scripted pushing of the bulky box with the quasi-static pusher, tracked
//! by every proposer. Prints the scripted trajectory of the first recording
//! and the final success counts.
//!
//! ```text
//! cargo run --release --example push_tracking [object] [recordings]
//! ```

use std::sync::Arc;

use tactile_pose::config::ExperimentConfig;
use tactile_pose::experiments::pushing::{push_recording, run_push_tracking};
use tactile_pose::experiments::report::write_estimation;
use tactile_pose::experiments::{ArtifactStore, ObjectContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let object = args.next().unwrap_or_else(|| "bulky box".into());
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.experiment.pushes = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    cfg.experiment.reruns = 2;
    cfg.apply_env()?;
    let store = ArtifactStore::for_config(&cfg);
    let ctx = ObjectContext::prepare(&cfg, &store)?;

    let rec = push_recording(&ctx, &cfg, 0);
    let touching = rec.steps.iter().filter(|s| s.obs.in_contact()).count();
    let last = rec.steps.last().map_or(rec.truth, |s| s.truth);
    println!(
        "recording 0: {} steps, {touching} in contact, object moved from ({:.3}, {:.3}, {:.2}) to ({:.3}, {:.3}, {:.2})",
        rec.steps.len(),
        rec.truth.x,
        rec.truth.y,
        rec.truth.theta,
        last.x,
        last.y,
        last.theta
    );

    let model = Arc::new(store.ensure_model(&cfg, &ctx)?);
    let report = run_push_tracking(&ctx, &cfg, Some(model))?;
    for m in &report.methods {
        println!("{:12} successes {:2}/{}  {:.1} ms per step", m.method.label(), m.successes, report.runs, m.mean_step_ms);
    }
    for p in write_estimation(&store.run_dir(&cfg, "push")?, &report)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
