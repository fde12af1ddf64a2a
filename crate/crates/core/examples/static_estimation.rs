//! The static-estimation experiment end to end: prepares the object,
//! trains (or loads) the inverse model, runs every proposer over the same
//! episodes and writes the report files.
//!
//! ```text
//! cargo run --release --example static_estimation [object] [episodes]
//! ```
//!
//! `TACTILE_POSE_SEED` and `TACTILE_POSE_OUT_DIR` override the seed and the
//! output directory.

use std::sync::Arc;

use tactile_pose::config::ExperimentConfig;
use tactile_pose::experiments::report::write_estimation;
use tactile_pose::experiments::tracking::run_static_estimation;
use tactile_pose::experiments::{ArtifactStore, ObjectContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let object = args.next().unwrap_or_else(|| "mustard".into());
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.experiment.episodes = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    cfg.apply_env()?;
    let store = ArtifactStore::for_config(&cfg);
    let ctx = ObjectContext::prepare(&cfg, &store)?;
    let model = Arc::new(store.ensure_model(&cfg, &ctx)?);

    let report = run_static_estimation(&ctx, &cfg, Some(model))?;
    for m in &report.methods {
        let medians: Vec<String> = m.summaries.iter().map(|s| format!("{:.3}", s.median)).collect();
        println!("{:12} successes {:3}/{}  median error per contact [{}]", m.method.label(), m.successes, report.runs, medians.join(", "));
    }
    let dir = store.run_dir(&cfg, "static")?;
    for p in write_estimation(&dir, &report)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
