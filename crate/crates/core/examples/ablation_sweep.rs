//! Taxel-density and sample-count sweeps. Densities without a trained
//! checkpoint are reported as gaps and only the baseline is evaluated
//! there; train them with `tactile-pose gen-data` and `train` first.
//!
//! ```text
//! cargo run --release --example ablation_sweep [object] [contacts]
//! ```

use tactile_pose::config::ExperimentConfig;
use tactile_pose::experiments::ablation::run_ablations;
use tactile_pose::experiments::report::{regenerate, write_ablation};
use tactile_pose::experiments::ArtifactStore;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let object = args.next().unwrap_or_else(|| "mustard".into());
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.experiment.n_ground_truth = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    cfg.apply_env()?;
    let store = ArtifactStore::for_config(&cfg);

    let report = run_ablations(&cfg, &store)?;
    for g in &report.gaps {
        println!("gap: {g}");
    }
    for r in report.by_density.iter().chain(&report.by_count) {
        println!("density {:.2} {:12} N_p {:4}: avg ll {:8.2}, MAP median {:.4}", r.density, r.method.label(), r.n_samples, r.avg_loglik, r.median);
    }
    let dir = store.run_dir(&cfg, "ablation")?;
    write_ablation(&dir, &report)?;
    // The CSV and SVG files can always be rebuilt from the JSON report.
    for p in regenerate(&dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
