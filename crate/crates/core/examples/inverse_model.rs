//! Generates a small contact dataset, trains the denoiser for a few epochs
//! and draws DDIM hypotheses for a held-out contact, with and without the
//! SDF projection.
//!
//! The defaults take about a minute. Pass `--full` to run with the
//! configured dataset size and epochs (cached under the output directory).
//!
//! ```text
//! cargo run --release --example inverse_model [object] [--full]
//! ```

use tactile_pose::config::ExperimentConfig;
use tactile_pose::diffusion::{generate_dataset, sample_hypotheses, train_denoiser};
use tactile_pose::experiments::samples::ground_truth_cases;
use tactile_pose::experiments::{ArtifactStore, ObjectContext};
use tactile_pose::metrics::map_hypothesis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--full");
    let object = args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_else(|| "mustard".into());
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.apply_env()?;
    let store = ArtifactStore::for_config(&cfg);
    let ctx = ObjectContext::prepare(&cfg, &store)?;

    let model = if full {
        store.ensure_model(&cfg, &ctx)?
    } else {
        let mut dc = ctx.dataset_config(&cfg);
        dc.n_records = 2000;
        let data = generate_dataset(&ctx.model, &dc, cfg.experiment.seed);
        let mut tc = cfg.diffusion.train.clone();
        tc.epochs = 40;
        let (model, report) = train_denoiser(&data.records, &tc, cfg.experiment.seed)?;
        println!("trained on {} records, best held-out loss {:.4} at epoch {}", data.len(), report.best_loss, report.best_epoch);
        model
    };

    let mut rng = tactile_pose::rng::seeded(cfg.experiment.seed + 1);
    for case in ground_truth_cases(&ctx, &cfg, 3, cfg.experiment.seed + 7) {
        for project in [false, true] {
            let (hyps, report) = sample_hypotheses(&model, &case.obs, &ctx.model, 100, &cfg.diffusion.ddim, project, &mut rng);
            let map = map_hypothesis(&case, &hyps, &ctx.model, &cfg.filter.likelihood).ok_or("no hypotheses")?;
            let err = ctx.metric.error(&case.config.sensor.compose(&map), &case.config.object);
            println!(
                "{} active taxels, projection {:5}: {} hypotheses ({} redrawn, {} dropped), MAP normalized error {err:.3}",
                case.obs.active_count(),
                project,
                hyps.len(),
                report.redrawn,
                report.dropped
            );
        }
    }
    Ok(())
}
