//! Single-contact hypothesis quality of the learned model against the
//! local-sampling baseline: average log-likelihood of the observation under
//! each hypothesis set and the error of the most likely hypothesis.
//!
//! ```text
//! cargo run --release --example sample_quality [object] [contacts]
//! ```

use tactile_pose::config::{ExperimentConfig, ProposerKind};
use tactile_pose::experiments::report::write_sample_eval;
use tactile_pose::experiments::samples::eval_samples;
use tactile_pose::experiments::{ArtifactStore, ObjectContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let object = args.next().unwrap_or_else(|| "mustard".into());
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.experiment.n_ground_truth = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    cfg.apply_env()?;
    let store = ArtifactStore::for_config(&cfg);
    let ctx = ObjectContext::prepare(&cfg, &store)?;
    let model = store.ensure_model(&cfg, &ctx)?;

    let methods = [ProposerKind::Ddim, ProposerKind::DdimNoSdf, ProposerKind::Sdf];
    let report = eval_samples(&ctx, &cfg, Some(&model), &methods, &[cfg.experiment.n_samples])?;
    println!("{:12} {:>10} {:>10} {:>18} {:>8}", "method", "avg ll", "MAP med", "IQR", "ms");
    for m in &report.methods {
        let s = &m.map_summary;
        println!("{:12} {:>10.2} {:>10.4} {:>8.4}-{:<9.4} {:>8.1}", m.method.label(), m.avg_loglik, s.median, s.q1, s.q3, m.ms_per_contact);
    }
    for p in write_sample_eval(&store.run_dir(&cfg, "samples")?, &report)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
