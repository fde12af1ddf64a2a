//! Compares how sharply the full taxel array and its force-torque reduction
//! discriminate the true pose from perturbed ones.
//!
//! ```text
//! cargo run --release --example force_torque_baseline [object]
//! ```

use tactile_pose::baselines::{ft_log_likelihood, ft_reduce};
use tactile_pose::config::ExperimentConfig;
use tactile_pose::contact::ContactConfig;
use tactile_pose::experiments::samples::ground_truth_cases;
use tactile_pose::experiments::{ArtifactStore, ObjectContext};
use tactile_pose::tactile::log_likelihood;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let object = std::env::args().nth(1).unwrap_or_else(|| "cracker".into());
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.apply_env()?;
    let ctx = ObjectContext::prepare(&cfg, &ArtifactStore::for_config(&cfg))?;
    let p = cfg.filter.likelihood;
    println!("{:>8} {:>12} {:>12}", "offset", "array", "force-torque");
    for case in ground_truth_cases(&ctx, &cfg, 2, cfg.experiment.seed) {
        let reduced = ft_reduce(&case.obs, &ctx.model.layout, cfg.baseline.ft_zeta);
        if let Some(r) = reduced {
            println!("virtual contact: mean activation {:.2} at ({:.3}, {:.3}, {:.3})", r.value, r.point.x, r.point.y, r.point.z);
        }
        for offset in [0.0, 0.002, 0.005, 0.01, 0.02] {
            let c = ContactConfig::new(case.config.object.translated(offset, 0.0), case.config.sensor);
            let full = log_likelihood(&case.obs, &c, &ctx.model, &p);
            let ft = ft_log_likelihood(reduced.as_ref(), &c, &ctx.model, &p);
            println!("{offset:>8.3} {full:>12.3} {ft:>12.3}");
        }
    }
    Ok(())
}
