//! Projects random object poses onto the contact manifold of the drill and
//! reports validity, idempotence and timing.
//!
//! ```text
//! cargo run --release --example contact_projection [object] [count]
//! ```

use std::time::Instant;

use rand::Rng;
use tactile_pose::config::ExperimentConfig;
use tactile_pose::contact::{ContactConfig, Delta};
use tactile_pose::experiments::{ArtifactStore, ObjectContext};
use tactile_pose::Pose2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let object = args.next().unwrap_or_else(|| "drill".into());
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.apply_env()?;
    let ctx = ObjectContext::prepare(&cfg, &ArtifactStore::for_config(&cfg))?;
    let model = &ctx.model;
    let mut rng = tactile_pose::rng::seeded(cfg.experiment.seed);

    let (mut valid, mut failed, mut worst) = (0, 0, 0.0f64);
    let t = Instant::now();
    for _ in 0..count {
        let object = Pose2::new(rng.random_range(0.2..0.6), rng.random_range(-0.3..0.3), rng.random_range(0.0..std::f64::consts::TAU));
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = rng.random_range(0.0..0.15);
        let sensor = Pose2::new(object.x + r * a.cos(), object.y + r * a.sin(), rng.random_range(0.0..std::f64::consts::TAU));
        let delta = Delta::Fixed(Delta::training(&model.thresholds).sample(&mut rng));
        match model.project(&ContactConfig::new(object, sensor), delta, &mut rng) {
            Ok(projected) => {
                let c = ContactConfig::new(projected, sensor);
                valid += usize::from(model.check(&c));
                let again = model.project(&c, delta, &mut rng)?;
                worst = worst.max((again.translation() - projected.translation()).norm());
            }
            Err(_) => failed += 1,
        }
    }
    let per = t.elapsed().as_secs_f64() * 1e6 / count as f64;
    println!("{}: {valid}/{count} valid, {failed} failed, worst re-projection shift {worst:.2e} m, {per:.0} us per projection", ctx.spec.slug());
    Ok(())
}
