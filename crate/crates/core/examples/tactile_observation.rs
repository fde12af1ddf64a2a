//! Simulates the taxel response of a random contact with the mug, prints
//! it as an unwrapped map, scores it under the likelihood and writes a
//! short observation log that the CLI can replay.
//!
//! ```text
//! cargo run --release --example tactile_observation [object]
//! ```

use tactile_pose::config::ExperimentConfig;
use tactile_pose::contact::ContactConfig;
use tactile_pose::experiments::{random_contact, ArtifactStore, ObjectContext};
use tactile_pose::tactile::{log_likelihood, sample_observation, write_observation_log, ObservationRecord};
use tactile_pose::Pose2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let object = std::env::args().nth(1).unwrap_or_else(|| "mug".into());
    let mut cfg = ExperimentConfig::for_object(&object);
    cfg.apply_env()?;
    let ctx = ObjectContext::prepare(&cfg, &ArtifactStore::for_config(&cfg))?;
    let mut rng = tactile_pose::rng::seeded(cfg.experiment.seed);
    let truth = Pose2::new(0.4, 0.0, 0.3);
    let reach = cfg.sensor_radius(&ctx.spec);
    let contact = random_contact(&ctx.model, truth, reach, &cfg.sensor.noise, &mut rng).ok_or("no contact found")?;

    let layout = &ctx.model.layout;
    let cols = layout.cols;
    println!("{} active of {} taxels (rows = height, columns = angle):", contact.obs.active_count(), contact.obs.len());
    for row in contact.obs.values().chunks(cols).rev() {
        let line: String = row.iter().map(|&v| match v { v if v <= 0.0 => '.', v if v < 0.5 => '+', _ => '#' }).collect();
        println!("  {line}");
    }

    let p = cfg.filter.likelihood;
    let shifted = ContactConfig::new(truth.translated(0.01, 0.0), contact.config.sensor);
    println!("log-likelihood at the true pose {:.3}, 1 cm off {:.3}", log_likelihood(&contact.obs, &contact.config, &ctx.model, &p), log_likelihood(&contact.obs, &shifted, &ctx.model, &p));

    // A tap sequence: the same sensor pose observed three times.
    let records: Vec<ObservationRecord> = (0..3)
        .map(|i| ObservationRecord { t: i as f64 * 0.05, u: contact.config.sensor, z: sample_observation(&contact.config, &ctx.model, &cfg.sensor.noise, &mut rng) })
        .collect();
    let path = std::env::temp_dir().join("example_observations.jsonl");
    write_observation_log(&path, &records)?;
    println!("wrote {} (replay with `tactile-pose estimate-static --object {object} --proposer sdf --replay {}`)", path.display(), path.display());
    Ok(())
}
