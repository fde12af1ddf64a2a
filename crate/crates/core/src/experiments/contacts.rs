use std::f64::consts::TAU;

use rand::Rng;

use crate::contact::{ContactConfig, ContactModel, Delta};
use crate::metrics::GroundTruthContact;
use crate::pose::Pose2;
use crate::tactile::{sample_observation, SensorParams};

/// A simulated touch of a fixed object.
pub type RandomContact = GroundTruthContact;

const MAX_TRIES: usize = 200;

/// Touches the object at `object` from a uniformly random direction.
///
/// The sensor starts on a circle of radius `reach` around the object
/// origin, with a random heading, and the configuration is projected onto
/// the contact manifold. Projection moves the object, so the sensor is
/// shifted back by the same offset afterwards: only the relative pose
/// matters for contact, and the object stays where it was put. Draws that
/// fail to project or produce no activation are repeated.
pub fn random_contact<R: Rng + ?Sized>(
    model: &ContactModel,
    object: Pose2,
    reach: f64,
    sensor_params: &SensorParams,
    rng: &mut R,
) -> Option<RandomContact> {
    let delta = Delta::training(&model.thresholds);
    for _ in 0..MAX_TRIES {
        let a = rng.random_range(0.0..TAU);
        let sensor = Pose2::new(object.x + reach * a.cos(), object.y + reach * a.sin(), rng.random_range(0.0..TAU));
        let Ok(moved) = model.project(&ContactConfig::new(object, sensor), delta, rng) else {
            continue;
        };
        let sensor = sensor.translated(object.x - moved.x, object.y - moved.y);
        let config = ContactConfig::new(object, sensor);
        if !model.check(&config) {
            continue;
        }
        let obs = sample_observation(&config, model, sensor_params, rng);
        if obs.in_contact() {
            return Some(GroundTruthContact { config, obs });
        }
    }
    None
}
