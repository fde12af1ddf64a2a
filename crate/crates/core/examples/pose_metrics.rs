//! ADD and ADD-S on an asymmetric and a symmetric object, and the summary
//! statistics used in every report.
//!
//! ```text
//! cargo run --release --example pose_metrics
//! ```

use tactile_pose::metrics::{add, add_s, model_points, normalized_add, summarize};
use tactile_pose::objects::lookup;
use tactile_pose::Pose2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = Pose2::new(0.4, 0.0, 0.5);
    for id in ["drill", "master chef", "mug"] {
        let spec = lookup(id)?;
        let points = model_points(&spec.mesh()?, 500, 0);
        println!("{} (d_obj {:.3} m, {} metric)", spec.slug(), spec.d_obj, if spec.uses_add_s() { "ADD-S" } else { "ADD" });
        for (label, est) in [("1 cm shift", truth.translated(0.01, 0.0)), ("90 deg turn", Pose2::new(0.4, 0.0, 0.5 + std::f64::consts::FRAC_PI_2))] {
            let a = add(&points, &est, &truth)?;
            let s = add_s(&points, &est, &truth)?;
            println!("  {label:12} ADD {a:.4} m  ADD-S {s:.4} m  normalized ADD {:.3}", normalized_add(a, spec.d_obj));
        }
    }
    let errors = [0.02, 0.05, 0.08, 0.12, 0.3];
    let s = summarize(&errors).ok_or("empty")?;
    println!("summary of {errors:?}: median {:.3}, IQR [{:.3}, {:.3}]", s.median, s.q1, s.q3);
    Ok(())
}
