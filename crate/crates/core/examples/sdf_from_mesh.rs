//! Voxelizes a mesh into a signed distance grid, checks it against the
//! analytic distance of a sphere and saves it.
//!
//! ```text
//! cargo run --release --example sdf_from_mesh [path/to/mesh.obj|stl]
//! ```

use std::time::Instant;

use nalgebra::Vector3;
use tactile_pose::mesh::{load_mesh, primitives::icosphere};
use tactile_pose::sdf::{build_sdf, Aabb, SdfGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (mesh, analytic) = match std::env::args().nth(1) {
        Some(p) => (load_mesh(p.as_ref())?, false),
        None => (icosphere(0.1, 4), true),
    };
    let (lo, hi) = mesh.bounds().ok_or("empty mesh")?;
    let bbox = Aabb::centered((lo + hi) / 2.0, (hi - lo) * 1.6);
    let t = Instant::now();
    let grid = build_sdf(&mesh, bbox, [96; 3])?;
    println!("{} triangles -> 96^3 grid in {:.2?}, spacing {:.4} m", mesh.triangles.len(), t.elapsed(), grid.max_spacing());

    let center = (lo + hi) / 2.0;
    for dx in [0.0, 0.05, 0.1, 0.15] {
        let p = center + Vector3::new(dx, 0.0, 0.0);
        let g = grid.gradient(&p);
        print!("phi({dx:.2}) = {:+.5}  grad = [{:+.3} {:+.3} {:+.3}]", grid.distance(&p), g.value.x, g.value.y, g.value.z);
        if analytic {
            // The icosphere is inscribed, so the analytic value is slightly low.
            print!("  sphere {:+.5}", dx - 0.1);
        }
        println!();
    }

    let path = std::env::temp_dir().join("example.sdfgrid");
    grid.save(&path)?;
    let back = SdfGrid::load(&path)?;
    println!("saved {} ({} nodes, round trip equal: {})", path.display(), back.values().len(), back.values() == grid.values());
    Ok(())
}
