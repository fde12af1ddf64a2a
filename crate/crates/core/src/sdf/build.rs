//! SDF construction from a watertight triangle mesh.
//!
//! Unsigned distances come from a BVH nearest-triangle search. The sign of
//! each node is decided by ray parity along the three coordinate axes with a
//! majority vote, which tolerates the occasional grazing hit on one axis.
//!
//! Meshes made of several closed shells (for example an assembly of
//! overlapping parts) are treated as the union of their solids: the field is
//! the minimum of the per-shell signed distances. Outside the solid this is
//! the exact distance; inside an overlap it under-reports the depth, which
//! only matters far below the penetration band the contact model uses.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::bvh::Bvh;
use super::{grid_spacing, Aabb, SdfError, SdfGrid};
use crate::mesh::TriangleMesh;

type V3 = Vector3<f64>;

pub fn build_sdf(mesh: &TriangleMesh, bbox: Aabb, dims: [usize; 3]) -> Result<SdfGrid, SdfError> {
    mesh.validate_watertight()?;
    let spacing = grid_spacing(&bbox, dims)?;
    let (lo, hi) = mesh.bounds().ok_or(SdfError::Mesh(crate::mesh::MeshError::Empty))?;
    if !(bbox.contains(&lo) && bbox.contains(&hi)) {
        return Err(SdfError::BboxTooSmall {
            mesh_min: lo.into(),
            mesh_max: hi.into(),
            box_min: bbox.min.into(),
            box_max: bbox.max.into(),
        });
    }

    let shells = mesh.shells();
    let tris_of = |m: &TriangleMesh| -> Vec<[V3; 3]> { (0..m.triangles.len()).map(|i| m.triangle(i)).collect() };
    let global = Bvh::new(tris_of(mesh));
    let shell_bvhs: Vec<Bvh> = if shells.len() > 1 { shells.iter().map(|s| Bvh::new(tris_of(s))).collect() } else { Vec::new() };
    let inside: Vec<Vec<bool>> = shells.iter().map(|s| inside_mask(s, bbox.min, spacing, dims)).collect();

    let slice = dims[0] * dims[1];
    let mut values = vec![0.0f32; slice * dims[2]];
    values.par_chunks_mut(slice).enumerate().for_each(|(k, out)| {
        let mut row_start = f64::INFINITY;
        for j in 0..dims[1] {
            let mut prev = f64::INFINITY;
            for i in 0..dims[0] {
                let p = bbox.min + V3::new(i as f64 * spacing.x, j as f64 * spacing.y, k as f64 * spacing.z);
                let hint = if i > 0 {
                    prev + spacing.x
                } else if j > 0 {
                    row_start + spacing.y
                } else {
                    f64::INFINITY
                };
                let d = nearest(&global, &p, hint);
                prev = d;
                if i == 0 {
                    row_start = d;
                }
                let node = i + dims[0] * j;
                let flat = node + slice * k;
                let mut phi = d;
                let mut deepest: Option<f64> = None;
                for (s, mask) in inside.iter().enumerate() {
                    if mask[flat] {
                        let ds = if shell_bvhs.is_empty() { d } else { nearest(&shell_bvhs[s], &p, f64::INFINITY) };
                        deepest = Some(deepest.map_or(ds, |x: f64| x.max(ds)));
                    }
                }
                if let Some(ds) = deepest {
                    phi = -ds;
                }
                out[node] = phi as f32;
            }
        }
    });
    SdfGrid::from_values(bbox.min, spacing, dims, values)
}

/// Exact nearest distance, using `hint` (a known upper bound) to prune.
fn nearest(bvh: &Bvh, p: &V3, hint: f64) -> f64 {
    if hint.is_finite() {
        let b = hint * (1.0 + 1e-9) + 1e-12;
        let d2 = bvh.nearest_dist2(p, b * b);
        if d2 < b * b {
            return d2.sqrt();
        }
    }
    bvh.nearest_dist2(p, f64::INFINITY).sqrt()
}

/// Per-node inside flags for one closed shell, by majority vote of the ray
/// parity along +x, +y and +z.
fn inside_mask(shell: &TriangleMesh, origin: V3, spacing: V3, dims: [usize; 3]) -> Vec<bool> {
    let n = dims[0] * dims[1] * dims[2];
    let mut votes = vec![0u8; n];
    for axis in 0..3 {
        let (b, c) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut lines: Vec<Vec<f64>> = vec![Vec::new(); dims[b] * dims[c]];
        for t in 0..shell.triangles.len() {
            let tri = shell.triangle(t);
            let normal = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
            if normal[axis] == 0.0 {
                continue;
            }
            let mut pts = [[tri[0][b], tri[0][c]], [tri[1][b], tri[1][c]], [tri[2][b], tri[2][c]]];
            if orient(pts[0], pts[1], pts[2]) < 0.0 {
                pts.swap(1, 2);
            }
            let range = |ax: usize, lo: f64, hi: f64| -> Option<(usize, usize)> {
                let first = ((lo - origin[ax]) / spacing[ax]).ceil().max(0.0);
                let last = ((hi - origin[ax]) / spacing[ax]).floor().min((dims[ax] - 1) as f64);
                (first <= last).then_some((first as usize, last as usize))
            };
            let bmin = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let bmax = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let cmin = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let cmax = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            let (Some((ib0, ib1)), Some((ic0, ic1))) = (range(b, bmin, bmax), range(c, cmin, cmax)) else {
                continue;
            };
            for ic in ic0..=ic1 {
                let pc = origin[c] + ic as f64 * spacing[c];
                for ib in ib0..=ib1 {
                    let pb = origin[b] + ib as f64 * spacing[b];
                    if covers(&pts, [pb, pc]) {
                        let x = tri[0][axis] - (normal[b] * (pb - tri[0][b]) + normal[c] * (pc - tri[0][c])) / normal[axis];
                        lines[ib + dims[b] * ic].push(x);
                    }
                }
            }
        }
        for ic in 0..dims[c] {
            for ib in 0..dims[b] {
                let line = &mut lines[ib + dims[b] * ic];
                if line.is_empty() {
                    continue;
                }
                line.sort_by(f64::total_cmp);
                let mut passed = 0usize;
                for ia in 0..dims[axis] {
                    let xa = origin[axis] + ia as f64 * spacing[axis];
                    while passed < line.len() && line[passed] <= xa {
                        passed += 1;
                    }
                    if (line.len() - passed) % 2 == 1 {
                        let mut idx = [0usize; 3];
                        idx[axis] = ia;
                        idx[b] = ib;
                        idx[c] = ic;
                        votes[idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])] += 1;
                    }
                }
            }
        }
    }
    votes.into_iter().map(|v| v >= 2).collect()
}

fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Point-in-triangle with a top-left style rule on shared edges, so a line
/// through an edge between two same-facing triangles is counted once.
fn covers(t: &[[f64; 2]; 3], p: [f64; 2]) -> bool {
    for e in 0..3 {
        let (u, v) = (t[e], t[(e + 1) % 3]);
        let w = orient(u, v, p);
        if w < 0.0 {
            return false;
        }
        if w == 0.0 {
            let (dx, dy) = (v[0] - u[0], v[1] - u[1]);
            if !(dy > 0.0 || (dy == 0.0 && dx > 0.0)) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{cuboid, icosphere};

    /// Odd resolutions put a node exactly on the sphere centre.
    fn sphere_grid(res: usize) -> SdfGrid {
        let mesh = icosphere(0.1, 4);
        build_sdf(&mesh, Aabb::centered(V3::zeros(), V3::repeat(0.3)), [res; 3]).unwrap()
    }

    #[test]
    fn sphere_center_and_outside() {
        let g = sphere_grid(49);
        let half = g.max_spacing() / 2.0;
        assert!((g.distance(&V3::zeros()) + 0.1).abs() < half);
        assert!((g.distance(&V3::new(0.15, 0.0, 0.0)) - 0.05).abs() < half);
    }

    #[test]
    fn box_signs() {
        let mesh = cuboid(V3::new(0.1, 0.2, 0.05));
        let g = build_sdf(&mesh, Aabb::centered(V3::zeros(), V3::repeat(0.3)), [31; 3]).unwrap();
        assert!(g.distance(&V3::zeros()) < 0.0);
        assert!(g.distance(&V3::new(0.0, 0.0, 0.1)) > 0.0);
        assert!((g.distance(&V3::zeros()) + 0.025).abs() < g.max_spacing() / 2.0);
    }

    #[test]
    fn overlapping_shells_form_a_union() {
        let a = cuboid(V3::new(0.1, 0.1, 0.1));
        let b = cuboid(V3::new(0.1, 0.1, 0.1)).translated(V3::new(0.05, 0.0, 0.0));
        let mesh = TriangleMesh::merge(&[a, b]);
        let g = build_sdf(&mesh, Aabb::centered(V3::new(0.025, 0.0, 0.0), V3::repeat(0.3)), [41; 3]).unwrap();
        // In the overlap each part reports its own depth; the union takes the deeper.
        assert!((g.distance(&V3::new(0.025, 0.0, 0.0)) + 0.025).abs() < g.max_spacing() / 2.0);
        // The internal faces of each part do not create a zero crossing.
        assert!(g.distance(&V3::new(0.05, 0.0, 0.0)) < -0.04);
    }

    #[test]
    fn bbox_must_enclose_mesh() {
        let mesh = icosphere(0.1, 1);
        let err = build_sdf(&mesh, Aabb::centered(V3::zeros(), V3::repeat(0.15)), [8; 3]).unwrap_err();
        assert!(matches!(err, SdfError::BboxTooSmall { .. }));
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut mesh = icosphere(0.1, 1);
        mesh.triangles.pop();
        assert!(matches!(
            build_sdf(&mesh, Aabb::centered(V3::zeros(), V3::repeat(0.3)), [8; 3]),
            Err(SdfError::Mesh(_))
        ));
    }
}
