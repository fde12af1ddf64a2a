//! Procedural closed meshes: cuboids, icospheres, lofted prisms.

use super::TriangleMesh;
use nalgebra::{Vector2, Vector3};
use std::collections::HashMap;
use std::f64::consts::TAU;

/// A horizontal cross-section of a loft at height `z`.
#[derive(Debug, Clone)]
pub struct Ring {
    pub z: f64,
    /// Counter-clockwise (seen from +z) convex outline.
    pub outline: Vec<Vector2<f64>>,
}

/// Closed solid through a stack of rings with equal vertex counts.
///
/// Caps are fans around the outline centroid, so outlines must be convex
/// (or at least star-shaped around their centroid).
pub fn loft(rings: &[Ring]) -> TriangleMesh {
    assert!(rings.len() >= 2, "loft needs at least two rings");
    let m = rings[0].outline.len();
    assert!(m >= 3 && rings.iter().all(|r| r.outline.len() == m));
    let mut vertices = Vec::with_capacity(rings.len() * m + 2);
    for r in rings {
        vertices.extend(r.outline.iter().map(|p| Vector3::new(p.x, p.y, r.z)));
    }
    let mut triangles = Vec::new();
    let idx = |ring: usize, j: usize| (ring * m + j % m) as u32;
    for i in 0..rings.len() - 1 {
        for j in 0..m {
            let (a0, a1, b0, b1) = (idx(i, j), idx(i, j + 1), idx(i + 1, j), idx(i + 1, j + 1));
            triangles.push([a0, a1, b1]);
            triangles.push([a0, b1, b0]);
        }
    }
    let centroid = |r: &Ring| r.outline.iter().sum::<Vector2<f64>>() / m as f64;
    let first = &rings[0];
    let last = &rings[rings.len() - 1];
    let c0 = centroid(first);
    let c1 = centroid(last);
    let bottom = vertices.len() as u32;
    vertices.push(Vector3::new(c0.x, c0.y, first.z));
    let top = vertices.len() as u32;
    vertices.push(Vector3::new(c1.x, c1.y, last.z));
    let lr = rings.len() - 1;
    for j in 0..m {
        triangles.push([bottom, idx(0, j + 1), idx(0, j)]);
        triangles.push([top, idx(lr, j), idx(lr, j + 1)]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Superellipse outline `|x/a|^p + |y/b|^p = 1`, counter-clockwise.
/// `p = 2` is an ellipse; large `p` approaches a rectangle.
pub fn superellipse(a: f64, b: f64, p: f64, segments: usize) -> Vec<Vector2<f64>> {
    (0..segments)
        .map(|k| {
            let t = TAU * k as f64 / segments as f64;
            let (s, c) = t.sin_cos();
            let e = 2.0 / p;
            Vector2::new(a * c.signum() * c.abs().powf(e), b * s.signum() * s.abs().powf(e))
        })
        .collect()
}

pub fn circle(radius: f64, segments: usize) -> Vec<Vector2<f64>> {
    superellipse(radius, radius, 2.0, segments)
}

pub fn rectangle(width: f64, depth: f64) -> Vec<Vector2<f64>> {
    let (hx, hy) = (width / 2.0, depth / 2.0);
    vec![
        Vector2::new(-hx, -hy),
        Vector2::new(hx, -hy),
        Vector2::new(hx, hy),
        Vector2::new(-hx, hy),
    ]
}

/// Straight prism of `outline` between heights `z0 < z1`.
pub fn prism(outline: Vec<Vector2<f64>>, z0: f64, z1: f64) -> TriangleMesh {
    loft(&[Ring { z: z0, outline: outline.clone() }, Ring { z: z1, outline }])
}

/// Axis-aligned cuboid centered at the origin.
pub fn cuboid(size: Vector3<f64>) -> TriangleMesh {
    prism(rectangle(size.x, size.y), -size.z / 2.0, size.z / 2.0)
}

/// Upright cylinder with its base at `z = 0`.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    prism(circle(radius, segments), 0.0, height)
}

/// Geodesic sphere from `subdivisions` rounds of icosahedron refinement.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(verts.into_iter().map(|v| v * radius).collect(), faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outward_orientation() {
        // Divergence theorem: signed volume is positive for outward normals.
        for mesh in [cuboid(Vector3::new(1.0, 2.0, 3.0)), icosphere(1.0, 2), cylinder(0.5, 1.0, 32)] {
            mesh.validate_watertight().unwrap();
            let vol: f64 = (0..mesh.triangles.len())
                .map(|i| {
                    let [a, b, c] = mesh.triangle(i);
                    a.dot(&b.cross(&c)) / 6.0
                })
                .sum();
            assert!(vol > 0.0);
        }
        let v: f64 = {
            let m = cuboid(Vector3::new(1.0, 2.0, 3.0));
            (0..m.triangles.len())
                .map(|i| {
                    let [a, b, c] = m.triangle(i);
                    a.dot(&b.cross(&c)) / 6.0
                })
                .sum()
        };
        assert!((v - 6.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_vertices_on_sphere() {
        let m = icosphere(0.1, 3);
        assert_eq!(m.triangles.len(), 20 * 64);
        assert!(m.vertices.iter().all(|v| (v.norm() - 0.1).abs() < 1e-12));
    }

    #[test]
    fn superellipse_extremes() {
        let o = superellipse(2.0, 1.0, 4.0, 16);
        assert!((o[0] - Vector2::new(2.0, 0.0)).norm() < 1e-12);
        assert!((o[4] - Vector2::new(0.0, 1.0)).norm() < 1e-6);
    }
}
