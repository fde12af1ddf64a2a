//! Triangle meshes: validation, shells, surface sampling.
//!
//! A mesh may hold several closed shells. Signed distances treat the mesh as
//! the union of the solids bounded by its shells, which lets composite
//! objects (a mug body plus its handle) be assembled from simple closed
//! parts without boolean mesh operations.

mod io;
pub mod primitives;

pub use io::{load_mesh, load_obj, load_stl, parse_obj, parse_stl, write_stl};

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error reading mesh: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { triangle: usize, index: u32, count: usize },
    #[error("triangle {0} is degenerate (repeated vertex index)")]
    DegenerateTriangle(usize),
    #[error(
        "mesh is not watertight: {open_edges} open edge(s), {non_manifold_edges} non-manifold edge(s), \
         {inconsistent_edges} edge(s) with inconsistent winding"
    )]
    NotWatertight { open_edges: usize, non_manifold_edges: usize, inconsistent_edges: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Self {
        Self { vertices, triangles }
    }

    pub fn triangle(&self, i: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }

    /// Maximum pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                best = best.max((a - b).norm_squared());
            }
        }
        best.sqrt()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Checks index ranges and repeated indices.
    pub fn check_indices(&self) -> Result<(), MeshError> {
        if self.triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let count = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= count {
                    return Err(MeshError::IndexOutOfRange { triangle: t, index, count });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateTriangle(t));
            }
        }
        Ok(())
    }

    /// Every undirected edge must be shared by exactly two triangles that
    /// traverse it in opposite directions.
    pub fn validate_watertight(&self) -> Result<(), MeshError> {
        self.check_indices()?;
        let mut edges: HashMap<(u32, u32), (u32, i32)> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = edges.entry(key).or_insert((0, 0));
                e.0 += 1;
                e.1 += if a < b { 1 } else { -1 };
            }
        }
        let (mut open, mut non_manifold, mut inconsistent) = (0, 0, 0);
        for &(count, winding) in edges.values() {
            match count {
                1 => open += 1,
                2 if winding != 0 => inconsistent += 1,
                2 => {}
                _ => non_manifold += 1,
            }
        }
        if open + non_manifold + inconsistent > 0 {
            return Err(MeshError::NotWatertight {
                open_edges: open,
                non_manifold_edges: non_manifold,
                inconsistent_edges: inconsistent,
            });
        }
        Ok(())
    }

    /// Splits the mesh into connected components (shells), each re-indexed.
    pub fn shells(&self) -> Vec<TriangleMesh> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for tri in &self.triangles {
            let r0 = find(&mut parent, tri[0] as usize);
            for &v in &tri[1..] {
                let r = find(&mut parent, v as usize);
                if r != r0 {
                    parent[r] = r0;
                }
            }
        }
        // Order shells by first appearance so the split is deterministic.
        let mut shell_of_root: HashMap<usize, usize> = HashMap::new();
        let mut shells: Vec<(Vec<Vector3<f64>>, Vec<[u32; 3]>, HashMap<u32, u32>)> = Vec::new();
        for tri in &self.triangles {
            let root = find(&mut parent, tri[0] as usize);
            let next = shells.len();
            let s = *shell_of_root.entry(root).or_insert(next);
            if s == shells.len() {
                shells.push((Vec::new(), Vec::new(), HashMap::new()));
            }
            let (verts, tris, remap) = &mut shells[s];
            let mut local = [0u32; 3];
            for (k, &v) in tri.iter().enumerate() {
                local[k] = *remap.entry(v).or_insert_with(|| {
                    verts.push(self.vertices[v as usize]);
                    (verts.len() - 1) as u32
                });
            }
            tris.push(local);
        }
        shells.into_iter().map(|(v, t, _)| TriangleMesh::new(v, t)).collect()
    }

    /// Concatenates meshes; each input becomes one or more shells.
    pub fn merge(parts: &[TriangleMesh]) -> TriangleMesh {
        let mut out = TriangleMesh::default();
        for part in parts {
            let offset = out.vertices.len() as u32;
            out.vertices.extend_from_slice(&part.vertices);
            out.triangles
                .extend(part.triangles.iter().map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]));
        }
        out
    }

    pub fn transformed(&self, rotation: &Rotation3<f64>, translation: Vector3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| rotation * v + translation).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn translated(&self, t: Vector3<f64>) -> TriangleMesh {
        self.transformed(&Rotation3::identity(), t)
    }

    pub fn scaled(&self, s: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Area-weighted random surface points.
    pub fn sample_surface<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(i);
            total += 0.5 * (b - a).cross(&(c - a)).norm();
            cumulative.push(total);
        }
        (0..n)
            .map(|_| {
                let r = rng.random::<f64>() * total;
                let i = cumulative.partition_point(|&c| c < r).min(self.triangles.len() - 1);
                let [a, b, c] = self.triangle(i);
                let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                a + (b - a) * u + (c - a) * v
            })
            .collect()
    }

    /// `n` well-spread surface points: farthest-point subsampling of a dense
    /// area-weighted sample.
    pub fn farthest_point_samples<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
        let dense = self.sample_surface((20 * n).max(2000), rng);
        farthest_point_subsample(&dense, n)
    }
}

/// Greedy farthest-point subsampling starting from the first point.
pub fn farthest_point_subsample(points: &[Vector3<f64>], n: usize) -> Vec<Vector3<f64>> {
    if points.is_empty() || n == 0 {
        return Vec::new();
    }
    let n = n.min(points.len());
    let mut chosen = Vec::with_capacity(n);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut current = 0usize;
    for _ in 0..n {
        chosen.push(points[current]);
        let p = points[current];
        let mut next = 0;
        let mut best = -1.0;
        for (i, q) in points.iter().enumerate() {
            let d = (q - p).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best {
                best = dist[i];
                next = i;
            }
        }
        current = next;
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::primitives::{cuboid, icosphere};
    use super::*;

    #[test]
    fn cuboid_is_watertight_with_expected_diameter() {
        let m = cuboid(Vector3::new(0.16, 0.06, 0.21));
        m.validate_watertight().unwrap();
        assert!((m.diameter() - (0.16f64.powi(2) + 0.06f64.powi(2) + 0.21f64.powi(2)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn open_mesh_reports_defect() {
        let mut m = cuboid(Vector3::new(1.0, 1.0, 1.0));
        m.triangles.pop();
        match m.validate_watertight() {
            Err(MeshError::NotWatertight { open_edges, .. }) => assert!(open_edges > 0),
            other => panic!("expected NotWatertight, got {other:?}"),
        }
    }

    #[test]
    fn flipped_triangle_is_inconsistent() {
        let mut m = icosphere(1.0, 1);
        m.triangles[0].swap(1, 2);
        assert!(matches!(
            m.validate_watertight(),
            Err(MeshError::NotWatertight { inconsistent_edges: 3, .. })
        ));
    }

    #[test]
    fn out_of_range_index() {
        let m = TriangleMesh::new(vec![Vector3::zeros(); 2], vec![[0, 1, 5]]);
        assert!(matches!(m.check_indices(), Err(MeshError::IndexOutOfRange { index: 5, .. })));
    }

    #[test]
    fn merge_and_split_shells() {
        let a = cuboid(Vector3::new(1.0, 1.0, 1.0));
        let b = icosphere(0.5, 1).translated(Vector3::new(3.0, 0.0, 0.0));
        let merged = TriangleMesh::merge(&[a.clone(), b.clone()]);
        merged.validate_watertight().unwrap();
        let shells = merged.shells();
        assert_eq!(shells.len(), 2);
        assert_eq!(shells[0].triangles.len(), a.triangles.len());
        assert_eq!(shells[1].vertices.len(), b.vertices.len());
    }

    #[test]
    fn farthest_point_samples_are_spread_and_deterministic() {
        let m = icosphere(0.1, 3);
        let a = m.farthest_point_samples(100, &mut crate::rng::seeded(3));
        let b = m.farthest_point_samples(100, &mut crate::rng::seeded(3));
        assert_eq!(a, b);
        let min_gap = a
            .iter()
            .enumerate()
            .flat_map(|(i, p)| a[i + 1..].iter().map(move |q| (p - q).norm()))
            .fold(f64::INFINITY, f64::min);
        assert!(min_gap > 0.01, "min gap {min_gap}");
    }
}
