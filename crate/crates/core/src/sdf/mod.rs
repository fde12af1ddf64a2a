//! Voxelized signed distance fields.
//!
//! Values are stored as `f32` at grid nodes; all arithmetic on queries runs
//! in `f64`. The sign convention is negative inside, positive outside.

mod build;
mod bvh;

pub use build::build_sdf;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::mesh::MeshError;

const MAGIC: &[u8; 8] = b"SDFGRID\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SdfError {
    #[error("invalid mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("bounding box does not enclose the mesh (mesh spans {mesh_min:?}..{mesh_max:?}, box {box_min:?}..{box_max:?})")]
    BboxTooSmall { mesh_min: [f64; 3], mesh_max: [f64; 3], box_min: [f64; 3], box_max: [f64; 3] },
    #[error("grid needs at least 2 nodes per axis, got {0:?}")]
    BadResolution([usize; 3]),
    #[error("degenerate bounding box {0:?}")]
    BadBbox([f64; 3]),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an sdfgrid file: {0}")]
    Format(String),
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    /// Box of the given extent centered on `center`.
    pub fn centered(center: Vector3<f64>, extent: Vector3<f64>) -> Self {
        Self { min: center - extent / 2.0, max: center + extent / 2.0 }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn clamp(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p.sup(&self.min).inf(&self.max)
    }
}

/// Result of a distance query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub value: f64,
    /// The point was outside the grid; `value` includes the distance to the box.
    pub extrapolated: bool,
}

/// Result of a gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    pub value: Vector3<f64>,
    /// At least one axis used a one-sided difference (or the point was outside).
    pub one_sided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    origin: Vector3<f64>,
    spacing: Vector3<f64>,
    dims: [usize; 3],
    values: Vec<f32>,
}

impl SdfGrid {
    /// Wraps raw node values laid out x-fastest.
    pub fn from_values(origin: Vector3<f64>, spacing: Vector3<f64>, dims: [usize; 3], values: Vec<f32>) -> Result<Self, SdfError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(SdfError::BadResolution(dims));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(SdfError::BadBbox([spacing.x, spacing.y, spacing.z]));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(SdfError::Format(format!("expected {} values, got {}", dims[0] * dims[1] * dims[2], values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SdfError::Format("non-finite node value".into()));
        }
        Ok(Self { origin, spacing, dims, values })
    }

    /// Samples an analytic field at the nodes. Mostly useful for tests.
    pub fn from_fn(bbox: Aabb, dims: [usize; 3], f: impl Fn(Vector3<f64>) -> f64) -> Result<Self, SdfError> {
        let spacing = grid_spacing(&bbox, dims)?;
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = bbox.min + Vector3::new(i as f64 * spacing.x, j as f64 * spacing.y, k as f64 * spacing.z);
                    values.push(f(p) as f32);
                }
            }
        }
        Self::from_values(bbox.min, spacing, dims, values)
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn spacing(&self) -> Vector3<f64> {
        self.spacing
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn bbox(&self) -> Aabb {
        let far = Vector3::new(
            (self.dims[0] - 1) as f64 * self.spacing.x,
            (self.dims[1] - 1) as f64 * self.spacing.y,
            (self.dims[2] - 1) as f64 * self.spacing.z,
        );
        Aabb::new(self.origin, self.origin + far)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.max()
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)] as f64
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64 * self.spacing.x, j as f64 * self.spacing.y, k as f64 * self.spacing.z)
    }

    /// Trilinear interpolation; outside the box the query is clamped and the
    /// Euclidean distance to the box is added.
    pub fn query(&self, p: &Vector3<f64>) -> Query {
        let bbox = self.bbox();
        if bbox.contains(p) {
            return Query { value: self.interpolate(p), extrapolated: false };
        }
        let c = bbox.clamp(p);
        Query { value: self.interpolate(&c) + (p - c).norm(), extrapolated: true }
    }

    /// Shorthand for `query(p).value`.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.query(p).value
    }

    fn interpolate(&self, p: &Vector3<f64>) -> f64 {
        let mut idx = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.spacing[a];
            let i = (u.floor().max(0.0) as usize).min(self.dims[a] - 2);
            idx[a] = i;
            frac[a] = (u - i as f64).clamp(0.0, 1.0);
        }
        let [i, j, k] = idx;
        let [fx, fy, fz] = frac;
        let c00 = lerp(self.node(i, j, k), self.node(i + 1, j, k), fx);
        let c10 = lerp(self.node(i, j + 1, k), self.node(i + 1, j + 1, k), fx);
        let c01 = lerp(self.node(i, j, k + 1), self.node(i + 1, j, k + 1), fx);
        let c11 = lerp(self.node(i, j + 1, k + 1), self.node(i + 1, j + 1, k + 1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }

    /// Central differences with a step of one cell per axis. Axes where the
    /// stencil would leave the box fall back to a one-sided difference.
    pub fn gradient(&self, p: &Vector3<f64>) -> Gradient {
        let bbox = self.bbox();
        let inside = bbox.contains(p);
        let mut g = Vector3::zeros();
        let mut one_sided = !inside;
        for a in 0..3 {
            let h = self.spacing[a];
            let mut e = Vector3::zeros();
            e[a] = h;
            let fwd_ok = p[a] + h <= bbox.max[a];
            let back_ok = p[a] - h >= bbox.min[a];
            g[a] = if !inside || (fwd_ok && back_ok) {
                (self.distance(&(p + e)) - self.distance(&(p - e))) / (2.0 * h)
            } else if fwd_ok {
                one_sided = true;
                (self.distance(&(p + e)) - self.distance(p)) / h
            } else {
                one_sided = true;
                (self.distance(p) - self.distance(&(p - e))) / h
            };
        }
        Gradient { value: g, one_sided }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), SdfError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in self.origin.iter().chain(self.spacing.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, SdfError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SdfError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(SdfError::Format(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        let mut b8 = [0u8; 8];
        let mut f = [0.0f64; 6];
        for v in &mut f {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        let n = dims.iter().product::<usize>();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Self::from_values(Vector3::new(f[0], f[1], f[2]), Vector3::new(f[3], f[4], f[5]), dims, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SdfError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SdfError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

pub(crate) fn grid_spacing(bbox: &Aabb, dims: [usize; 3]) -> Result<Vector3<f64>, SdfError> {
    if dims.iter().any(|&d| d < 2) {
        return Err(SdfError::BadResolution(dims));
    }
    let ext = bbox.extent();
    if ext.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(SdfError::BadBbox([ext.x, ext.y, ext.z]));
    }
    Ok(Vector3::new(ext.x / (dims[0] - 1) as f64, ext.y / (dims[1] - 1) as f64, ext.z / (dims[2] - 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> SdfGrid {
        let bbox = Aabb::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0));
        SdfGrid::from_fn(bbox, [5, 5, 5], |p| p.x + 2.0 * p.y - 0.5 * p.z).unwrap()
    }

    #[test]
    fn node_query_returns_stored_value() {
        let g = ramp();
        let p = g.node_position(2, 3, 1);
        assert_eq!(g.query(&p).value, g.node(2, 3, 1));
    }

    #[test]
    fn edge_midpoint_is_mean() {
        let g = ramp();
        let p = (g.node_position(1, 1, 1) + g.node_position(2, 1, 1)) / 2.0;
        let expected = (g.node(1, 1, 1) + g.node(2, 1, 1)) / 2.0;
        assert!((g.query(&p).value - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_field_is_reproduced() {
        let g = ramp();
        let p = Vector3::new(0.33, 0.71, 0.12);
        assert!((g.distance(&p) - (0.33 + 1.42 - 0.06)).abs() < 1e-6);
        let gr = g.gradient(&Vector3::new(0.5, 0.5, 0.5));
        assert!(!gr.one_sided);
        assert!((gr.value - Vector3::new(1.0, 2.0, -0.5)).norm() < 1e-6);
    }

    #[test]
    fn outside_query_is_flagged_and_penalized() {
        let g = ramp();
        let q = g.query(&Vector3::new(1.5, 0.0, 0.0));
        assert!(q.extrapolated);
        assert!((q.value - (1.0 + 0.5)).abs() < 1e-6);
    }

    #[test]
    fn boundary_gradient_is_one_sided() {
        let g = ramp();
        let gr = g.gradient(&Vector3::new(0.0, 0.5, 0.5));
        assert!(gr.one_sided);
        assert!((gr.value.x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let g = ramp();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let h = SdfGrid::read_from(&buf[..]).unwrap();
        assert_eq!(g, h);
        assert!(SdfGrid::read_from(&buf[..10]).is_err());
    }

    #[test]
    fn rejects_tiny_grids() {
        let bbox = Aabb::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0));
        assert!(matches!(SdfGrid::from_fn(bbox, [1, 4, 4], |_| 0.0), Err(SdfError::BadResolution(_))));
    }
}
