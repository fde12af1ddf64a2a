//! OBJ and STL mesh ingestion.

use super::{MeshError, TriangleMesh};
use nalgebra::Vector3;
use std::collections::HashMap;
use std::path::Path;

/// Loads a mesh, choosing the parser from the file extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, MeshError> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("obj") => load_obj(path),
        Some("stl") => load_stl(path),
        other => Err(MeshError::UnsupportedFormat(other.unwrap_or("<none>").to_string())),
    }
}

pub fn load_obj(path: &Path) -> Result<TriangleMesh, MeshError> {
    parse_obj(&std::fs::read_to_string(path)?)
}

/// Parses Wavefront OBJ `v` and `f` records; polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let err = |message: &str| MeshError::Parse { line: lineno + 1, message: message.to_string() };
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|_| err("bad vertex coordinate")))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates"));
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|tok| {
                        let raw: i64 = tok
                            .split('/')
                            .next()
                            .unwrap_or("")
                            .parse()
                            .map_err(|_| err("bad face index"))?;
                        let resolved = if raw < 0 { vertices.len() as i64 + raw } else { raw - 1 };
                        if resolved < 0 {
                            return Err(err("face index out of range"));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(err("face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mesh = TriangleMesh::new(vertices, triangles);
    mesh.check_indices()?;
    Ok(mesh)
}

pub fn load_stl(path: &Path) -> Result<TriangleMesh, MeshError> {
    parse_stl(&std::fs::read(path)?)
}

/// Parses binary or ASCII STL, welding bit-identical vertices.
pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let mut soup: Vec<[Vector3<f64>; 3]> = Vec::new();
    let binary_len = |n: usize| 84 + 50 * n;
    let is_binary = bytes.len() >= 84 && {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        bytes.len() == binary_len(n)
    };
    if is_binary {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        for t in 0..n {
            let rec = &bytes[84 + 50 * t..84 + 50 * (t + 1)];
            let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64;
            let v = |k: usize| Vector3::new(f(12 + 12 * k), f(16 + 12 * k), f(20 + 12 * k));
            soup.push([v(0), v(1), v(2)]);
        }
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| MeshError::Parse { line: 0, message: "neither binary nor ASCII STL".into() })?;
        let mut current = Vec::with_capacity(3);
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            if parts.next() == Some("vertex") {
                let c: Vec<f64> = parts
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| MeshError::Parse { line: lineno + 1, message: "bad vertex".into() })?;
                if c.len() != 3 {
                    return Err(MeshError::Parse { line: lineno + 1, message: "bad vertex".into() });
                }
                current.push(Vector3::new(c[0], c[1], c[2]));
                if current.len() == 3 {
                    soup.push([current[0], current[1], current[2]]);
                    current.clear();
                }
            }
        }
    }
    let mut index: HashMap<[u64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(soup.len());
    for tri in soup {
        let mut t = [0u32; 3];
        for (k, v) in tri.iter().enumerate() {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            t[k] = *index.entry(key).or_insert_with(|| {
                vertices.push(*v);
                (vertices.len() - 1) as u32
            });
        }
        triangles.push(t);
    }
    let mesh = TriangleMesh::new(vertices, triangles);
    mesh.check_indices()?;
    Ok(mesh)
}

/// Binary STL bytes for a mesh (used by tests and the examples).
pub fn write_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for i in 0..mesh.triangles.len() {
        let tri = mesh.triangle(i);
        out.extend_from_slice(&[0u8; 12]);
        for v in tri {
            for c in [v.x, v.y, v.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0u8; 2]);
    }
    out
}
