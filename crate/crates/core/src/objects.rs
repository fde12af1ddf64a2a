//! Test-object registry.
//!
//! Each entry carries the evaluation parameters of a benchmark object
//! (symmetry class, end-effector height, reference diameter) and a
//! procedural stand-in mesh with matching overall dimensions. A mesh file can
//! be supplied instead through [`ObjectSpec::with_mesh_path`].

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::PathBuf;

use nalgebra::{Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::primitives::{circle, cuboid, cylinder, loft, prism, rectangle, superellipse, Ring};
use crate::mesh::{load_mesh, MeshError, TriangleMesh};
use crate::sdf::Aabb;

#[derive(Debug, Error)]
pub enum ObjectError {
    #[error("unknown object '{0}'")]
    Unknown(String),
    #[error("object {id} has no built-in mesh; pass a mesh file")]
    NoMesh { id: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    None,
    Discrete,
    Continuous,
}

impl Symmetry {
    pub fn is_symmetric(self) -> bool {
        self != Symmetry::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub name: String,
    pub symmetry: Symmetry,
    /// End-effector flange height for this object (m).
    pub z_ee: f64,
    /// Reference diameter used to normalize pose errors (m).
    pub d_obj: f64,
    /// Centre and extent of the SDF grid box (m).
    pub grid_center: [f64; 3],
    pub grid_extent: [f64; 3],
    pub mesh_path: Option<PathBuf>,
}

impl ObjectSpec {
    /// Period of the heading: π for symmetric objects, 2π otherwise.
    pub fn theta_period(&self) -> f64 {
        if self.symmetry.is_symmetric() {
            PI
        } else {
            TAU
        }
    }

    /// Upper bound of the heading workspace.
    pub fn theta_max(&self) -> f64 {
        self.theta_period()
    }

    /// ADD-S for symmetric objects, ADD otherwise.
    pub fn uses_add_s(&self) -> bool {
        self.symmetry.is_symmetric()
    }

    pub fn grid_box(&self) -> Aabb {
        Aabb::centered(Vector3::from(self.grid_center), Vector3::from(self.grid_extent))
    }

    pub fn with_mesh_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.mesh_path = Some(path.into());
        self
    }

    /// Short file-system friendly label, e.g. `035_power_drill`.
    pub fn slug(&self) -> String {
        format!("{}_{}", self.id, self.name.to_lowercase().replace([' ', '\''], "_").replace("__", "_"))
    }

    /// The object mesh in its own frame: centred in x/y, resting on z = 0.
    pub fn mesh(&self) -> Result<TriangleMesh, ObjectError> {
        if let Some(path) = &self.mesh_path {
            return Ok(load_mesh(path)?);
        }
        builtin_mesh(&self.id).ok_or_else(|| ObjectError::NoMesh { id: self.id.clone() })
    }
}

const DEFAULT_EXTENT: [f64; 3] = [0.4, 0.4, 0.3];
const DEFAULT_CENTER: [f64; 3] = [0.0, 0.0, 0.1];

fn spec(id: &str, name: &str, symmetry: Symmetry, z_ee: f64, d_obj: f64) -> ObjectSpec {
    ObjectSpec {
        id: id.into(),
        name: name.into(),
        symmetry,
        z_ee,
        d_obj,
        grid_center: DEFAULT_CENTER,
        grid_extent: DEFAULT_EXTENT,
        mesh_path: None,
    }
}

/// All known objects.
pub fn registry() -> Vec<ObjectSpec> {
    use Symmetry::*;
    let mut bulky = spec("001", "Bulky box", Discrete, 0.30, 0.4573);
    bulky.grid_extent = [0.6, 0.6, 0.3];
    bulky.grid_center = [0.0, 0.0, 0.12];
    vec![
        bulky,
        spec("002", "Master chef can", Continuous, 0.20, 0.1720),
        spec("003", "Cracker box", Discrete, 0.20, 0.2695),
        spec("006", "Mustard bottle", Discrete, 0.20, 0.1965),
        spec("019", "Pitcher base", None, 0.30, 0.2595),
        spec("024", "Bowl", Continuous, 0.20, 0.1620),
        spec("025", "Mug", None, 0.20, 0.1250),
        spec("035", "Power drill", None, 0.18, 0.2263),
        spec("036", "Scanned drill", None, 0.18, 0.2388),
        spec("061", "Foam brick", Discrete, 0.20, 0.1030),
        spec("077", "Rubik's cube", Discrete, 0.20, 0.0956),
    ]
}

/// Looks an object up by id (`"035"`), slug (`"035_power_drill"`) or name
/// (`"power drill"`, `"drill"`), case-insensitively.
pub fn lookup(key: &str) -> Result<ObjectSpec, ObjectError> {
    let k = key.trim().to_lowercase();
    let all = registry();
    let hit = all.iter().find(|o| o.id == k || o.slug() == k || o.name.to_lowercase() == k).or_else(|| {
        let short = k.replace('_', " ");
        let hits: Vec<&ObjectSpec> = all.iter().filter(|o| o.name.to_lowercase().contains(&short)).collect();
        // A partial name shared with a mesh-less entry means the one we can build.
        let buildable: Vec<&ObjectSpec> = hits.iter().copied().filter(|o| builtin_mesh(&o.id).is_some()).collect();
        match (hits.as_slice(), buildable.as_slice()) {
            ([o], _) | (_, [o]) => Some(*o),
            _ => None,
        }
    });
    hit.cloned().ok_or_else(|| ObjectError::Unknown(key.to_string()))
}

const SEG: usize = 48;

fn upright_box(x: f64, y: f64, z: f64) -> TriangleMesh {
    cuboid(Vector3::new(x, y, z)).translated(Vector3::new(0.0, 0.0, z / 2.0))
}

fn builtin_mesh(id: &str) -> Option<TriangleMesh> {
    let mesh = match id {
        "001" => upright_box(0.32, 0.24, 0.20),
        "002" => cylinder(0.051, 0.14, SEG),
        "003" => upright_box(0.16, 0.06, 0.21),
        "006" => mustard_bottle(),
        "019" => pitcher(),
        "024" => loft(&[Ring { z: 0.0, outline: circle(0.035, SEG) }, Ring { z: 0.055, outline: circle(0.081, SEG) }]),
        "025" => mug(),
        "035" => power_drill(),
        "061" => upright_box(0.05, 0.075, 0.05),
        "077" => upright_box(0.057, 0.057, 0.057),
        _ => return None,
    };
    Some(mesh)
}

/// Rounded-rectangle bottle body with a tapering shoulder and a cap.
fn mustard_bottle() -> TriangleMesh {
    let ring = |z: f64, a: f64, b: f64, p: f64| Ring { z, outline: superellipse(a, b, p, SEG) };
    loft(&[
        ring(0.0, 0.046, 0.030, 3.0),
        ring(0.13, 0.048, 0.031, 3.0),
        ring(0.16, 0.032, 0.024, 2.5),
        ring(0.175, 0.014, 0.014, 2.0),
        ring(0.19, 0.012, 0.012, 2.0),
    ])
}

/// Cylindrical cup with a solid handle on +x.
fn mug() -> TriangleMesh {
    let body = cylinder(0.041, 0.083, SEG);
    let handle = prism(
        vec![Vector2::new(0.03, -0.008), Vector2::new(0.072, -0.008), Vector2::new(0.072, 0.008), Vector2::new(0.03, 0.008)],
        0.012,
        0.07,
    );
    TriangleMesh::merge(&[body, handle])
}

/// Wide cylinder with a flat handle block.
fn pitcher() -> TriangleMesh {
    let body = loft(&[Ring { z: 0.0, outline: circle(0.07, SEG) }, Ring { z: 0.24, outline: circle(0.06, SEG) }]);
    let handle = prism(rectangle(0.07, 0.025), 0.06, 0.2).translated(Vector3::new(0.085, 0.0, 0.0));
    TriangleMesh::merge(&[body, handle])
}

/// Battery pack, grip, motor housing and chuck as overlapping parts.
fn power_drill() -> TriangleMesh {
    let battery = prism(rectangle(0.09, 0.065), 0.0, 0.04).translated(Vector3::new(0.015, 0.0, 0.0));
    let grip = prism(rectangle(0.04, 0.03), 0.035, 0.12);
    let housing = prism(superellipse(0.065, 0.028, 3.0, SEG), 0.11, 0.16).translated(Vector3::new(0.025, 0.0, 0.0));
    let chuck = cylinder(0.015, 0.03, SEG)
        .transformed(&Rotation3::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2), Vector3::new(0.085, 0.0, 0.135));
    TriangleMesh::merge(&[battery, grip, housing, chuck])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_id_name_and_slug() {
        assert_eq!(lookup("035").unwrap().name, "Power drill");
        // Ambiguous with the scanned drill, which has no built-in mesh.
        assert_eq!(lookup("drill").unwrap().id, "035");
        assert_eq!(lookup("box").unwrap_err().to_string(), "unknown object 'box'");
        assert_eq!(lookup("power drill").unwrap().id, "035");
        assert_eq!(lookup("mustard").unwrap().id, "006");
        assert_eq!(lookup("025_mug").unwrap().id, "025");
        assert_eq!(lookup("mug").unwrap().z_ee, 0.20);
    }

    #[test]
    fn symmetric_objects_use_half_turn() {
        assert_eq!(lookup("003").unwrap().theta_max(), PI);
        assert_eq!(lookup("035").unwrap().theta_max(), TAU);
        assert!(lookup("002").unwrap().uses_add_s());
        assert!(!lookup("025").unwrap().uses_add_s());
    }

    #[test]
    fn builtin_meshes_are_closed_and_fit_their_grid() {
        for o in registry() {
            let Ok(mesh) = o.mesh() else {
                assert_eq!(o.id, "036");
                continue;
            };
            mesh.validate_watertight().unwrap_or_else(|e| panic!("{}: {e}", o.id));
            let (lo, hi) = mesh.bounds().unwrap();
            let b = o.grid_box();
            assert!(b.contains(&lo) && b.contains(&hi), "{}", o.id);
            // Stand-ins approximate the reference size.
            let d = mesh.diameter();
            assert!((d / o.d_obj - 1.0).abs() < 0.2, "{}: {d} vs {}", o.id, o.d_obj);
        }
    }
}
