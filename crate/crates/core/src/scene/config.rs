use std::path::{Path, PathBuf};

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MotionScript, SceneError};
use crate::energy::{ContactParams, MaterialParams};
use crate::geometry::io::{load_tet_mesh, load_tri_mesh, TetFormat, TriFormat};
use crate::geometry::{box_mesh, cylinder_mesh, textured_coin, uv_sphere, CoinRelief, TetMesh, TriMesh, Vec3};
use crate::solver::{Pose, SolverConfig};
use crate::tactile::{MarkerGrid, PlaneSpec, Shading};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GelMesh {
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<TetFormat>,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
        cells: [usize; 3],
    },
    /// Axis along +z with the base at z = 0.
    Cylinder {
        radius: f64,
        thickness: f64,
        cells: usize,
        layers: usize,
    },
}

impl Default for GelMesh {
    fn default() -> Self {
        GelMesh::Cylinder { radius: 0.015, thickness: 0.002, cells: 14, layers: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndenterMesh {
    File {
        path: PathBuf,
    },
    /// Lowest point at the local origin.
    Sphere {
        radius: f64,
        segments: usize,
        rings: usize,
    },
    /// Bottom face at local z = 0.
    Coin {
        radius: f64,
        thickness: f64,
        #[serde(default = "flat")]
        relief: CoinRelief,
        radial: usize,
        segments: usize,
    },
}

fn flat() -> CoinRelief {
    CoinRelief::Flat
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GelConfig {
    #[serde(default)]
    pub mesh: GelMesh,
    #[serde(default = "gel_material")]
    pub material: MaterialParams,
}

fn gel_material() -> MaterialParams {
    MaterialParams::GEL
}

impl Default for GelConfig {
    fn default() -> Self {
        Self { mesh: GelMesh::default(), material: MaterialParams::GEL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndenterConfig {
    pub mesh: IndenterMesh,
    /// Base pose translation (m).
    #[serde(default)]
    pub position: [f64; 3],
    /// Base pose rotation vector (axis times angle, rad).
    #[serde(default)]
    pub rotation: [f64; 3],
    /// kg/m³
    #[serde(default = "indenter_density")]
    pub density: f64,
}

fn indenter_density() -> f64 {
    1000.0
}

impl IndenterConfig {
    pub fn base_pose(&self) -> Pose {
        Pose {
            rotation: Rotation3::new(Vec3::from(self.rotation)).into_inner(),
            translation: Vec3::from(self.position),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    /// Activation distance as a fraction of the scene bounding-box diagonal.
    pub dhat_fraction: f64,
    /// Absolute activation distance (m); takes precedence when set.
    pub dhat: Option<f64>,
    pub kappa: f64,
    pub mu: f64,
    /// m/s
    pub epsv: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            dhat_fraction: 1e-3,
            dhat: None,
            kappa: ContactParams::DEFAULT_KAPPA,
            mu: ContactParams::DEFAULT_MU,
            epsv: ContactParams::DEFAULT_EPSV,
        }
    }
}

/// Selects rest vertices with `(x − point)·normal ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpace {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

impl HalfSpace {
    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (p - Vec3::from(self.point)).dot(&Vec3::from(self.normal).normalize()) >= -tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub states: bool,
    pub heightmaps: bool,
    pub images: bool,
    /// Imaging plane; defaults to a square window centred on the gel
    /// footprint at its base.
    pub plane: Option<PlaneSpec>,
    /// Pixels across the default plane.
    pub resolution: usize,
    /// Height-map PNG quantum (m per unit).
    pub heightmap_scale: f64,
    pub shading: Shading,
    pub markers: Option<MarkerGrid>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            states: true,
            heightmaps: true,
            images: true,
            plane: None,
            resolution: 101,
            heightmap_scale: 1e-7,
            shading: Shading::default(),
            markers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub gel: GelConfig,
    #[serde(default)]
    pub indenter: Option<IndenterConfig>,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// When true the Newton tolerance is 1e-2 scene diagonals per second
    /// instead of `solver.newton_tol`. Set by the loader when the file
    /// gives no tolerance.
    #[serde(skip)]
    pub auto_newton_tol: bool,
    #[serde(default)]
    pub script: MotionScript,
    /// Defaults to the gel's lowest plane, facing down.
    #[serde(default)]
    pub glue: Option<HalfSpace>,
    /// m/s²
    #[serde(default)]
    pub gravity: [f64; 3],
    /// Defaults to the script duration divided by the time step.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Largest indenter vertex motion allowed per step (m); defaults to the
    /// gel thickness.
    #[serde(default)]
    pub max_step_displacement: Option<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl SceneConfig {
    /// Default sensor and solver with no indenter and an empty script.
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            gel: GelConfig::default(),
            indenter: None,
            contact: ContactConfig::default(),
            solver: SolverConfig::default(),
            auto_newton_tol: true,
            script: MotionScript::default(),
            glue: None,
            gravity: [0.0; 3],
            steps: None,
            max_step_displacement: None,
            output: OutputConfig::default(),
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::new()
    }
}

/// Sets the value at a dotted key path, creating objects on the way.
/// `raw` is parsed as JSON and falls back to a string.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), SceneError> {
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(SceneError::Schema { path: key.into(), message: "empty override key segment".into() });
    }
    let mut node = root;
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                let child = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
                if child.is_null() {
                    *child = Value::Object(Default::default());
                }
                child
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| SceneError::Schema {
                    path: parts[..=k].join("."),
                    message: "array index expected".into(),
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| SceneError::Schema {
                    path: parts[..=k].join("."),
                    message: format!("index out of range (length {len})"),
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(SceneError::Schema {
                    path: parts[..k].join("."),
                    message: "cannot descend into a scalar".into(),
                })
            }
        };
    }
    unreachable!()
}

/// Parses a config document with overrides applied, reporting schema
/// violations by key path.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<SceneConfig, SceneError> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| SceneError::Schema { path: String::new(), message: e.to_string() })?;
    for (k, v) in overrides {
        apply_override(&mut value, k, v)?;
    }
    match value.get("schema_version") {
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => {
            return Err(SceneError::Schema {
                path: "schema_version".into(),
                message: format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
            })
        }
        None => return Err(SceneError::Schema { path: "schema_version".into(), message: "missing field".into() }),
    }
    let auto_tol = value.pointer("/solver/newton_tol").is_none();
    let mut cfg: SceneConfig = serde_path_to_error::deserialize(value)
        .map_err(|e| SceneError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    cfg.auto_newton_tol = auto_tol;
    Ok(cfg)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn missing(path: &Path) -> SceneError {
    SceneError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "referenced mesh file does not exist"),
    }
}

pub(crate) fn build_gel(mesh: &GelMesh, base: &Path) -> Result<TetMesh, SceneError> {
    Ok(match mesh {
        GelMesh::File { path, format } => {
            let p = resolve(base, path);
            if !p.exists() && !p.with_extension("node").exists() {
                return Err(missing(&p));
            }
            let format = format
                .or_else(|| TetFormat::from_path(&p))
                .ok_or_else(|| SceneError::Config(format!("cannot infer mesh format of {}", p.display())))?;
            load_tet_mesh(&p, format)?
        }
        GelMesh::Box { min, max, cells } => box_mesh(Vec3::from(*min), Vec3::from(*max), *cells)?,
        GelMesh::Cylinder { radius, thickness, cells, layers } => cylinder_mesh(*radius, *thickness, *cells, *layers)?,
    })
}

pub(crate) fn build_indenter(mesh: &IndenterMesh, base: &Path) -> Result<TriMesh, SceneError> {
    Ok(match mesh {
        IndenterMesh::File { path } => {
            let p = resolve(base, path);
            if !p.exists() {
                return Err(missing(&p));
            }
            load_tri_mesh(&p, TriFormat::Obj)?
        }
        IndenterMesh::Sphere { radius, segments, rings } => {
            uv_sphere(Vec3::new(0.0, 0.0, *radius), *radius, *segments, *rings)?
        }
        IndenterMesh::Coin { radius, thickness, relief, radial, segments } => {
            textured_coin(*radius, *thickness, *relief, *radial, *segments)?
        }
    })
}
