//! Meshes, mesh file IO, procedural fixtures and broad-phase culling.

use std::path::PathBuf;

use thiserror::Error;

pub mod broadphase;
pub mod io;
pub mod mesh;
pub mod mesher;

pub use broadphase::{broadphase_pairs, Aabb, Bvh, Candidates, CollisionMesh};
pub use io::{load_tet_mesh, load_tri_mesh, TetFormat, TriFormat};
pub use mesh::{bounds, lump_masses, signed_volume, TetMesh, TriMesh, Vec3};
pub use mesher::{box_mesh, box_tets, cylinder_mesh, textured_coin, uv_sphere, CoinRelief};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("element {element} references vertex {index}, but there are only {count} vertices")]
    IndexOutOfRange { element: usize, index: usize, count: usize },
    #[error("tet {tet} has zero volume")]
    ZeroVolume { tet: usize },
    #[error("{path}:{line}: face has {vertices} vertices, only triangles are supported")]
    NonTriangleFace { path: PathBuf, line: usize, vertices: usize },
    #[error("triangle {triangle} is degenerate")]
    DegenerateTriangle { triangle: usize },
    #[error("surface is not closed: edge {edge:?} is used by {count} triangles")]
    NotWatertight { edge: [usize; 2], count: usize },
    #[error("{0}")]
    InvalidParameter(String),
}
