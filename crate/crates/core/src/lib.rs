//! Finite element simulation of optical tactile sensor elastomers.
//!
//! A tetrahedral gel is advanced by implicit Euler with a log-barrier
//! contact model against a scripted rigid indenter. Each step minimizes the
//! incremental potential with projected Newton and a CCD-filtered line
//! search, so every state is free of intersections and inverted elements.
//! The deformed surface is turned into height maps, shaded pseudo images and
//! marker displacements.
//!
//! ```no_run
//! use std::path::Path;
//! use tacsim::scene::{load_scene, run};
//!
//! let scene = load_scene(Path::new("scenarios/press.json"), &[]).unwrap();
//! let out = run(&scene, scene.steps, Some(Path::new("out"))).unwrap();
//! println!("min distance {:e} m", out.summary.min_distance);
//! ```

pub mod cli;
pub mod distances;
pub mod energy;
pub mod geometry;
pub mod scene;
pub mod solver;
pub mod tactile;

use std::path::PathBuf;

use thiserror::Error;

/// Any error raised by the library or the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Distance(#[from] distances::DistanceError),
    #[error(transparent)]
    Energy(#[from] energy::EnergyError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Scene(#[from] scene::SceneError),
    #[error(transparent)]
    Tactile(#[from] tactile::TactileError),
}
