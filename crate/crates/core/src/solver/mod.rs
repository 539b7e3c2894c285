//! Implicit-Euler time stepping: projected Newton with CCD-filtered line
//! search, augmented-Lagrangian kinematic control and lagged friction.

mod linalg;
mod newton;
mod step;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distances::{DistanceError, PairIndex, PairKind};
use crate::energy::{ContactParams, EnergyError, MaterialParams};
use crate::geometry::{broadphase_pairs, signed_volume, CollisionMesh, TetMesh, Vec3};

pub use linalg::{solve_spd, spd_project, spd_project12, SymTriplets};
pub use newton::{filtered_line_search, minimize, MinimizeReport, Objective};
pub use step::{step, StepReport};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("line search failed: {0}")]
    LineSearch(String),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("state invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Time step (s).
    pub h: f64,
    /// Convergence threshold on ‖Δx‖∞ / h (m/s).
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub line_search_shrink: f64,
    /// N/m
    pub al_penalty_init: f64,
    pub al_penalty_growth: f64,
    /// m
    pub al_tol: f64,
    pub al_max_iters: usize,
    pub friction_lag_max_iters: usize,
    /// m
    pub friction_lag_tol: f64,
    pub ccd_slack: f64,
    /// Above this many unknowns the linear solve switches to PCG.
    pub direct_solver_max_dofs: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h: 0.01,
            newton_tol: 1e-4,
            max_newton_iters: 200,
            line_search_shrink: 0.5,
            al_penalty_init: 1e4,
            al_penalty_growth: 2.0,
            al_tol: 1e-6,
            al_max_iters: 10,
            friction_lag_max_iters: 4,
            friction_lag_tol: 1e-6,
            ccd_slack: crate::distances::DEFAULT_CCD_SLACK,
            direct_solver_max_dofs: 300_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.h > 0.0) {
            return bad("h must be > 0");
        }
        if !(self.newton_tol > 0.0 && self.al_tol > 0.0 && self.friction_lag_tol > 0.0) {
            return bad("tolerances must be > 0");
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return bad("line_search_shrink must be in (0, 1)");
        }
        if !(self.ccd_slack > 0.0 && self.ccd_slack < 1.0) {
            return bad("ccd_slack must be in (0, 1)");
        }
        if !(self.al_penalty_init > 0.0 && self.al_penalty_growth >= 1.0) {
            return bad("al_penalty_init must be > 0 and al_penalty_growth >= 1");
        }
        if self.max_newton_iters == 0 || self.al_max_iters == 0 || self.friction_lag_max_iters == 0 {
            return bad("iteration caps must be positive");
        }
        Ok(())
    }
}

/// Rigid transform `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Rotation by `angle` about the axis `dir` through `center`, then `self`.
    pub fn rotated_about(&self, center: &Vec3, dir: &Vec3, angle: f64) -> Self {
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*dir), angle).into_inner();
        Self { rotation: r * self.rotation, translation: r * (self.translation - center) + center }
    }

    /// Row-major rotation followed by the translation.
    pub fn to_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_array(a: &[f64; 12]) -> Self {
        Self {
            rotation: Matrix3::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]),
            translation: Vec3::new(a[9], a[10], a[11]),
        }
    }
}

/// Kinematic rigid indenter: its surface vertices occupy the global index
/// range `offset..offset + local_vertices.len()`.
#[derive(Debug, Clone)]
pub struct Indenter {
    pub offset: usize,
    pub local_vertices: Vec<Vec3>,
    /// Triangles in local indices.
    pub triangles: Vec<[usize; 3]>,
}

impl Indenter {
    pub fn vertex_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.local_vertices.len()
    }

    pub fn place(&self, pose: &Pose) -> Vec<Vec3> {
        self.local_vertices.iter().map(|p| pose.apply(p)).collect()
    }
}

/// Everything about the simulated system that stays fixed over time.
#[derive(Debug, Clone)]
pub struct System {
    pub gel: TetMesh,
    pub material: MaterialParams,
    pub contact: ContactParams,
    pub collision: CollisionMesh,
    /// Per global vertex.
    pub masses: Vec<f64>,
    /// Gel vertices held at their rest positions.
    pub glued: Vec<bool>,
    pub indenter: Option<Indenter>,
    pub gravity: Vec3,
}

impl System {
    pub fn num_vertices(&self) -> usize {
        self.masses.len()
    }

    pub fn num_gel_vertices(&self) -> usize {
        self.gel.vertices.len()
    }

    /// Positions at rest with the indenter at `pose`.
    pub fn initial_positions(&self, pose: &Pose) -> Vec<Vec3> {
        let mut x = self.gel.vertices.clone();
        if let Some(ind) = &self.indenter {
            x.extend(ind.place(pose));
        }
        x
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub newton_iters: usize,
    pub residual: f64,
    pub min_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub indenter_pose: Pose,
    pub time: f64,
    pub step: u64,
    pub diagnostics: Diagnostics,
}

impl SimState {
    pub fn at_rest(system: &System, pose: Pose) -> Self {
        let x = system.initial_positions(&pose);
        let v = vec![Vec3::zeros(); x.len()];
        Self { x, v, indenter_pose: pose, time: 0.0, step: 0, diagnostics: Diagnostics::default() }
    }
}

/// Converts broad-phase candidates into distance-kernel pairs.
pub fn candidate_pairs(mesh: &CollisionMesh, x0: &[Vec3], x1: Option<&[Vec3]>, margin: f64) -> Vec<PairIndex> {
    let c = broadphase_pairs(mesh, x0, x1, margin);
    let mut out = Vec::with_capacity(c.len());
    for &(p, f) in &c.pt {
        let t = mesh.faces[f];
        out.push(PairIndex { kind: PairKind::PointTriangle, indices: [p, t[0], t[1], t[2]] });
    }
    for &(a, b) in &c.ee {
        let (ea, eb) = (mesh.edges[a], mesh.edges[b]);
        out.push(PairIndex { kind: PairKind::EdgeEdge, indices: [ea[0], ea[1], eb[0], eb[1]] });
    }
    out
}

/// Minimum distance over all non-adjacent surface pairs closer than
/// `search`; `f64::INFINITY` if there are none.
pub fn min_pair_distance(mesh: &CollisionMesh, x: &[Vec3], search: f64) -> Result<f64, DistanceError> {
    let mut best = f64::INFINITY;
    for p in candidate_pairs(mesh, x, None, search) {
        best = best.min(p.evaluate(x)?.d2.sqrt());
    }
    Ok(best)
}

pub fn min_tet_volume(mesh: &TetMesh, x: &[Vec3]) -> f64 {
    mesh.tets.iter().map(|t| signed_volume(x, t)).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_roundtrip_and_rotation() {
        let p = Pose::identity().rotated_about(&Vec3::new(1.0, 0.0, 0.0), &Vec3::z(), std::f64::consts::FRAC_PI_2);
        let q = p.apply(&Vec3::new(2.0, 0.0, 0.0));
        assert!((q - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-15);
        assert!((p.apply(&Vec3::new(1.0, 0.0, 5.0)) - Vec3::new(1.0, 0.0, 5.0)).norm() < 1e-15);
        assert_eq!(Pose::from_array(&p.to_array()), p);
    }

    #[test]
    fn config_validation() {
        SolverConfig::default().validate().unwrap();
        assert!(SolverConfig { line_search_shrink: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { newton_tol: 0.0, ..Default::default() }.validate().is_err());
    }
}
