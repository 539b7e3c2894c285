//! Energy terms of the incremental potential with exact derivatives.

mod barrier;
mod elastic;
mod friction;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distances::{DistanceError, Hess12};

pub use barrier::{barrier_energy, barrier_value, barrier_value_only, BarrierEval};
pub use elastic::{
    elastic_energy, elastic_value, neo_hookean_density, neo_hookean_hessian, neo_hookean_stress,
    tet_deformation_gradient,
};
pub use friction::{
    friction_energy, friction_f0, friction_f1, friction_value, update_friction_lag, FrictionLag, LaggedPair,
};

type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid contact parameters: {0}")]
    InvalidContact(String),
    #[error("contact pair {indices:?} has non-positive squared distance {d2:e}")]
    Intersecting { indices: [usize; 4], d2: f64 },
    #[error("barrier evaluated at non-positive squared distance {0:e}")]
    NonPositiveDistance(f64),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Pa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m³
    pub density: f64,
}

impl MaterialParams {
    /// Gel values measured for the sensor elastomer.
    pub const GEL: MaterialParams = MaterialParams { youngs_modulus: 1.23e5, poisson_ratio: 0.43, density: 1.01e3 };

    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.youngs_modulus > 0.0) {
            return Err(EnergyError::InvalidMaterial(format!(
                "youngs_modulus must be > 0, got {}",
                self.youngs_modulus
            )));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(EnergyError::InvalidMaterial(format!(
                "poisson_ratio must be in (0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.density > 0.0) {
            return Err(EnergyError::InvalidMaterial(format!("density must be > 0, got {}", self.density)));
        }
        Ok(())
    }

    pub fn lame_mu(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    pub fn lame_lambda(&self) -> f64 {
        let nu = self.poisson_ratio;
        self.youngs_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Activation distance in meters.
    pub dhat: f64,
    pub kappa: f64,
    /// Friction coefficient.
    pub mu: f64,
    /// Sliding speed below which friction is smoothed toward static (m/s).
    pub epsv: f64,
}

impl ContactParams {
    pub const DEFAULT_KAPPA: f64 = 1e6;
    pub const DEFAULT_MU: f64 = 0.5;
    pub const DEFAULT_EPSV: f64 = 1e-3;

    pub fn validate(&self) -> Result<(), EnergyError> {
        let bad = |m: String| Err(EnergyError::InvalidContact(m));
        if !(self.dhat > 0.0) {
            return bad(format!("dhat must be > 0, got {}", self.dhat));
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa must be > 0, got {}", self.kappa));
        }
        if !(self.mu >= 0.0) {
            return bad(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(self.epsv > 0.0) {
            return bad(format!("epsv must be > 0, got {}", self.epsv));
        }
        Ok(())
    }
}

/// Local Hessian over four vertices (12 coordinates). Unused slots of
/// pairs with fewer distinct vertices carry zero rows.
#[derive(Debug, Clone)]
pub struct LocalHessian {
    pub indices: [usize; 4],
    pub matrix: Hess12,
}

/// `½ Σ mᵢ ‖xᵢ − x̂ᵢ‖²`, its gradient, and the diagonal of the mass matrix
/// (one entry per vertex, shared by its three coordinates).
pub fn inertia_energy(x: &[Vec3], xhat: &[Vec3], masses: &[f64]) -> (f64, Vec<Vec3>, Vec<f64>) {
    let grad: Vec<Vec3> = x.iter().zip(xhat).zip(masses).map(|((a, b), m)| (a - b) * *m).collect();
    (inertia_value(x, xhat, masses), grad, masses.to_vec())
}

pub fn inertia_value(x: &[Vec3], xhat: &[Vec3], masses: &[f64]) -> f64 {
    x.iter().zip(xhat).zip(masses).map(|((a, b), m)| 0.5 * m * (a - b).norm_squared()).sum()
}

/// Implicit-Euler predictor `x_t + h v_t + h² M⁻¹ f_ext`.
pub fn compute_xhat(x_t: &[Vec3], v_t: &[Vec3], h: f64, masses: &[f64], f_ext: &[Vec3]) -> Vec<Vec3> {
    (0..x_t.len()).map(|i| x_t[i] + h * v_t[i] + (h * h / masses[i]) * f_ext[i]).collect()
}

/// Augmented-Lagrangian term for position constraints `x_c = x̄_c`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlConstraints {
    pub vertices: Vec<usize>,
    pub targets: Vec<Vec3>,
    pub multipliers: Vec<Vec3>,
    pub penalty: f64,
}

impl AlConstraints {
    pub fn residual(&self, x: &[Vec3]) -> f64 {
        self.vertices.iter().zip(&self.targets).map(|(&v, t)| (x[v] - t).norm()).fold(0.0, f64::max)
    }

    /// Multiplier update `λ ← λ − k (x − x̄)`.
    pub fn update_multipliers(&mut self, x: &[Vec3]) {
        for ((lam, &v), t) in self.multipliers.iter_mut().zip(&self.vertices).zip(&self.targets) {
            *lam -= self.penalty * (x[v] - t);
        }
    }
}

/// Value, per-constraint gradient (aligned with `c.vertices`) and the scalar
/// diagonal Hessian `penalty`.
pub fn augmented_lagrangian_energy(x: &[Vec3], c: &AlConstraints) -> (f64, Vec<Vec3>, f64) {
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(c.vertices.len());
    for ((&v, t), lam) in c.vertices.iter().zip(&c.targets).zip(&c.multipliers) {
        let r = x[v] - t;
        value += -lam.dot(&r) + 0.5 * c.penalty * r.norm_squared();
        grad.push(-lam + c.penalty * r);
    }
    (value, grad, c.penalty)
}

pub fn augmented_lagrangian_value(x: &[Vec3], c: &AlConstraints) -> f64 {
    augmented_lagrangian_energy(x, c).0
}
