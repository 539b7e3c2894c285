use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::geometry::Vec3;
use crate::solver::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    /// Moves along `−axis` by `magnitude` meters over the phase.
    Press,
    Hold,
    /// Translates along `axis` at `magnitude` m/s.
    Shear,
    /// Spins about `axis` through the indenter centre at `magnitude` rad/s.
    Rotate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub kind: PhaseKind,
    /// s
    pub duration: f64,
    #[serde(default)]
    pub magnitude: f64,
    /// Unit vector; defaults to +z for press and rotate, +x for shear.
    #[serde(default)]
    pub axis: Option<[f64; 3]>,
}

impl Phase {
    pub fn axis(&self) -> Vec3 {
        match (self.axis, self.kind) {
            (Some(a), _) => Vec3::from(a),
            (None, PhaseKind::Shear) => Vec3::x(),
            (None, _) => Vec3::z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionScript {
    pub phases: Vec<Phase>,
}

impl MotionScript {
    pub fn duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    /// True if any phase moves the indenter.
    pub fn moves(&self) -> bool {
        self.phases.iter().any(|p| p.kind != PhaseKind::Hold)
    }

    /// Checks durations and axes, and that the total press depth stays
    /// below `thickness`.
    pub fn validate(&self, thickness: f64) -> Result<(), SceneError> {
        let mut depth = 0.0;
        for (k, p) in self.phases.iter().enumerate() {
            let at = |m: String| SceneError::Config(format!("script.phases.{k}: {m}"));
            if !(p.duration > 0.0 && p.duration.is_finite()) {
                return Err(at(format!("duration must be > 0, got {}", p.duration)));
            }
            if !p.magnitude.is_finite() {
                return Err(at("magnitude must be finite".into()));
            }
            if (p.axis().norm() - 1.0).abs() > 1e-9 {
                return Err(at(format!("axis must be a unit vector, got {:?}", p.axis)));
            }
            if p.kind == PhaseKind::Press {
                depth += p.magnitude;
            }
        }
        if depth >= thickness {
            return Err(SceneError::Config(format!(
                "total press depth {depth:e} m is not below the gel thickness {thickness:e} m"
            )));
        }
        Ok(())
    }
}

/// Indenter pose at time `t`, composing the phases in order from `base`.
/// `center` is the indenter centre in its local frame. Times past the end
/// give the final pose.
pub fn script_pose(script: &MotionScript, base: &Pose, center: &Vec3, t: f64) -> Pose {
    let mut pose = *base;
    let mut start = 0.0;
    for p in &script.phases {
        let tau = (t - start).clamp(0.0, p.duration);
        start += p.duration;
        if tau == 0.0 {
            continue;
        }
        let axis = p.axis();
        match p.kind {
            PhaseKind::Hold => {}
            PhaseKind::Press => pose.translation -= axis * (p.magnitude * tau / p.duration),
            PhaseKind::Shear => pose.translation += axis * (p.magnitude * tau),
            PhaseKind::Rotate => {
                let c = pose.apply(center);
                pose = pose.rotated_about(&c, &axis, p.magnitude * tau);
            }
        }
    }
    pose
}
