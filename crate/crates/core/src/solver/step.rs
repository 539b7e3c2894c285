//! One implicit-Euler step with kinematic indenter control and friction lag.

use serde::Serialize;

use super::newton::{minimize, Objective};
use super::{candidate_pairs, min_tet_volume, Diagnostics, Pose, SimState, SolverConfig, SolverError, System};
use crate::distances::ccd_toi;
use crate::energy::{compute_xhat, update_friction_lag, AlConstraints};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Default, Serialize)]
pub struct StepReport {
    pub step: u64,
    pub newton_iters: usize,
    /// Objective log of every Newton solve in this step.
    #[serde(skip)]
    pub energy_logs: Vec<Vec<f64>>,
    pub residual: f64,
    pub min_distance: f64,
    pub energy: f64,
    pub al_iterations: usize,
    pub al_residual: f64,
    pub lag_iterations: usize,
    /// Whether the indenter was placed exactly without constraint solves.
    pub indenter_placed: bool,
    pub converged: bool,
}

fn max_change(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max)
}

/// Advances `state` by one step with the indenter driven to `target`.
pub fn step(
    system: &System,
    state: &SimState,
    target: &Pose,
    cfg: &SolverConfig,
) -> Result<(SimState, StepReport), SolverError> {
    cfg.validate()?;
    let h = cfg.h;
    let n = system.num_vertices();
    let x_t = &state.x;
    let mut fixed = system.glued.clone();
    fixed.resize(n, false);

    let n_gel = system.num_gel_vertices();
    let f_ext: Vec<Vec3> =
        (0..n).map(|i| if i < n_gel { system.gravity * system.masses[i] } else { Vec3::zeros() }).collect();
    let v_t: Vec<Vec3> = (0..n).map(|i| if fixed[i] { Vec3::zeros() } else { state.v[i] }).collect();
    let xhat = compute_xhat(x_t, &v_t, h, &system.masses, &f_ext);

    let mut report = StepReport { step: state.step + 1, converged: true, ..Default::default() };
    let mut x = x_t.clone();
    let mut al: Option<AlConstraints> = None;
    if let Some(ind) = &system.indenter {
        let goal = ind.place(target);
        let mut x_goal = x.clone();
        x_goal[ind.vertex_range()].copy_from_slice(&goal);
        let pairs = candidate_pairs(&system.collision, &x, Some(&x_goal), system.contact.dhat);
        if pairs.is_empty() || ccd_toi(&x, &x_goal, &pairs, cfg.ccd_slack)? >= 1.0 {
            x = x_goal;
            for v in ind.vertex_range() {
                fixed[v] = true;
            }
            report.indenter_placed = true;
        } else {
            al = Some(AlConstraints {
                vertices: ind.vertex_range().collect(),
                targets: goal,
                multipliers: vec![Vec3::zeros(); ind.local_vertices.len()],
                penalty: cfg.al_penalty_init,
            });
        }
    }

    let use_friction = system.contact.mu > 0.0;
    let mut lag_x = x_t.clone();
    let mut previous: Option<Vec<Vec3>> = None;
    for _ in 0..cfg.friction_lag_max_iters {
        report.lag_iterations += 1;
        let lag = if use_friction {
            let pairs = candidate_pairs(&system.collision, &lag_x, None, system.contact.dhat);
            Some(update_friction_lag(&lag_x, x_t, &pairs, &system.contact)?)
        } else {
            None
        };
        for _ in 0..cfg.al_max_iters {
            let obj = Objective { system, xhat: &xhat, h, lag: lag.as_ref(), al: al.as_ref(), fixed: &fixed };
            let r = minimize(&obj, x, cfg)?;
            report.newton_iters += r.iterations;
            report.residual = r.residual;
            report.min_distance = r.min_distance;
            report.energy = *r.energies.last().unwrap_or(&0.0);
            report.converged &= r.converged;
            report.energy_logs.push(r.energies);
            x = r.x;
            let Some(c) = al.as_mut() else { break };
            report.al_iterations += 1;
            report.al_residual = c.residual(&x);
            if report.al_residual < cfg.al_tol {
                break;
            }
            c.update_multipliers(&x);
            c.penalty *= cfg.al_penalty_growth;
        }
        let change = previous.as_ref().map_or(f64::INFINITY, |p| max_change(p, &x));
        if !use_friction || change < cfg.friction_lag_tol {
            break;
        }
        previous = Some(x.clone());
        lag_x = x.clone();
    }
    if let Some(c) = &al {
        if report.al_residual >= cfg.al_tol {
            log::warn!("indenter constraint residual {:e} m exceeds tolerance {:e} m", report.al_residual, cfg.al_tol);
        }
        debug_assert_eq!(c.vertices.len(), c.targets.len());
    }

    let min_vol = min_tet_volume(&system.gel, &x);
    if !(min_vol > 0.0) {
        return Err(SolverError::Invariant(format!("inverted tet after step (min volume {min_vol:e})")));
    }
    if !(report.min_distance > 0.0) {
        return Err(SolverError::Invariant(format!("contact distance {} after step", report.min_distance)));
    }

    let v: Vec<Vec3> = x.iter().zip(x_t).map(|(a, b)| (a - b) / h).collect();
    let next = SimState {
        x,
        v,
        indenter_pose: *target,
        time: state.time + h,
        step: state.step + 1,
        diagnostics: Diagnostics {
            newton_iters: report.newton_iters,
            residual: report.residual,
            min_distance: report.min_distance,
        },
    };
    Ok((next, report))
}
