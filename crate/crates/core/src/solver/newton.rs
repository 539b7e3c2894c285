//! Projected Newton minimization of the incremental potential.

use rayon::prelude::*;

use super::linalg::{solve_spd, spd_project12, SymTriplets};
use super::{candidate_pairs, SolverConfig, SolverError, System};
use crate::distances::{ccd_toi, PairIndex};
use crate::energy::{
    augmented_lagrangian_energy, augmented_lagrangian_value, barrier_energy, barrier_value_only, elastic_energy,
    elastic_value, friction_energy, friction_value, inertia_value, AlConstraints, FrictionLag, LocalHessian,
};
use crate::geometry::{signed_volume, Vec3};

/// `½‖x − x̂‖²_M + h²Φ(x) + B(x) + D(x) + AL(x)` with some vertices held.
pub struct Objective<'a> {
    pub system: &'a System,
    pub xhat: &'a [Vec3],
    pub h: f64,
    pub lag: Option<&'a FrictionLag>,
    pub al: Option<&'a AlConstraints>,
    /// Vertices whose positions are not unknowns.
    pub fixed: &'a [bool],
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub x: Vec<Vec3>,
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub energies: Vec<f64>,
    pub converged: bool,
    /// Last ‖Δx‖∞ / h.
    pub residual: f64,
    pub min_distance: f64,
}

impl Objective<'_> {
    /// Objective value and the smallest squared pair distance.
    pub fn value(&self, x: &[Vec3], pairs: &[PairIndex]) -> Result<(f64, f64), SolverError> {
        let s = self.system;
        let (b, min_d2) = barrier_value_only(x, pairs, &s.contact)?;
        let mut e = inertia_value(x, self.xhat, &s.masses);
        e += self.h * self.h * elastic_value(&s.gel, x, &s.material);
        e += b;
        if let Some(lag) = self.lag {
            e += friction_value(x, lag, &s.contact, self.h);
        }
        if let Some(al) = self.al {
            e += augmented_lagrangian_value(x, al);
        }
        Ok((e, min_d2))
    }

    fn dof_map(&self) -> (Vec<Option<usize>>, usize) {
        let mut n = 0;
        let map = self
            .fixed
            .iter()
            .map(|&f| {
                if f {
                    None
                } else {
                    n += 3;
                    Some(n - 3)
                }
            })
            .collect();
        (map, n)
    }

    /// Gradient over the free coordinates and the projected Hessian.
    fn assemble(
        &self,
        x: &[Vec3],
        pairs: &[PairIndex],
        dof: &[Option<usize>],
        n: usize,
    ) -> Result<(Vec<f64>, SymTriplets, f64), SolverError> {
        let s = self.system;
        let h2 = self.h * self.h;
        let mut grad: Vec<Vec3> = x.iter().zip(self.xhat).zip(&s.masses).map(|((a, b), m)| (a - b) * *m).collect();
        let mut t = SymTriplets::new(n);
        for (v, d) in dof.iter().enumerate() {
            if let Some(d) = d {
                for k in 0..3 {
                    t.push(d + k, d + k, s.masses[v]);
                }
            }
        }

        let (_, ge, he) = elastic_energy(&s.gel, x, &s.material);
        let be = barrier_energy(x, pairs, &s.contact)?;
        for (g, (a, b)) in grad.iter_mut().zip(ge.iter().zip(&be.grad)) {
            *g += a * h2 + b;
        }
        push_blocks(&mut t, &he, dof, h2, true);
        push_blocks(&mut t, &be.hessians, dof, 1.0, true);

        if let Some(lag) = self.lag {
            let (_, gf, hf) = friction_energy(x, lag, &s.contact, self.h);
            for (g, f) in grad.iter_mut().zip(&gf) {
                *g += f;
            }
            push_blocks(&mut t, &hf, dof, 1.0, false);
        }
        if let Some(al) = self.al {
            let (_, ga, k) = augmented_lagrangian_energy(x, al);
            for (&v, g) in al.vertices.iter().zip(&ga) {
                grad[v] += g;
                if let Some(d) = dof[v] {
                    for c in 0..3 {
                        t.push(d + c, d + c, k);
                    }
                }
            }
        }

        let mut g = vec![0.0; n];
        for (v, d) in dof.iter().enumerate() {
            if let Some(d) = d {
                g[*d..*d + 3].copy_from_slice(grad[v].as_slice());
            }
        }
        Ok((g, t, be.min_d2))
    }
}

fn push_blocks(t: &mut SymTriplets, blocks: &[LocalHessian], dof: &[Option<usize>], scale: f64, project: bool) {
    let parts: Vec<Vec<(usize, usize, f64)>> = blocks
        .par_iter()
        .map(|b| {
            let m = if project { spd_project12(&b.matrix) } else { b.matrix };
            let mut out = Vec::with_capacity(78);
            for (i, &vi) in b.indices.iter().enumerate() {
                let Some(di) = dof[vi] else { continue };
                for (j, &vj) in b.indices.iter().enumerate() {
                    let Some(dj) = dof[vj] else { continue };
                    for r in 0..3 {
                        for c in 0..3 {
                            let v = m[(3 * i + r, 3 * j + c)] * scale;
                            if di + r >= dj + c && v != 0.0 {
                                out.push((di + r, dj + c, v));
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    for p in parts {
        t.entries.extend(p);
    }
}

fn volumes_positive(system: &System, x: &[Vec3]) -> bool {
    system.gel.tets.par_iter().all(|t| signed_volume(x, t) > 0.0)
}

/// Backtracking search along `dx` from the CCD-safe upper bound. Returns the
/// accepted step, its objective value and the new positions, or `None` when
/// no decrease was found within 64 reductions.
pub fn filtered_line_search(
    obj: &Objective,
    x: &[Vec3],
    dx: &[Vec3],
    cfg: &SolverConfig,
) -> Result<Option<(f64, f64, Vec<Vec3>)>, SolverError> {
    if dx.iter().all(|d| *d == Vec3::zeros()) {
        return Err(SolverError::LineSearch("zero search direction".into()));
    }
    let s = obj.system;
    let x_end: Vec<Vec3> = x.iter().zip(dx).map(|(a, d)| a + d).collect();
    let pairs = candidate_pairs(&s.collision, x, Some(&x_end), s.contact.dhat);
    let mut alpha = ccd_toi(x, &x_end, &pairs, cfg.ccd_slack)?.min(1.0);
    let (e0, _) = obj.value(x, &pairs)?;
    for _ in 0..64 {
        let xa: Vec<Vec3> = x.iter().zip(dx).map(|(a, d)| a + d * alpha).collect();
        if volumes_positive(s, &xa) {
            let (e, _) = obj.value(&xa, &pairs)?;
            if e < e0 {
                return Ok(Some((alpha, e, xa)));
            }
        }
        alpha *= cfg.line_search_shrink;
    }
    Ok(None)
}

/// Projected Newton from `x0` until ‖Δx‖∞ / h < `newton_tol`.
pub fn minimize(obj: &Objective, x0: Vec<Vec3>, cfg: &SolverConfig) -> Result<MinimizeReport, SolverError> {
    let s = obj.system;
    let (dof, n) = obj.dof_map();
    let mut x = x0;
    let first_pairs = candidate_pairs(&s.collision, &x, None, s.contact.dhat);
    let (e_start, mut min_d2) = obj.value(&x, &first_pairs)?;
    let mut report = MinimizeReport {
        x: Vec::new(),
        iterations: 0,
        energies: vec![e_start],
        converged: false,
        residual: f64::INFINITY,
        min_distance: 0.0,
    };
    if n == 0 {
        report.converged = true;
        report.residual = 0.0;
    }
    while n > 0 && report.iterations < cfg.max_newton_iters {
        let pairs = candidate_pairs(&s.collision, &x, None, s.contact.dhat);
        let (g, hess, md2) = obj.assemble(&x, &pairs, &dof, n)?;
        min_d2 = md2;
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let d = solve_spd(&hess, &rhs, cfg.direct_solver_max_dofs)?;
        let dx: Vec<Vec3> = dof
            .iter()
            .map(|o| match o {
                Some(i) => Vec3::new(d[*i], d[i + 1], d[i + 2]),
                None => Vec3::zeros(),
            })
            .collect();
        let res = dx.iter().map(|v| v.amax()).fold(0.0, f64::max) / obj.h;
        report.residual = res;
        if res < cfg.newton_tol {
            report.converged = true;
            break;
        }
        report.iterations += 1;
        match filtered_line_search(obj, &x, &dx, cfg)? {
            Some((_, e, xa)) => {
                x = xa;
                report.energies.push(e);
            }
            None if res < 10.0 * cfg.newton_tol => {
                report.converged = true;
                break;
            }
            None => {
                return Err(SolverError::LineSearch(format!(
                    "no energy decrease after 64 reductions (newton residual {res:e} m/s)"
                )))
            }
        }
    }
    if !report.converged {
        log::warn!("newton stopped at the iteration cap with residual {:e} m/s", report.residual);
    }
    let pairs = candidate_pairs(&s.collision, &x, None, s.contact.dhat);
    if let Ok((_, md2)) = obj.value(&x, &pairs) {
        min_d2 = md2;
    }
    report.min_distance = min_d2.sqrt();
    report.x = x;
    Ok(report)
}
