//! Numerical self-checks on small systems drawn from a scene: central
//! finite differences against every energy term's gradient and Hessian,
//! and sampled conservativeness of the CCD time of impact.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distances::{edge_edge_distance, pair_toi, point_triangle_distance, PairIndex, PairKind, DEFAULT_CCD_SLACK};
use crate::energy::{
    augmented_lagrangian_energy, augmented_lagrangian_value, barrier_energy, barrier_value_only, elastic_energy,
    elastic_value, friction_energy, friction_value, inertia_energy, inertia_value, update_friction_lag, AlConstraints,
    ContactParams, LocalHessian,
};
use crate::geometry::{signed_volume, TetMesh, Vec3};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    /// Random configurations per check.
    pub samples: usize,
    pub grad_tol: f64,
    pub hvp_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { seed: 0, samples: 20, grad_tol: 1e-4, hvp_tol: 1e-3 }
    }
}

impl CheckOptions {
    pub fn validate(&self) -> Result<(), String> {
        for (name, tol) in [("gradient tolerance", self.grad_tol), ("hessian tolerance", self.hvp_tol)] {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(format!("{name} must be a positive number, got {tol}"));
            }
        }
        if self.samples == 0 {
            return Err("samples must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    /// Largest relative error, or the number of violations for CCD.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

fn norm(v: &[Vec3]) -> f64 {
    v.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt()
}

fn rel_error(approx: &[Vec3], exact: &[Vec3]) -> f64 {
    let diff: Vec<Vec3> = approx.iter().zip(exact).map(|(a, b)| a - b).collect();
    let scale = norm(exact);
    if scale == 0.0 {
        if norm(&diff) == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        norm(&diff) / scale
    }
}

fn fd_gradient(f: &dyn Fn(&[Vec3]) -> f64, x: &[Vec3], eps: f64) -> Vec<Vec3> {
    let mut xp = x.to_vec();
    let mut g = vec![Vec3::zeros(); x.len()];
    for i in 0..x.len() {
        for c in 0..3 {
            let orig = xp[i][c];
            xp[i][c] = orig + eps;
            let fp = f(&xp);
            xp[i][c] = orig - eps;
            let fm = f(&xp);
            xp[i][c] = orig;
            g[i][c] = (fp - fm) / (2.0 * eps);
        }
    }
    g
}

fn fd_directional(grad: &dyn Fn(&[Vec3]) -> Vec<Vec3>, x: &[Vec3], u: &[Vec3], eps: f64) -> Vec<Vec3> {
    let shift = |s: f64| -> Vec<Vec3> { x.iter().zip(u).map(|(p, d)| p + d * s).collect() };
    let gp = grad(&shift(eps));
    let gm = grad(&shift(-eps));
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
}

/// `H u` for a sum of local Hessians.
pub fn apply_local_hessians(hessians: &[LocalHessian], u: &[Vec3]) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); u.len()];
    for lh in hessians {
        for a in 0..4 {
            for b in 0..4 {
                out[lh.indices[a]] += lh.matrix.fixed_view::<3, 3>(3 * a, 3 * b) * u[lh.indices[b]];
            }
        }
    }
    out
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-scale..scale))
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    let u: Vec<Vec3> = (0..n).map(|_| random_vec(rng, 1.0)).collect();
    let s = norm(&u);
    u.into_iter().map(|p| p / s).collect()
}

/// A point-triangle or edge-edge pair scaled so its distance is `d`.
fn random_pair(rng: &mut ChaCha8Rng, kind: PairKind, d: f64) -> Vec<Vec3> {
    loop {
        let p: Vec<Vec3> = (0..4).map(|_| random_vec(rng, 1.0)).collect();
        let d2 = match kind {
            PairKind::PointTriangle => {
                let area = (p[2] - p[1]).cross(&(p[3] - p[1])).norm() / 2.0;
                if area < 0.1 {
                    continue;
                }
                point_triangle_distance(&p[0], &p[1], &p[2], &p[3]).map(|r| r.0)
            }
            PairKind::EdgeEdge => {
                let (a, b) = (p[1] - p[0], p[3] - p[2]);
                if a.norm() < 0.3 || b.norm() < 0.3 || a.cross(&b).norm() < 0.1 * a.norm() * b.norm() {
                    continue;
                }
                edge_edge_distance(&p[0], &p[1], &p[2], &p[3]).map(|r| r.0)
            }
        };
        let Ok(d2) = d2 else { continue };
        if d2.sqrt() < 0.05 {
            continue;
        }
        let s = d / d2.sqrt();
        return p.into_iter().map(|q| q * s).collect();
    }
}

struct Accumulator {
    name: &'static str,
    samples: usize,
    max_error: f64,
    tolerance: f64,
}

impl Accumulator {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Accumulator { name, samples: 0, max_error: 0.0, tolerance }
    }

    fn add(&mut self, e: f64) {
        self.samples += 1;
        if e.is_nan() || e > self.max_error {
            self.max_error = if e.is_nan() { f64::INFINITY } else { e };
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.into(),
            samples: self.samples,
            max_error: self.max_error,
            tolerance: self.tolerance,
            passed: self.max_error <= self.tolerance,
        }
    }
}

/// Up to `count` tets around the first one, reindexed into a standalone mesh.
fn sub_mesh(mesh: &TetMesh, count: usize) -> TetMesh {
    let mut chosen = vec![0usize];
    for (t, tet) in mesh.tets.iter().enumerate().skip(1) {
        if chosen.len() >= count {
            break;
        }
        if tet.iter().any(|v| mesh.tets[0].contains(v)) {
            chosen.push(t);
        }
    }
    let mut map = std::collections::BTreeMap::new();
    let mut verts = Vec::new();
    let tets: Vec<[usize; 4]> = chosen
        .iter()
        .map(|&t| {
            mesh.tets[t].map(|v| {
                *map.entry(v).or_insert_with(|| {
                    verts.push(mesh.vertices[v]);
                    verts.len() - 1
                })
            })
        })
        .collect();
    TetMesh::new(verts, tets).expect("sub-mesh of a valid mesh").mesh
}

fn min_edge(mesh: &TetMesh) -> f64 {
    let mut h = f64::INFINITY;
    for t in &mesh.tets {
        for a in 0..4 {
            for b in a + 1..4 {
                h = h.min((mesh.vertices[t[a]] - mesh.vertices[t[b]]).norm());
            }
        }
    }
    h
}

fn check_inertia(scene: &Scene, opts: &CheckOptions, rng: &mut ChaCha8Rng) -> [CheckResult; 2] {
    let n = scene.system.masses.len().min(10);
    let masses = &scene.system.masses[..n];
    let base = &scene.system.gel.vertices;
    let scale = scene.thickness;
    let (mut g_acc, mut h_acc) =
        (Accumulator::new("inertia.gradient", opts.grad_tol), Accumulator::new("inertia.hessian", opts.hvp_tol));
    for _ in 0..opts.samples {
        let x: Vec<Vec3> = (0..n).map(|i| base[i % base.len()] + random_vec(rng, 0.1 * scale)).collect();
        let xhat: Vec<Vec3> = (0..n).map(|i| base[i % base.len()] + random_vec(rng, 0.1 * scale)).collect();
        let eps = 1e-6 * scale;
        let (_, grad, mdiag) = inertia_energy(&x, &xhat, masses);
        g_acc.add(rel_error(&fd_gradient(&|y| inertia_value(y, &xhat, masses), &x, eps), &grad));
        let u = random_direction(rng, n);
        let hu: Vec<Vec3> = u.iter().zip(&mdiag).map(|(d, m)| d * *m).collect();
        let fd = fd_directional(&|y| inertia_energy(y, &xhat, masses).1, &x, &u, eps);
        h_acc.add(rel_error(&fd, &hu));
    }
    [g_acc.finish(), h_acc.finish()]
}

fn check_elastic(scene: &Scene, opts: &CheckOptions, rng: &mut ChaCha8Rng) -> [CheckResult; 2] {
    let mesh = sub_mesh(&scene.system.gel, 6);
    let material = scene.system.material;
    let h = min_edge(&mesh);
    let (mut g_acc, mut h_acc) =
        (Accumulator::new("elastic.gradient", opts.grad_tol), Accumulator::new("elastic.hessian", opts.hvp_tol));
    while g_acc.samples < opts.samples {
        let x: Vec<Vec3> = mesh.vertices.iter().map(|p| p + random_vec(rng, 0.1 * h)).collect();
        if mesh.tets.iter().any(|t| signed_volume(&x, t) <= 0.0) {
            continue;
        }
        let eps = 1e-6 * h;
        let (_, grad, hess) = elastic_energy(&mesh, &x, &material);
        g_acc.add(rel_error(&fd_gradient(&|y| elastic_value(&mesh, y, &material), &x, eps), &grad));
        let u = random_direction(rng, x.len());
        let fd = fd_directional(&|y| elastic_energy(&mesh, y, &material).1, &x, &u, eps);
        h_acc.add(rel_error(&fd, &apply_local_hessians(&hess, &u)));
    }
    [g_acc.finish(), h_acc.finish()]
}

fn check_barrier(params: &ContactParams, opts: &CheckOptions, rng: &mut ChaCha8Rng) -> [CheckResult; 2] {
    let (mut g_acc, mut h_acc) =
        (Accumulator::new("barrier.gradient", opts.grad_tol), Accumulator::new("barrier.hessian", opts.hvp_tol));
    for s in 0..opts.samples {
        let kind = if s % 2 == 0 { PairKind::PointTriangle } else { PairKind::EdgeEdge };
        let d = rng.random_range(0.2..0.9) * params.dhat;
        let x = random_pair(rng, kind, d);
        let pairs = [PairIndex { kind, indices: [0, 1, 2, 3] }];
        let eps = 1e-6 * d;
        let value = |y: &[Vec3]| barrier_value_only(y, &pairs, params).map(|r| r.0).unwrap_or(f64::NAN);
        let grad = |y: &[Vec3]| {
            barrier_energy(y, &pairs, params).map(|b| b.grad).unwrap_or_else(|_| vec![Vec3::repeat(f64::NAN); 4])
        };
        let Ok(eval) = barrier_energy(&x, &pairs, params) else {
            g_acc.add(f64::INFINITY);
            continue;
        };
        g_acc.add(rel_error(&fd_gradient(&value, &x, eps), &eval.grad));
        let u = random_direction(rng, 4);
        h_acc.add(rel_error(&fd_directional(&grad, &x, &u, eps), &apply_local_hessians(&eval.hessians, &u)));
    }
    [g_acc.finish(), h_acc.finish()]
}

fn check_friction(params: &ContactParams, h: f64, opts: &CheckOptions, rng: &mut ChaCha8Rng) -> [CheckResult; 2] {
    let params = ContactParams { mu: if params.mu > 0.0 { params.mu } else { 1.0 }, ..*params };
    let e = params.epsv * h;
    let (mut g_acc, mut h_acc) =
        (Accumulator::new("friction.gradient", opts.grad_tol), Accumulator::new("friction.hessian", opts.hvp_tol));
    for s in 0..opts.samples {
        let kind = if s % 2 == 0 { PairKind::PointTriangle } else { PairKind::EdgeEdge };
        let x = random_pair(rng, kind, 0.5 * params.dhat);
        let pairs = [PairIndex { kind, indices: [0, 1, 2, 3] }];
        let Ok(mut lag) = update_friction_lag(&x, &x, &pairs, &params) else {
            g_acc.add(f64::INFINITY);
            continue;
        };
        // Alternate between sticking and sliding slips, away from the seam.
        let y = if s % 4 < 2 { rng.random_range(0.1..0.8) * e } else { rng.random_range(1.5..5.0) * e };
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let slip = lag.pairs[0].basis * Vector2::new(angle.cos(), angle.sin()) * y;
        let w = lag.pairs[0].weights;
        let wn: f64 = w.iter().map(|c| c * c).sum();
        for k in 0..4 {
            lag.anchor[k] -= slip * (w[k] / wn);
        }
        let eps = 1e-5 * y.min(e);
        let (_, grad, hess) = friction_energy(&x, &lag, &params, h);
        g_acc.add(rel_error(&fd_gradient(&|p| friction_value(p, &lag, &params, h), &x, eps), &grad));
        let u = random_direction(rng, 4);
        let fd = fd_directional(&|p| friction_energy(p, &lag, &params, h).1, &x, &u, eps);
        h_acc.add(rel_error(&fd, &apply_local_hessians(&hess, &u)));
    }
    [g_acc.finish(), h_acc.finish()]
}

fn check_al(scene: &Scene, opts: &CheckOptions, rng: &mut ChaCha8Rng) -> [CheckResult; 2] {
    let scale = scene.thickness;
    let penalty = scene.solver.al_penalty_init;
    let (mut g_acc, mut h_acc) =
        (Accumulator::new("constraint.gradient", opts.grad_tol), Accumulator::new("constraint.hessian", opts.hvp_tol));
    for _ in 0..opts.samples {
        let n = 6;
        let x: Vec<Vec3> = (0..n).map(|_| random_vec(rng, scale)).collect();
        let c = AlConstraints {
            vertices: vec![0, 2, 5],
            targets: (0..3).map(|_| random_vec(rng, scale)).collect(),
            multipliers: (0..3).map(|_| random_vec(rng, penalty * scale)).collect(),
            penalty,
        };
        let expand = |local: &[Vec3]| -> Vec<Vec3> {
            let mut g = vec![Vec3::zeros(); n];
            for (&v, gv) in c.vertices.iter().zip(local) {
                g[v] += gv;
            }
            g
        };
        let eps = 1e-6 * scale;
        let (_, local, k) = augmented_lagrangian_energy(&x, &c);
        g_acc.add(rel_error(&fd_gradient(&|y| augmented_lagrangian_value(y, &c), &x, eps), &expand(&local)));
        let u = random_direction(rng, n);
        let mut hu = vec![Vec3::zeros(); n];
        for &v in &c.vertices {
            hu[v] = u[v] * k;
        }
        let fd = fd_directional(&|y| expand(&augmented_lagrangian_energy(y, &c).1), &x, &u, eps);
        h_acc.add(rel_error(&fd, &hu));
    }
    [g_acc.finish(), h_acc.finish()]
}

const CCD_TIME_SAMPLES: usize = 200;

fn check_ccd(dhat: f64, opts: &CheckOptions, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut acc = Accumulator::new("ccd.conservative", 0.0);
    let mut violations = 0usize;
    for s in 0..opts.samples * 10 {
        let kind = if s % 2 == 0 { PairKind::PointTriangle } else { PairKind::EdgeEdge };
        let d0 = rng.random_range(0.1..2.0) * dhat;
        let x0 = random_pair(rng, kind, d0);
        let reach = norm(&x0);
        let dx: Vec<Vec3> = (0..4).map(|_| random_vec(rng, reach)).collect();
        let (a, b): ([Vec3; 4], [Vec3; 4]) = (std::array::from_fn(|i| x0[i]), std::array::from_fn(|i| dx[i]));
        let t_max = match pair_toi(kind, &a, &b, DEFAULT_CCD_SLACK) {
            Ok(t) => t.unwrap_or(1.0),
            Err(_) => {
                violations += 1;
                continue;
            }
        };
        for k in 0..=CCD_TIME_SAMPLES {
            let t = t_max * k as f64 / CCD_TIME_SAMPLES as f64;
            let p: [Vec3; 4] = std::array::from_fn(|i| a[i] + b[i] * t);
            let d2 = match kind {
                PairKind::PointTriangle => point_triangle_distance(&p[0], &p[1], &p[2], &p[3]).map(|r| r.0),
                PairKind::EdgeEdge => edge_edge_distance(&p[0], &p[1], &p[2], &p[3]).map(|r| r.0),
            };
            if !matches!(d2, Ok(d2) if d2 > 0.0) {
                violations += 1;
                break;
            }
        }
    }
    acc.add(violations as f64);
    acc.samples = opts.samples * 10;
    acc.finish()
}

/// Runs every check with a generator seeded from `opts.seed`; the report
/// is a pure function of the scene and the options.
pub fn run_checks(scene: &Scene, opts: &CheckOptions) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let contact = scene.system.contact;
    let mut checks = Vec::new();
    checks.extend(check_inertia(scene, opts, &mut rng));
    checks.extend(check_elastic(scene, opts, &mut rng));
    checks.extend(check_barrier(&contact, opts, &mut rng));
    checks.extend(check_friction(&contact, scene.solver.h, opts, &mut rng));
    checks.extend(check_al(scene, opts, &mut rng));
    checks.push(check_ccd(contact.dhat, opts, &mut rng));
    CheckReport { seed: opts.seed, passed: checks.iter().all(|c| c.passed), checks }
}
