//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

mod common;

use std::path::Path;
use std::time::Instant;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use tacsim::distances::{
    edge_edge_distance, pair_toi, point_triangle_distance, PairIndex, PairKind, DEFAULT_CCD_SLACK,
};
use tacsim::energy::{
    augmented_lagrangian_energy, augmented_lagrangian_value, barrier_energy, barrier_value_only, elastic_energy,
    elastic_value, friction_energy, friction_value, inertia_energy, inertia_value, update_friction_lag, AlConstraints,
    ContactParams, LocalHessian, MaterialParams,
};
use tacsim::geometry::{box_mesh, CollisionMesh, TetMesh, Vec3};
use tacsim::scene::{load_scene, run, RunOutput, Scene};
use tacsim::solver::{step, Pose, SimState, SolverConfig, System};
use tacsim::tactile::{composite_with_reference, contact_area, image_metrics, HeightMap, TactileImage};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn apply_hessians(hs: &[LocalHessian], u: &[Vec3]) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); u.len()];
    for lh in hs {
        for a in 0..4 {
            for b in 0..4 {
                out[lh.indices[a]] += lh.matrix.fixed_view::<3, 3>(3 * a, 3 * b) * u[lh.indices[b]];
            }
        }
    }
    out
}

/// A random point-triangle or edge-edge configuration at distance `d`,
/// measured with the closed-form oracle.
fn random_pair(rng: &mut ChaCha8Rng, kind: PairKind, d: f64) -> Vec<Vec3> {
    loop {
        let p: Vec<Vec3> = (0..4).map(|_| rvec(rng, 1.0)).collect();
        let dist = match kind {
            PairKind::PointTriangle => {
                if (p[2] - p[1]).cross(&(p[3] - p[1])).norm() < 0.2 {
                    continue;
                }
                pt_distance(p[0], p[1], p[2], p[3])
            }
            PairKind::EdgeEdge => {
                let (a, b) = (p[1] - p[0], p[3] - p[2]);
                if a.norm() < 0.3 || b.norm() < 0.3 || a.cross(&b).norm() < 0.1 * a.norm() * b.norm() {
                    continue;
                }
                ee_distance(p[0], p[1], p[2], p[3])
            }
        };
        if dist < 0.05 {
            continue;
        }
        return p.into_iter().map(|q| q * (d / dist)).collect();
    }
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

const CONFIGS: usize = 100;

#[derive(Default)]
struct Worst {
    grad: f64,
    hvp: f64,
}

impl Worst {
    fn add(&mut self, g: f64, h: f64) {
        self.grad = if g.is_nan() { f64::INFINITY } else { self.grad.max(g) };
        self.hvp = if h.is_nan() { f64::INFINITY } else { self.hvp.max(h) };
    }
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows = Vec::new();

    // Inertia.
    let mut w = Worst::default();
    for _ in 0..CONFIGS {
        let n = 10;
        let m: Vec<f64> = (0..n).map(|_| rng.random_range(1e-6..1e-3)).collect();
        let x: Vec<Vec3> = (0..n).map(|_| rvec(&mut rng, 1e-2)).collect();
        let xh: Vec<Vec3> = (0..n).map(|_| rvec(&mut rng, 1e-2)).collect();
        let (_, g, md) = inertia_energy(&x, &xh, &m);
        let u = unit_direction(&mut rng, n);
        let hu: Vec<Vec3> = u.iter().zip(&md).map(|(d, k)| d * *k).collect();
        w.add(
            rel_err(&central_gradient(|y| inertia_value(y, &xh, &m), &x, 1e-8), &g),
            rel_err(&central_directional(|y| inertia_energy(y, &xh, &m).1, &x, &u, 1e-8), &hu),
        );
    }
    rows.push(("inertia", w));

    // Elastic, on a perturbed 2x2x1 box.
    let mut w = Worst::default();
    let mesh = box_mesh(Vec3::zeros(), Vec3::new(2e-3, 2e-3, 1e-3), [2, 2, 1]).unwrap();
    for k in 0..CONFIGS {
        let material = MaterialParams {
            youngs_modulus: rng.random_range(1e4..1e6),
            poisson_ratio: rng.random_range(0.1..0.49),
            density: 1e3,
        };
        let amp = if k % 2 == 0 { 5e-5 } else { 2e-4 };
        let x: Vec<Vec3> = mesh.vertices.iter().map(|p| p + rvec(&mut rng, amp)).collect();
        let (_, g, hs) = elastic_energy(&mesh, &x, &material);
        let u = unit_direction(&mut rng, x.len());
        w.add(
            rel_err(&central_gradient(|y| elastic_value(&mesh, y, &material), &x, 1e-9), &g),
            rel_err(
                &central_directional(|y| elastic_energy(&mesh, y, &material).1, &x, &u, 1e-9),
                &apply_hessians(&hs, &u),
            ),
        );
    }
    rows.push(("elastic", w));

    // Barrier on single pairs, both kinds, across the activation range.
    let mut w = Worst::default();
    for k in 0..CONFIGS {
        let kind = if k % 2 == 0 { PairKind::PointTriangle } else { PairKind::EdgeEdge };
        let params = ContactParams { dhat: 1e-3 * rng.random_range(0.5..2.0), kappa: 1e6, mu: 0.0, epsv: 1e-3 };
        let d = rng.random_range(0.05..0.95) * params.dhat;
        let x = random_pair(&mut rng, kind, d);
        let pairs = [PairIndex { kind, indices: [0, 1, 2, 3] }];
        let eval = barrier_energy(&x, &pairs, &params).unwrap();
        let u = unit_direction(&mut rng, 4);
        let h = 1e-6 * d;
        w.add(
            rel_err(&central_gradient(|y| barrier_value_only(y, &pairs, &params).unwrap().0, &x, h), &eval.grad),
            rel_err(
                &central_directional(|y| barrier_energy(y, &pairs, &params).unwrap().grad, &x, &u, h),
                &apply_hessians(&eval.hessians, &u),
            ),
        );
    }
    rows.push(("barrier", w));

    // Friction: sticking and sliding slips about a lagged contact.
    let mut w = Worst::default();
    for k in 0..CONFIGS {
        let kind = if k % 2 == 0 { PairKind::PointTriangle } else { PairKind::EdgeEdge };
        let params = ContactParams { dhat: 1e-3, kappa: 1e6, mu: rng.random_range(0.1..1.5), epsv: 1e-3 };
        let h = 0.01;
        let e = params.epsv * h;
        let x = random_pair(&mut rng, kind, 0.5 * params.dhat);
        let pairs = [PairIndex { kind, indices: [0, 1, 2, 3] }];
        let mut lag = update_friction_lag(&x, &x, &pairs, &params).unwrap();
        let slip = if k % 4 < 2 { rng.random_range(0.05..0.8) * e } else { rng.random_range(1.3..10.0) * e };
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let lp = &lag.pairs[0];
        let s = lp.basis * Vector2::new(ang.cos(), ang.sin()) * slip;
        let wn: f64 = lp.weights.iter().map(|c| c * c).sum();
        let weights = lp.weights;
        for (i, wi) in weights.iter().enumerate() {
            lag.anchor[i] -= s * (wi / wn);
        }
        let (_, g, hs) = friction_energy(&x, &lag, &params, h);
        let u = unit_direction(&mut rng, 4);
        let fd_h = 1e-5 * slip.min(e);
        w.add(
            rel_err(&central_gradient(|y| friction_value(y, &lag, &params, h), &x, fd_h), &g),
            rel_err(
                &central_directional(|y| friction_energy(y, &lag, &params, h).1, &x, &u, fd_h),
                &apply_hessians(&hs, &u),
            ),
        );
    }
    rows.push(("friction", w));

    // Augmented Lagrangian position constraints.
    let mut w = Worst::default();
    for _ in 0..CONFIGS {
        let n = 8;
        let x: Vec<Vec3> = (0..n).map(|_| rvec(&mut rng, 1e-2)).collect();
        let penalty = rng.random_range(1e2..1e6);
        let c = AlConstraints {
            vertices: vec![1, 4, 6],
            targets: (0..3).map(|_| rvec(&mut rng, 1e-2)).collect(),
            multipliers: (0..3).map(|_| rvec(&mut rng, penalty * 1e-2)).collect(),
            penalty,
        };
        let spread = |local: Vec<Vec3>| -> Vec<Vec3> {
            let mut g = vec![Vec3::zeros(); n];
            for (&v, gv) in c.vertices.iter().zip(local) {
                g[v] += gv;
            }
            g
        };
        let (_, local, k) = augmented_lagrangian_energy(&x, &c);
        let u = unit_direction(&mut rng, n);
        let mut hu = vec![Vec3::zeros(); n];
        for &v in &c.vertices {
            hu[v] = u[v] * k;
        }
        w.add(
            rel_err(&central_gradient(|y| augmented_lagrangian_value(y, &c), &x, 1e-8), &spread(local)),
            rel_err(&central_directional(|y| spread(augmented_lagrangian_energy(y, &c).1), &x, &u, 1e-8), &hu),
        );
    }
    rows.push(("augmented lagrangian", w));

    let passed = rows.iter().all(|(_, w)| w.grad < 1e-4 && w.hvp < 1e-3);
    let detail = rows.iter().map(|(n, w)| format!("{n} {:.1e}/{:.1e}", w.grad, w.hvp)).collect::<Vec<_>>().join(", ");
    outcome(passed, format!("max rel err grad/hvp: {detail}"))
}

// ---------------------------------------------------------------------------
// 3. Distance kernels and CCD

const DISTANCE_CONFIGS: usize = 100_000;
const CCD_MOTIONS: usize = 10_000;
const CCD_SAMPLES: usize = 1000;

/// Unit-cube configurations with a share of near-degenerate layouts.
fn random_config(rng: &mut ChaCha8Rng, kind: PairKind, k: usize) -> [Vec3; 4] {
    let mut p: [Vec3; 4] = std::array::from_fn(|_| rvec(rng, 1.0));
    match (kind, k % 10) {
        (PairKind::EdgeEdge, 0) => {
            let s = rng.random_range(-2.0..2.0);
            p[3] = p[2] + (p[1] - p[0]) * s;
        }
        (PairKind::EdgeEdge, 1) => {
            let s = rng.random_range(-2.0..2.0);
            p[3] = p[2] + (p[1] - p[0]) * s + rvec(rng, 1e-6);
        }
        (PairKind::PointTriangle, 0) => {
            let n = (p[2] - p[1]).cross(&(p[3] - p[1])).normalize();
            p[0] -= n * n.dot(&(p[0] - p[1]));
            p[0] += n * rng.random_range(-1e-4..1e-4);
        }
        (_, 2) => {
            p[0] = p[2] + rvec(rng, 1e-3);
        }
        _ => {}
    }
    p
}

fn kernels_and_ccd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 2];
    let mut errors = 0usize;
    for (slot, kind) in [PairKind::PointTriangle, PairKind::EdgeEdge].into_iter().enumerate() {
        for k in 0..DISTANCE_CONFIGS {
            let p = random_config(&mut rng, kind, k);
            let (lib, oracle) = match kind {
                PairKind::PointTriangle => {
                    if (p[2] - p[1]).cross(&(p[3] - p[1])).norm() < 1e-6 {
                        continue;
                    }
                    (
                        point_triangle_distance(&p[0], &p[1], &p[2], &p[3]).map(|r| r.0),
                        pt_distance_enumerated(p[0], p[1], p[2], p[3]),
                    )
                }
                PairKind::EdgeEdge => (
                    edge_edge_distance(&p[0], &p[1], &p[2], &p[3]).map(|r| r.0),
                    ee_distance_enumerated(p[0], p[1], p[2], p[3]),
                ),
            };
            match lib {
                Ok(d2) => worst[slot] = worst[slot].max((d2.sqrt() - oracle).abs()),
                Err(_) => errors += 1,
            }
        }
    }

    let mut violations = 0usize;
    let mut impacts = 0usize;
    for k in 0..CCD_MOTIONS {
        let kind = if k % 2 == 0 { PairKind::PointTriangle } else { PairKind::EdgeEdge };
        let d0 = rng.random_range(1e-4..0.5);
        let x0v = random_pair(&mut rng, kind, d0);
        let x0: [Vec3; 4] = std::array::from_fn(|i| x0v[i]);
        let dx: [Vec3; 4] = if k % 3 == 0 {
            // Head-on: drive the first primitive through the second.
            let toward = match kind {
                PairKind::PointTriangle => closest_on_triangle(x0[0], x0[1], x0[2], x0[3]) - x0[0],
                PairKind::EdgeEdge => {
                    let (s, t) = closest_segment_params(x0[0], x0[1], x0[2], x0[3]);
                    (x0[2] + (x0[3] - x0[2]) * t) - (x0[0] + (x0[1] - x0[0]) * s)
                }
            };
            let push = toward * rng.random_range(1.5..4.0);
            let jitter = rvec(&mut rng, 0.1 * d0);
            match kind {
                PairKind::PointTriangle => [push + jitter, Vec3::zeros(), Vec3::zeros(), Vec3::zeros()],
                PairKind::EdgeEdge => [push + jitter, push, Vec3::zeros(), Vec3::zeros()],
            }
        } else {
            std::array::from_fn(|_| rvec(&mut rng, 2.0))
        };
        let Ok(toi) = pair_toi(kind, &x0, &dx, DEFAULT_CCD_SLACK) else {
            violations += 1;
            continue;
        };
        if toi.is_some() {
            impacts += 1;
        }
        let t_max = toi.unwrap_or(1.0);
        for s in 0..=CCD_SAMPLES {
            let t = t_max * s as f64 / CCD_SAMPLES as f64;
            let p: [Vec3; 4] = std::array::from_fn(|i| x0[i] + dx[i] * t);
            let d = match kind {
                PairKind::PointTriangle => pt_distance(p[0], p[1], p[2], p[3]),
                PairKind::EdgeEdge => ee_distance(p[0], p[1], p[2], p[3]),
            };
            if !(d > 0.0) {
                violations += 1;
                break;
            }
        }
    }
    let passed = worst[0] < 1e-6 && worst[1] < 1e-6 && errors == 0 && violations == 0;
    outcome(
        passed,
        format!(
            "max |d - oracle| pt {:.1e} ee {:.1e} over {DISTANCE_CONFIGS} each, kernel errors {errors}; \
             ccd {violations} violations in {CCD_MOTIONS} motions ({impacts} impacts)",
            worst[0], worst[1]
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Implicit-Euler exactness

/// Pentagonal prism: ten vertices, nine tets.
fn prism() -> TetMesh {
    let mut v = Vec::new();
    for z in [0.0, 4e-3] {
        for k in 0..5 {
            let a = std::f64::consts::TAU * k as f64 / 5.0;
            v.push(Vec3::new(5e-3 * a.cos(), 5e-3 * a.sin(), z));
        }
    }
    let mut tets = Vec::new();
    for (a, b, c) in [(0, 1, 2), (0, 2, 3), (0, 3, 4)] {
        tets.push([a, b, c, c + 5]);
        tets.push([a, b, b + 5, c + 5]);
        tets.push([a, a + 5, b + 5, c + 5]);
    }
    TetMesh::new(v, tets).unwrap().mesh.with_density(1.01e3).unwrap()
}

fn implicit_euler_exactness() -> Outcome {
    let gel = prism();
    let n = gel.vertices.len();
    let g = Vec3::new(0.3, -1.2, -9.81);
    let collision = CollisionMesh::from_surfaces(n, &[(0, false, &gel.surface_tris)]);
    let system = System {
        masses: gel.vertex_masses.clone(),
        glued: vec![false; n],
        material: MaterialParams::GEL,
        contact: ContactParams { dhat: 1e-5, kappa: 1e6, mu: 0.0, epsv: 1e-3 },
        collision,
        indenter: None,
        gravity: g,
        gel,
    };
    let cfg = SolverConfig { h: 0.01, newton_tol: 1e-9, ..SolverConfig::default() };
    let mut state = SimState::at_rest(&system, Pose::identity());
    let v0 = Vec3::new(0.02, 0.01, 0.05);
    state.v = vec![v0; n];
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let predicted: Vec<Vec3> =
            state.x.iter().zip(&state.v).map(|(x, v)| x + v * cfg.h + g * (cfg.h * cfg.h)).collect();
        let (next, _) = match step(&system, &state, &Pose::identity(), &cfg) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("step failed: {e}")),
        };
        worst = worst.max(next.x.iter().zip(&predicted).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        state = next;
    }
    outcome(worst <= 1e-10, format!("{n} vertices, 10 steps, max |x - x_pred| {worst:.2e} m"))
}

// ---------------------------------------------------------------------------
// Scenario runs shared by 2, 5, 6, 7, 8

struct ScenarioRun {
    name: &'static str,
    scene: Scene,
    output: Result<RunOutput, String>,
    seconds: f64,
}

fn run_scenario(name: &'static str, file: &str, overrides: &[(&str, &str)], out_dir: Option<&Path>) -> ScenarioRun {
    let overrides: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let scene = load_scene(&scenario(file), &overrides).expect("scenario loads");
    let start = Instant::now();
    let output = run(&scene, scene.steps, out_dir).map_err(|f| f.error.to_string());
    ScenarioRun { name, scene, output, seconds: start.elapsed().as_secs_f64() }
}

fn surfaces(scene: &Scene) -> Vec<Surface> {
    let mut s = vec![Surface { tris: scene.system.gel.surface_tris.clone(), rigid: false }];
    if let Some(ind) = &scene.system.indenter {
        s.push(Surface { tris: ind.triangles.iter().map(|t| t.map(|i| i + ind.offset)).collect(), rigid: true });
    }
    s
}

fn intersection_free(runs: &[&ScenarioRun]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for r in runs {
        let out = match &r.output {
            Ok(o) => o,
            Err(e) => {
                passed = false;
                parts.push(format!("{}: run failed ({e})", r.name));
                continue;
            }
        };
        let surf = surfaces(&r.scene);
        let (mut dmin, mut vmin, mut crossings) = (f64::INFINITY, f64::INFINITY, 0);
        for s in &out.states {
            let a = audit(&s.x, &r.scene.system.gel.tets, &surf, r.scene.system.contact.dhat);
            dmin = dmin.min(a.min_distance);
            vmin = vmin.min(a.min_volume);
            crossings += a.crossings;
        }
        passed &= dmin > 0.0 && vmin > 0.0 && crossings == 0;
        parts.push(format!(
            "{} {} states: min dist {dmin:.2e} m, min vol {vmin:.2e} m3, crossings {crossings}",
            r.name,
            out.states.len()
        ));
    }
    outcome(passed, parts.join("; "))
}

fn rotate90_asymmetry(map: &HeightMap) -> f64 {
    let w = map.spec.width;
    assert_eq!(w, map.spec.height);
    let relief = map.max().unwrap() - map.min().unwrap();
    let mut worst = 0.0f64;
    for j in 0..w {
        for i in 0..w {
            let (a, b) = (map.get(i, j), map.get(j, w - 1 - i));
            if let (Some(a), Some(b)) = (a, b) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst / relief
}

fn press_scenario(r: &ScenarioRun) -> Outcome {
    let out = match &r.output {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let scene = &r.scene;
    let dhat = scene.system.contact.dhat;
    let last = &out.frames.last().unwrap().heightmap;
    let target = scene.thickness - 0.5e-3;
    let min = last.min().unwrap();
    let depth_ok = (min - target).abs() <= dhat;
    let areas: Vec<f64> = out.frames.iter().map(|f| contact_area(&f.heightmap, scene.thickness, dhat)).collect();
    let depths: Vec<f64> = out.frames.iter().map(|f| scene.thickness - f.heightmap.min().unwrap()).collect();
    let monotone = depths.windows(2).all(|w| w[1] >= w[0]) && areas.windows(2).all(|w| w[1] >= w[0]);
    let asym = rotate90_asymmetry(last);
    let tets = scene.system.gel.tets.len();
    let fast = r.seconds < 300.0;
    outcome(
        depth_ok && monotone && asym <= 0.02 && fast && areas.last().unwrap() > &0.0,
        format!(
            "{tets} tets, {} steps in {:.1} s; min height {:.4e} m vs {:.4e} (|err| {:.2e} <= dhat {:.2e}); \
             areas {:?} mm2; 90-degree asymmetry {:.2e}",
            out.reports.len(),
            r.seconds,
            min,
            target,
            (min - target).abs(),
            dhat,
            areas.iter().map(|a| (a * 1e6 * 100.0).round() / 100.0).collect::<Vec<_>>(),
            asym
        ),
    )
}

fn marker_curve(out: &RunOutput) -> Vec<f64> {
    out.frames.iter().map(|f| f.markers.as_ref().unwrap().mean_displacement).collect()
}

fn friction_ordering(stick: &ScenarioRun, slip: &ScenarioRun, rotate: &ScenarioRun) -> Outcome {
    let (Ok(a), Ok(b), Ok(c)) = (&stick.output, &slip.output, &rotate.output) else {
        return outcome(false, "a scenario run failed".into());
    };
    let stick_curve = marker_curve(a);
    let slip_mean = *marker_curve(b).last().unwrap();
    let stick_mean = *stick_curve.last().unwrap();
    let press_steps = 5;
    let shear_monotone = stick_curve[press_steps..].windows(2).all(|w| w[1] >= w[0]);

    // Rotation: displacement accumulated over the rotation phase only.
    let start = c.frames[press_steps].markers.as_ref().unwrap();
    let end = c.frames.last().unwrap().markers.as_ref().unwrap();
    let radius: Vec<f64> =
        rotate.scene.config.output.markers.as_ref().unwrap().points().iter().map(|(a, b)| a.hypot(*b)).collect();
    let disp: Vec<f64> =
        start.positions.iter().zip(&end.positions).map(|(p, q)| (q[0] - p[0]).hypot(q[1] - p[1])).collect();
    let rho = spearman(&radius, &disp);
    outcome(
        stick_mean >= 0.8e-3 && slip_mean <= 0.2e-3 && rho > 0.9 && shear_monotone,
        format!(
            "mean marker displacement mu=1 {:.3} mm, mu=0 {:.3} mm; shear curve monotone {shear_monotone}; \
             rotation spearman {rho:.3} over {} markers",
            stick_mean * 1e3,
            slip_mean * 1e3,
            radius.len()
        ),
    )
}

fn newton_monotone(runs: &[&ScenarioRun]) -> Outcome {
    let mut solves = 0;
    let mut iterations = 0;
    let mut bad = Vec::new();
    for r in runs {
        let Ok(out) = &r.output else {
            bad.push(format!("{} failed", r.name));
            continue;
        };
        for rep in &out.reports {
            for log in &rep.energy_logs {
                solves += 1;
                iterations += log.len().saturating_sub(1);
                if log.windows(2).any(|w| w[1] > w[0]) {
                    bad.push(format!("{} step {}", r.name, rep.step));
                }
            }
        }
    }
    outcome(
        bad.is_empty() && solves > 0,
        format!("{solves} solves, {iterations} accepted iterations, increases at {bad:?}"),
    )
}

fn tree_files(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let files = tree_files(a);
    let compared: Vec<_> = files
        .iter()
        .filter(|f| {
            let s = f.to_string_lossy();
            s.starts_with("states") || s.starts_with("heightmaps") || s.starts_with("images") || s.ends_with(".csv")
        })
        .collect();
    let differing: Vec<String> = compared
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    let csv = compared.iter().any(|f| f.to_string_lossy().ends_with(".csv"));
    let frames = compared.iter().filter(|f| f.starts_with("states")).count();
    outcome(
        differing.is_empty() && csv && frames > 0,
        format!("{} files compared ({frames} state frames, csv {csv}), differing: {differing:?}", compared.len()),
    )
}

// ---------------------------------------------------------------------------
// 9. Metrics against a direct implementation

fn naive_luma(img: &TactileImage) -> Vec<f64> {
    img.pixels.iter().map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0).collect()
}

fn naive_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let n = 11;
    let sigma = 1.5f64;
    let mut kernel = vec![0.0; n * n];
    for l in 0..n {
        for k in 0..n {
            let (dx, dy) = (k as f64 - 5.0, l as f64 - 5.0);
            kernel[l * n + k] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - n {
        for x in 0..=w - n {
            let at = |img: &[f64], k: usize, l: usize| img[(y + l) * w + x + k];
            let (mut ma, mut mb) = (0.0, 0.0);
            for l in 0..n {
                for k in 0..n {
                    ma += kernel[l * n + k] * at(a, k, l);
                    mb += kernel[l * n + k] * at(b, k, l);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for l in 0..n {
                for k in 0..n {
                    let (da, db) = (at(a, k, l) - ma, at(b, k, l) - mb);
                    va += kernel[l * n + k] * da * da;
                    vb += kernel[l * n + k] * db * db;
                    cov += kernel[l * n + k] * da * db;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> TactileImage {
    let mut img = TactileImage::new(w, h);
    let smooth = rng.random_bool(0.5);
    let (fx, fy) = (rng.random_range(0.05..0.5), rng.random_range(0.05..0.5));
    for j in 0..h {
        for i in 0..w {
            img.pixels[j * w + i] = if smooth {
                let v = 0.5 + 0.4 * ((i as f64 * fx).sin() * (j as f64 * fy).cos());
                std::array::from_fn(|c| ((v + 0.05 * c as f64) * 255.0).clamp(0.0, 255.0) as u8)
            } else {
                std::array::from_fn(|_| rng.random())
            };
        }
    }
    img
}

fn metrics_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = [0.0f64; 3];
    let mut self_ssim = 0.0f64;
    for k in 0..50 {
        let (w, h) = (rng.random_range(11..48), rng.random_range(11..48));
        let a = random_image(&mut rng, w, h);
        let b = match k % 3 {
            0 => random_image(&mut rng, w, h),
            _ => {
                let mut b = a.clone();
                let amp = if k % 3 == 1 { 8 } else { 60 };
                for p in &mut b.pixels {
                    for c in p.iter_mut() {
                        *c = (*c as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8;
                    }
                }
                b
            }
        };
        let m = image_metrics(&a, &b).unwrap();
        let (la, lb) = (naive_luma(&a), naive_luma(&b));
        let count = la.len() as f64;
        let mae = la.iter().zip(&lb).map(|(p, q)| (p - q).abs()).sum::<f64>() / count;
        let mse = la.iter().zip(&lb).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / count;
        let psnr = if mse == 0.0 { 100.0 } else { (10.0 * (1.0 / mse).log10()).min(100.0) };
        let ssim = naive_ssim(&la, &lb, w, h);
        worst[0] = worst[0].max((m.ssim - ssim).abs());
        worst[1] = worst[1].max((m.mae - mae).abs());
        worst[2] = worst[2].max((m.psnr - psnr).abs());
        self_ssim = self_ssim.max((image_metrics(&a, &a).unwrap().ssim - 1.0).abs());
    }
    outcome(
        worst.iter().all(|e| *e <= 1e-6) && self_ssim == 0.0,
        format!(
            "50 pairs: max |diff| ssim {:.1e}, mae {:.1e}, psnr {:.1e}; |ssim(a,a) - 1| = {self_ssim:e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn compositing_identity(rendered: Option<&TactileImage>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut cases = 0;
    let mut mismatches = 0;
    let mut sims: Vec<TactileImage> = (0..20).map(|_| random_image(&mut rng, 40, 30)).collect();
    sims.extend(rendered.cloned());
    for sim in &sims {
        let real = random_image(&mut rng, sim.width, sim.height);
        let out = composite_with_reference(sim, sim, &real).unwrap();
        cases += 1;
        if out.pixels != real.pixels {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{cases} cases, {mismatches} differ from the reference"))
}

// ---------------------------------------------------------------------------

fn report(results: &mut Vec<bool>, id: usize, name: &str, seconds: f64, o: Outcome) {
    let status = if o.passed { "PASS" } else { "FAIL" };
    println!("[{status}] {id:>2} {name} ({seconds:.1} s): {}", o.detail);
    results.push(o.passed);
}

fn timed(f: impl FnOnce() -> Outcome) -> (f64, Outcome) {
    let t = Instant::now();
    let o = f();
    (t.elapsed().as_secs_f64(), o)
}

fn main() {
    let mut results = Vec::new();
    let mut check =
        |id: usize, name: &str, extra: f64, (secs, o): (f64, Outcome)| report(&mut results, id, name, secs + extra, o);

    check(1, "gradient suite", 0.0, timed(gradient_suite));

    let t = Instant::now();
    let dirs = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let markers = ("output.markers", r#"{"rows": 4, "cols": 5, "spacing": 0.0005}"#);
    let press = run_scenario("press", "press.json", &[markers], Some(dirs.0.path()));
    let press_again = run_scenario("press", "press.json", &[markers], Some(dirs.1.path()));
    let shear = run_scenario("shear", "shear.json", &[], None);
    let slip = run_scenario("shear mu=0", "shear.json", &[("contact.mu", "0")], None);
    let rotate = run_scenario("rotate", "rotate.json", &[], None);
    let deep = run_scenario("deep press", "deep_press.json", &[], None);
    let runs = [&press, &shear, &slip, &rotate, &deep];
    println!(
        "scenario runs ({:.1} s): {}",
        t.elapsed().as_secs_f64(),
        runs.iter().map(|r| format!("{} {:.1} s", r.name, r.seconds)).collect::<Vec<_>>().join(", ")
    );

    check(2, "intersection- and inversion-free", 0.0, timed(|| intersection_free(&runs)));
    check(3, "distance kernels and CCD", 0.0, timed(kernels_and_ccd));
    check(4, "implicit Euler exactness", 0.0, timed(implicit_euler_exactness));
    check(5, "press to 0.5 mm", press.seconds, timed(|| press_scenario(&press)));
    check(6, "stick/slip ordering", 0.0, timed(|| friction_ordering(&shear, &slip, &rotate)));
    check(7, "Newton monotonicity", 0.0, timed(|| newton_monotone(&runs)));
    check(8, "determinism", press_again.seconds, timed(|| determinism(dirs.0.path(), dirs.1.path())));
    check(9, "image metrics", 0.0, timed(metrics_correctness));
    let rendered = press.output.as_ref().ok().and_then(|o| o.frames.last()).and_then(|f| f.image.clone());
    check(10, "compositing identity", 0.0, timed(|| compositing_identity(rendered.as_ref())));

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
