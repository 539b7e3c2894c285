//! Scenario assembly, the time-step loop and state persistence.

mod config;
mod frames;
mod script;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    apply_override, parse_config, ContactConfig, GelConfig, GelMesh, HalfSpace, IndenterConfig, IndenterMesh,
    OutputConfig, SceneConfig, SCHEMA_VERSION,
};
pub use frames::{decode_frame, encode_frame, read_frame, write_frame, FRAME_MAGIC, FRAME_VERSION};
pub use script::{script_pose, MotionScript, Phase, PhaseKind};

use crate::energy::ContactParams;
use crate::geometry::{bounds, CollisionMesh, GeometryError, Vec3};
use crate::solver::{min_pair_distance, step, Indenter, Pose, SimState, SolverConfig, SolverError, StepReport, System};
use crate::tactile::{
    embed_markers, marker_displacements, rasterize_heightmap, shade_pseudo_image, write_marker_csv, HeightMap,
    MarkerFrame, MarkerSet, PlaneSpec, TactileError, TactileImage,
};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scene: {0}")]
    Config(String),
    #[error("glued vertex set is empty but the script moves the indenter")]
    EmptyGlue,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Frame { path: PathBuf, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tactile(#[from] TactileError),
    #[error("solver failed in step {step}: {source}")]
    Solver {
        step: u64,
        #[source]
        source: SolverError,
    },
}

/// A loaded scene, ready to run.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub system: System,
    pub solver: SolverConfig,
    pub base_pose: Pose,
    /// Indenter centre in its local frame.
    pub indenter_center: Vec3,
    /// Bounding-box diagonal of the gel and the indenter at its base pose (m).
    pub diagonal: f64,
    /// Extent of the gel along z (m).
    pub thickness: f64,
    pub glued_count: usize,
    pub plane: PlaneSpec,
    pub markers: Option<MarkerSet>,
    pub steps: usize,
    pub max_step_displacement: f64,
}

/// Reads, overrides and assembles the scene at `path`. Relative paths in
/// the file resolve against its directory.
pub fn load_scene(path: &Path, overrides: &[(String, String)]) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io { path: path.to_path_buf(), source: e })?;
    let cfg = parse_config(&text, overrides)?;
    Scene::build(cfg, path.parent().unwrap_or(Path::new(".")))
}

impl Scene {
    pub fn build(cfg: SceneConfig, base_dir: &Path) -> Result<Scene, SceneError> {
        let material = cfg.gel.material;
        material.validate().map_err(|e| SceneError::Config(e.to_string()))?;
        let gel = config::build_gel(&cfg.gel.mesh, base_dir)?.with_density(material.density)?;
        let (gmin, gmax) = gel.bounds();
        let thickness = gmax.z - gmin.z;

        let mut all_points = gel.vertices.clone();
        let mut masses = gel.vertex_masses.clone();
        let n_gel = gel.vertices.len();
        let (indenter, base_pose, indenter_center) = match &cfg.indenter {
            Some(ic) => {
                let tri = config::build_indenter(&ic.mesh, base_dir)?;
                if !(ic.density > 0.0) {
                    return Err(SceneError::Config(format!("indenter.density must be > 0, got {}", ic.density)));
                }
                let pose = ic.base_pose();
                let (lmin, lmax) = tri.bounds();
                masses.extend(tri.area_weighted_masses(ic.density));
                let ind =
                    Indenter { offset: n_gel, local_vertices: tri.vertices.clone(), triangles: tri.triangles.clone() };
                all_points.extend(ind.place(&pose));
                (Some(ind), pose, (lmin + lmax) / 2.0)
            }
            None => (None, Pose::identity(), Vec3::zeros()),
        };
        let (smin, smax) = bounds(&all_points);
        let diagonal = (smax - smin).norm();

        let contact = ContactParams {
            dhat: cfg.contact.dhat.unwrap_or(cfg.contact.dhat_fraction * diagonal),
            kappa: cfg.contact.kappa,
            mu: cfg.contact.mu,
            epsv: cfg.contact.epsv,
        };
        contact.validate().map_err(|e| SceneError::Config(e.to_string()))?;

        let mut solver = cfg.solver.clone();
        if cfg.auto_newton_tol {
            solver.newton_tol = 1e-2 * diagonal;
        }
        solver.validate().map_err(|e| SceneError::Config(e.to_string()))?;

        cfg.script.validate(thickness)?;
        let glue = cfg.glue.unwrap_or(HalfSpace { point: [0.0, 0.0, gmin.z], normal: [0.0, 0.0, -1.0] });
        let glued: Vec<bool> = gel.vertices.iter().map(|p| glue.contains(p, 1e-9 * diagonal)).collect();
        let glued_count = glued.iter().filter(|&&g| g).count();
        log::info!("glued {glued_count} of {n_gel} gel vertices");
        if glued_count == 0 && cfg.script.moves() {
            return Err(SceneError::EmptyGlue);
        }

        let shifted: Vec<[usize; 3]> = indenter
            .as_ref()
            .map(|ind| ind.triangles.iter().map(|t| t.map(|i| i + ind.offset)).collect())
            .unwrap_or_default();
        let mut surfaces: Vec<(u32, bool, &[[usize; 3]])> = vec![(0, false, &gel.surface_tris)];
        if indenter.is_some() {
            surfaces.push((1, true, &shifted));
        }
        let collision = CollisionMesh::from_surfaces(all_points.len(), &surfaces);
        let start = min_pair_distance(&collision, &all_points, contact.dhat)
            .map_err(|e| SceneError::Config(format!("initial configuration: {e}")))?;
        if !(start > 0.0) {
            return Err(SceneError::Config("indenter intersects the gel at its base pose".into()));
        }

        let plane = match &cfg.output.plane {
            Some(p) => p.clone(),
            None => {
                let n = cfg.output.resolution;
                let extent = DEFAULT_WINDOW * (gmax.x - gmin.x).min(gmax.y - gmin.y);
                PlaneSpec {
                    origin: [(gmin.x + gmax.x) / 2.0, (gmin.y + gmax.y) / 2.0, gmin.z],
                    u: [1.0, 0.0, 0.0],
                    v: [0.0, 1.0, 0.0],
                    width: n,
                    height: n,
                    pixel_size: extent / n as f64,
                }
            }
        };
        plane.validate()?;
        let markers = match &cfg.output.markers {
            Some(g) => Some(embed_markers(&gel.vertices, &gel.surface_tris, g, &plane)?),
            None => None,
        };

        let steps = cfg.steps.unwrap_or_else(|| (cfg.script.duration() / solver.h - 1e-9).ceil().max(0.0) as usize);
        let max_step_displacement = cfg.max_step_displacement.unwrap_or(thickness);
        let system =
            System { gel, material, contact, collision, masses, glued, indenter, gravity: Vec3::from(cfg.gravity) };
        Ok(Scene {
            config: cfg,
            system,
            solver,
            base_pose,
            indenter_center,
            diagonal,
            thickness,
            glued_count,
            plane,
            markers,
            steps,
            max_step_displacement,
        })
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        script_pose(&self.config.script, &self.base_pose, &self.indenter_center, t)
    }

    pub fn initial_state(&self) -> SimState {
        SimState::at_rest(&self.system, self.pose_at(0.0))
    }

    /// Fails if any of the first `n_steps` steps moves an indenter vertex by
    /// `max_step_displacement` or more.
    pub fn check_step_bound(&self, n_steps: usize) -> Result<(), SceneError> {
        let Some(ind) = &self.system.indenter else { return Ok(()) };
        let h = self.solver.h;
        let mut prev = ind.place(&self.pose_at(0.0));
        for k in 1..=n_steps {
            let next = ind.place(&self.pose_at(k as f64 * h));
            let d = prev.iter().zip(&next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            if d >= self.max_step_displacement {
                return Err(SceneError::Config(format!(
                    "indenter moves {d:e} m in step {k}, bound is {:e} m",
                    self.max_step_displacement
                )));
            }
            prev = next;
        }
        Ok(())
    }

    /// Height map, pseudo-image and marker displacements of one state.
    pub fn observe(&self, state: &SimState) -> Result<TactileFrame, SceneError> {
        let n_gel = self.system.num_gel_vertices();
        let x = &state.x[..n_gel];
        let heightmap = rasterize_heightmap(x, &self.system.gel.surface_tris, &self.plane);
        let image = if self.config.output.images {
            Some(shade_pseudo_image(&heightmap, &self.config.output.shading)?)
        } else {
            None
        };
        let markers = self.markers.as_ref().map(|m| marker_displacements(m, &[x], &self.plane).remove(0));
        Ok(TactileFrame { heightmap, image, markers })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    pub heightmap: HeightMap,
    pub image: Option<TactileImage>,
    pub markers: Option<MarkerFrame>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub newton_iterations: usize,
    pub wall_time_s: f64,
    /// Smallest contact distance seen over the run (m); infinite if the
    /// bodies never came within the activation distance.
    pub min_distance: f64,
    pub converged: bool,
}

/// Trajectory index written next to the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryIndex {
    pub schema_version: u32,
    pub n_gel: usize,
    pub n_total: usize,
    pub h: f64,
    pub plane: PlaneSpec,
    pub surface_tris: Vec<[usize; 3]>,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub step: u64,
    pub time: f64,
    pub state: Option<String>,
    pub heightmap: Option<String>,
    pub image: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub states: Vec<SimState>,
    pub frames: Vec<TactileFrame>,
    pub reports: Vec<StepReport>,
    pub summary: RunSummary,
    /// Written files, relative to the output directory.
    pub files: Vec<String>,
}

/// A failed run with everything computed before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: SceneError,
    pub partial: Box<RunOutput>,
}

/// Side of the default imaging window as a fraction of the gel footprint;
/// keeps the bulging rim out of view.
pub const DEFAULT_WINDOW: f64 = 0.6;

pub const TRAJECTORY_FILE: &str = "trajectory.json";
pub const MARKERS_FILE: &str = "markers.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";

struct Writer<'a> {
    dir: &'a Path,
    index: TrajectoryIndex,
    diagnostics: String,
}

impl Writer<'_> {
    fn io(path: PathBuf) -> impl FnOnce(std::io::Error) -> SceneError {
        move |e| SceneError::Io { path, source: e }
    }

    fn frame(
        &mut self,
        scene: &Scene,
        state: &SimState,
        frame: &TactileFrame,
        files: &mut Vec<String>,
    ) -> Result<(), SceneError> {
        let out = &scene.config.output;
        let k = state.step;
        let mut entry = FrameEntry { step: k, time: state.time, state: None, heightmap: None, image: None };
        if out.states {
            let rel = format!("states/frame_{k:05}.bin");
            write_frame(&self.dir.join(&rel), state, scene.system.num_gel_vertices())?;
            files.push(rel.clone());
            entry.state = Some(rel);
        }
        if out.heightmaps {
            let rel = format!("heightmaps/height_{k:05}.png");
            frame.heightmap.write_png(&self.dir.join(&rel), out.heightmap_scale)?;
            files.push(rel.clone());
            files.push(format!("heightmaps/height_{k:05}.json"));
            entry.heightmap = Some(rel);
        }
        if let Some(img) = &frame.image {
            let rel = format!("images/tactile_{k:05}.png");
            img.write_png(&self.dir.join(&rel))?;
            files.push(rel.clone());
            entry.image = Some(rel);
        }
        self.index.frames.push(entry);
        Ok(())
    }

    fn finish(&mut self, output: &mut RunOutput) -> Result<(), SceneError> {
        let p = self.dir.join(TRAJECTORY_FILE);
        std::fs::write(&p, serde_json::to_string_pretty(&self.index).expect("json")).map_err(Self::io(p))?;
        output.files.push(TRAJECTORY_FILE.into());
        let p = self.dir.join(DIAGNOSTICS_FILE);
        std::fs::write(&p, &self.diagnostics).map_err(Self::io(p))?;
        output.files.push(DIAGNOSTICS_FILE.into());
        let marker_frames: Vec<MarkerFrame> = output.frames.iter().filter_map(|f| f.markers.clone()).collect();
        if !marker_frames.is_empty() {
            let p = self.dir.join(MARKERS_FILE);
            let file = std::fs::File::create(&p).map_err(Self::io(p))?;
            write_marker_csv(std::io::BufWriter::new(file), &marker_frames)?;
            output.files.push(MARKERS_FILE.into());
        }
        Ok(())
    }
}

/// Runs `n_steps` steps from rest. With `out_dir` set, frames, tactile
/// outputs, the trajectory index and per-step diagnostics are written there.
pub fn run(scene: &Scene, n_steps: usize, out_dir: Option<&Path>) -> Result<RunOutput, RunFailure> {
    let mut output = RunOutput::default();
    let fail = |error: SceneError, output: RunOutput| RunFailure { error, partial: Box::new(output) };
    if let Err(e) = scene.check_step_bound(n_steps) {
        return Err(fail(e, output));
    }
    let start = Instant::now();
    let mut writer = match out_dir {
        Some(dir) => {
            for sub in ["states", "heightmaps", "images"] {
                let p = dir.join(sub);
                if let Err(e) = std::fs::create_dir_all(&p) {
                    return Err(fail(SceneError::Io { path: p, source: e }, output));
                }
            }
            Some(Writer {
                dir,
                index: TrajectoryIndex {
                    schema_version: FRAME_VERSION,
                    n_gel: scene.system.num_gel_vertices(),
                    n_total: scene.system.num_vertices(),
                    h: scene.solver.h,
                    plane: scene.plane.clone(),
                    surface_tris: scene.system.gel.surface_tris.clone(),
                    frames: Vec::new(),
                },
                diagnostics: String::new(),
            })
        }
        None => None,
    };

    let mut state = scene.initial_state();
    output.summary.converged = true;
    output.summary.min_distance =
        min_pair_distance(&scene.system.collision, &state.x, scene.system.contact.dhat).unwrap_or(f64::INFINITY);
    let result = (|| -> Result<(), SceneError> {
        let frame = scene.observe(&state)?;
        if let Some(w) = writer.as_mut() {
            w.frame(scene, &state, &frame, &mut output.files)?;
        }
        output.frames.push(frame);
        output.states.push(state.clone());
        for k in 1..=n_steps {
            let target = scene.pose_at(k as f64 * scene.solver.h);
            let (next, report) = step(&scene.system, &state, &target, &scene.solver)
                .map_err(|source| SceneError::Solver { step: k as u64, source })?;
            output.summary.steps = k;
            output.summary.newton_iterations += report.newton_iters;
            output.summary.converged &= report.converged;
            output.summary.min_distance = output.summary.min_distance.min(report.min_distance);
            let line = serde_json::to_string(&report).expect("json");
            log::info!("{line}");
            let frame = scene.observe(&next)?;
            if let Some(w) = writer.as_mut() {
                w.diagnostics.push_str(&line);
                w.diagnostics.push('\n');
                w.frame(scene, &next, &frame, &mut output.files)?;
            }
            output.frames.push(frame);
            output.reports.push(report);
            output.states.push(next.clone());
            state = next;
        }
        Ok(())
    })();
    output.summary.wall_time_s = start.elapsed().as_secs_f64();
    let finished = match writer.as_mut() {
        Some(w) => w.finish(&mut output),
        None => Ok(()),
    };
    match (result, finished) {
        (Err(e), _) | (Ok(()), Err(e)) => Err(fail(e, output)),
        (Ok(()), Ok(())) => Ok(output),
    }
}

/// Reads a trajectory written by [`run`]: the index and every state frame.
pub fn read_trajectory(dir: &Path) -> Result<(TrajectoryIndex, Vec<SimState>), SceneError> {
    let p = dir.join(TRAJECTORY_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| SceneError::Io { path: p.clone(), source: e })?;
    let index: TrajectoryIndex = serde_json::from_str(&text)
        .map_err(|e| SceneError::Schema { path: TRAJECTORY_FILE.into(), message: e.to_string() })?;
    let mut states = Vec::with_capacity(index.frames.len());
    for f in &index.frames {
        let rel = f
            .state
            .as_ref()
            .ok_or_else(|| SceneError::Config(format!("trajectory frame {} has no stored state", f.step)))?;
        let (s, n_gel) = read_frame(&dir.join(rel))?;
        if n_gel != index.n_gel || s.x.len() != index.n_total {
            return Err(SceneError::Frame {
                path: dir.join(rel),
                message: "vertex counts differ from the index".into(),
            });
        }
        states.push(s);
    }
    if states.is_empty() {
        return Err(SceneError::Config(format!("{} lists no frames", p.display())));
    }
    Ok((index, states))
}
