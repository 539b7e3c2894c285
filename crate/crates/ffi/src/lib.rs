//! C ABI for tacsim.
//!
//! Every function returns a [`TacsimStatus`]. On failure the message is
//! available from [`tacsim_last_error`] on the same thread until the next
//! failing call. Handles are opaque and must be released with their `_free`
//! function; passing null to a `_free` function is a no-op.
//!
//! Buffers are caller-owned. Functions that fill a buffer take its length in
//! elements and fail with `TACSIM_BUFFER_TOO_SMALL` when it is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tacsim::cli::{exit_code, EXIT_CONFIG, EXIT_DIMENSION_MISMATCH, EXIT_IO, EXIT_SOLVER, EXIT_USAGE};
use tacsim::scene::{load_scene, Scene, SceneError, TactileFrame};
use tacsim::solver::{step, SimState};
use tacsim::tactile::{composite_with_reference, image_metrics, TactileImage};

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TacsimStatus {
    TACSIM_OK = 0,
    TACSIM_INVALID_ARGUMENT = 2,
    TACSIM_CONFIG = 3,
    TACSIM_IO = 4,
    TACSIM_SOLVER = 5,
    TACSIM_DIMENSION_MISMATCH = 7,
    TACSIM_NULL_POINTER = 8,
    TACSIM_BUFFER_TOO_SMALL = 9,
    TACSIM_PANIC = 10,
}

use TacsimStatus::*;

/// Opaque simulation handle: a loaded scene and its current state.
pub struct TacsimSim {
    scene: Scene,
    state: SimState,
    frame: TactileFrame,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TacsimImageMetrics {
    pub ssim: f64,
    pub mae: f64,
    pub psnr: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let msg = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: TacsimStatus, message: impl Into<String>) -> TacsimStatus {
    set_error(message);
    status
}

fn status_of(error: tacsim::Error) -> TacsimStatus {
    let status = match exit_code(&error) {
        EXIT_USAGE => TACSIM_INVALID_ARGUMENT,
        EXIT_CONFIG => TACSIM_CONFIG,
        EXIT_IO => TACSIM_IO,
        EXIT_SOLVER => TACSIM_SOLVER,
        EXIT_DIMENSION_MISMATCH => TACSIM_DIMENSION_MISMATCH,
        _ => TACSIM_INVALID_ARGUMENT,
    };
    fail(status, error.to_string())
}

fn guard(f: impl FnOnce() -> TacsimStatus) -> TacsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(TACSIM_PANIC, format!("panic: {msg}"))
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(TACSIM_NULL_POINTER, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn tacsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn tacsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a scene configuration and places it at rest in `*out`.
///
/// # Safety
/// `config_path` must be a nul-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_load(config_path: *const c_char, out: *mut *mut TacsimSim) -> TacsimStatus {
    guard(|| {
        non_null!(config_path, out);
        let Ok(path) = CStr::from_ptr(config_path).to_str() else {
            return fail(TACSIM_INVALID_ARGUMENT, "config path is not valid UTF-8");
        };
        let scene = match load_scene(Path::new(path), &[]) {
            Ok(s) => s,
            Err(e) => return status_of(e.into()),
        };
        let state = scene.initial_state();
        let frame = match scene.observe(&state) {
            Ok(f) => f,
            Err(e) => return status_of(e.into()),
        };
        *out = Box::into_raw(Box::new(TacsimSim { scene, state, frame }));
        TACSIM_OK
    })
}

/// # Safety
/// `sim` must come from [`tacsim_sim_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_free(sim: *mut TacsimSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances the simulation by `n_steps` time steps. On a solver failure the
/// handle keeps the last successful state.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_step(sim: *mut TacsimSim, n_steps: usize) -> TacsimStatus {
    guard(|| {
        non_null!(sim);
        let sim = &mut *sim;
        let done = sim.state.step as usize;
        if let Err(e) = sim.scene.check_step_bound(done + n_steps) {
            return status_of(e.into());
        }
        let h = sim.scene.solver.h;
        for k in done + 1..=done + n_steps {
            let target = sim.scene.pose_at(k as f64 * h);
            let next = match step(&sim.scene.system, &sim.state, &target, &sim.scene.solver) {
                Ok((next, _)) => next,
                Err(source) => return status_of(SceneError::Solver { step: k as u64, source }.into()),
            };
            let frame = match sim.scene.observe(&next) {
                Ok(f) => f,
                Err(e) => return status_of(e.into()),
            };
            sim.state = next;
            sim.frame = frame;
        }
        TACSIM_OK
    })
}

/// Number of steps configured in the scene's motion script.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_scripted_steps(sim: *const TacsimSim, out: *mut usize) -> TacsimStatus {
    guard(|| {
        non_null!(sim, out);
        *out = (*sim).scene.steps;
        TACSIM_OK
    })
}

/// Current simulated time in seconds and the number of completed steps.
///
/// # Safety
/// `sim` must be a live handle; `time` and `steps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_time(sim: *const TacsimSim, time: *mut f64, steps: *mut u64) -> TacsimStatus {
    guard(|| {
        non_null!(sim, time, steps);
        *time = (*sim).state.time;
        *steps = (*sim).state.step;
        TACSIM_OK
    })
}

/// Vertex counts: gel vertices first, then indenter vertices.
///
/// # Safety
/// `sim` must be a live handle; `n_gel` and `n_total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_vertex_count(
    sim: *const TacsimSim,
    n_gel: *mut usize,
    n_total: *mut usize,
) -> TacsimStatus {
    guard(|| {
        non_null!(sim, n_gel, n_total);
        *n_gel = (*sim).scene.system.num_gel_vertices();
        *n_total = (*sim).scene.system.num_vertices();
        TACSIM_OK
    })
}

/// Copies positions as `x y z` triples into `out`, which holds `len` doubles
/// and needs at least `3 * n_total`.
///
/// # Safety
/// `sim` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_positions(sim: *const TacsimSim, out: *mut f64, len: usize) -> TacsimStatus {
    guard(|| {
        non_null!(sim, out);
        let x = &(*sim).state.x;
        if len < 3 * x.len() {
            return fail(TACSIM_BUFFER_TOO_SMALL, format!("positions need {} doubles, got {len}", 3 * x.len()));
        }
        let out = std::slice::from_raw_parts_mut(out, 3 * x.len());
        for (dst, p) in out.chunks_exact_mut(3).zip(x) {
            dst.copy_from_slice(p.as_slice());
        }
        TACSIM_OK
    })
}

/// Height map dimensions of the current frame.
///
/// # Safety
/// `sim` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_heightmap_size(
    sim: *const TacsimSim,
    width: *mut usize,
    height: *mut usize,
) -> TacsimStatus {
    guard(|| {
        non_null!(sim, width, height);
        let spec = &(*sim).frame.heightmap.spec;
        *width = spec.width;
        *height = spec.height;
        TACSIM_OK
    })
}

/// Copies the current height map, row-major, into `out`. Pixels outside the
/// gel surface are NaN.
///
/// # Safety
/// `sim` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_heightmap(sim: *const TacsimSim, out: *mut f64, len: usize) -> TacsimStatus {
    guard(|| {
        non_null!(sim, out);
        let map = &(*sim).frame.heightmap;
        let n = map.values.len();
        if len < n {
            return fail(TACSIM_BUFFER_TOO_SMALL, format!("height map needs {n} doubles, got {len}"));
        }
        let out = std::slice::from_raw_parts_mut(out, n);
        for ((dst, &v), &m) in out.iter_mut().zip(&map.values).zip(&map.mask) {
            *dst = if m { v } else { f64::NAN };
        }
        TACSIM_OK
    })
}

/// Copies the current pseudo-image as interleaved RGB8 into `out`, which
/// needs `3 * width * height` bytes. Fails with `TACSIM_CONFIG` if the scene
/// does not render images.
///
/// # Safety
/// `sim` must be a live handle; `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tacsim_sim_image(sim: *const TacsimSim, out: *mut u8, len: usize) -> TacsimStatus {
    guard(|| {
        non_null!(sim, out);
        let Some(img) = &(*sim).frame.image else {
            return fail(TACSIM_CONFIG, "scene has image output disabled");
        };
        write_rgb(img, out, len)
    })
}

unsafe fn write_rgb(img: &TactileImage, out: *mut u8, len: usize) -> TacsimStatus {
    let n = 3 * img.pixels.len();
    if len < n {
        return fail(TACSIM_BUFFER_TOO_SMALL, format!("image needs {n} bytes, got {len}"));
    }
    let out = std::slice::from_raw_parts_mut(out, n);
    for (dst, px) in out.chunks_exact_mut(3).zip(&img.pixels) {
        dst.copy_from_slice(px);
    }
    TACSIM_OK
}

unsafe fn read_rgb(data: *const u8, width: usize, height: usize) -> TactileImage {
    let mut img = TactileImage::new(width, height);
    let src = std::slice::from_raw_parts(data, 3 * width * height);
    for (px, s) in img.pixels.iter_mut().zip(src.chunks_exact(3)) {
        *px = [s[0], s[1], s[2]];
    }
    img
}

fn checked_area(width: usize, height: usize) -> Result<(), TacsimStatus> {
    match width.checked_mul(height).and_then(|n| n.checked_mul(3)) {
        Some(n) if n > 0 => Ok(()),
        _ => Err(fail(TACSIM_INVALID_ARGUMENT, format!("bad image size {width}x{height}"))),
    }
}

/// SSIM, MAE and PSNR between two interleaved RGB8 images of equal size.
///
/// # Safety
/// `a` and `b` must each point to `3 * width * height` readable bytes; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn tacsim_image_metrics(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    out: *mut TacsimImageMetrics,
) -> TacsimStatus {
    guard(|| {
        non_null!(a, b, out);
        if let Err(s) = checked_area(width, height) {
            return s;
        }
        match image_metrics(&read_rgb(a, width, height), &read_rgb(b, width, height)) {
            Ok(m) => {
                *out = TacsimImageMetrics { ssim: m.ssim, mae: m.mae, psnr: m.psnr };
                TACSIM_OK
            }
            Err(e) => status_of(e.into()),
        }
    })
}

/// Composites a simulated image onto a real reference frame: adds the
/// per-pixel difference between `sim` and `sim_ref` to `real_ref`. All four
/// buffers are interleaved RGB8 of the same size.
///
/// # Safety
/// The three inputs must each point to `3 * width * height` readable bytes;
/// `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tacsim_composite(
    sim: *const u8,
    sim_ref: *const u8,
    real_ref: *const u8,
    width: usize,
    height: usize,
    out: *mut u8,
    len: usize,
) -> TacsimStatus {
    guard(|| {
        non_null!(sim, sim_ref, real_ref, out);
        if let Err(s) = checked_area(width, height) {
            return s;
        }
        let (s, r, q) =
            (read_rgb(sim, width, height), read_rgb(sim_ref, width, height), read_rgb(real_ref, width, height));
        match composite_with_reference(&s, &r, &q) {
            Ok(img) => write_rgb(&img, out, len),
            Err(e) => status_of(e.into()),
        }
    })
}
