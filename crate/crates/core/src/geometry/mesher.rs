//! Procedural meshes for fixtures and default scenes: boxes and cylinders
//! (tets), UV spheres and textured coins (closed triangle surfaces).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::mesh::{signed_volume, TetMesh, TriMesh, Vec3};
use super::GeometryError;

/// Parity-0 cube split: the central tet uses the even corners.
const SPLIT_EVEN: [[usize; 4]; 5] = [
    [0b000, 0b011, 0b101, 0b110],
    [0b001, 0b000, 0b011, 0b101],
    [0b010, 0b000, 0b011, 0b110],
    [0b100, 0b000, 0b101, 0b110],
    [0b111, 0b011, 0b101, 0b110],
];
const SPLIT_ODD: [[usize; 4]; 5] = [
    [0b001, 0b010, 0b100, 0b111],
    [0b000, 0b001, 0b010, 0b100],
    [0b011, 0b001, 0b010, 0b111],
    [0b101, 0b001, 0b100, 0b111],
    [0b110, 0b010, 0b100, 0b111],
];

/// Structured grid of `nx*ny*nz` cubes, each split into five tets with
/// alternating orientation so faces conform. With even `nx == ny` the result
/// is invariant under quarter turns about the vertical axis through the box
/// center.
pub fn box_tets(min: Vec3, max: Vec3, n: [usize; 3]) -> (Vec<Vec3>, Vec<[usize; 4]>) {
    let [nx, ny, nz] = n;
    let id = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let f = Vec3::new(i as f64 / nx as f64, j as f64 / ny as f64, k as f64 / nz as f64);
                vertices.push(min + (max - min).component_mul(&f));
            }
        }
    }
    let mut tets = Vec::with_capacity(5 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let corner = |c: usize| id(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let split = if (i + j + k) % 2 == 0 { &SPLIT_EVEN } else { &SPLIT_ODD };
                for t in split {
                    tets.push(t.map(corner));
                }
            }
        }
    }
    orient(&vertices, &mut tets);
    (vertices, tets)
}

fn orient(x: &[Vec3], tets: &mut [[usize; 4]]) {
    for t in tets.iter_mut() {
        if signed_volume(x, t) < 0.0 {
            t.swap(2, 3);
        }
    }
}

pub fn box_mesh(min: Vec3, max: Vec3, n: [usize; 3]) -> Result<TetMesh, GeometryError> {
    let (v, t) = box_tets(min, max, n);
    Ok(TetMesh::new(v, t)?.mesh)
}

/// Solid cylinder with its axis along +z, base at `z = 0`. A `cells x cells`
/// square grid is mapped onto the disk by concentric squares to concentric
/// circles; `cells` must be even.
pub fn cylinder_mesh(radius: f64, thickness: f64, cells: usize, layers: usize) -> Result<TetMesh, GeometryError> {
    if !cells.is_multiple_of(2) || cells == 0 || layers == 0 {
        return Err(GeometryError::InvalidParameter(format!(
            "cylinder needs an even positive cell count and at least one layer (cells={cells}, layers={layers})"
        )));
    }
    let (mut v, mut t) = box_tets(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, thickness), [cells, cells, layers]);
    for p in &mut v {
        let r = p.x.hypot(p.y);
        if r > 0.0 {
            let s = p.x.abs().max(p.y.abs()) / r;
            p.x *= radius * s;
            p.y *= radius * s;
        }
    }
    orient(&v, &mut t);
    Ok(TetMesh::new(v, t)?.mesh)
}

/// UV sphere; `segments` should be a multiple of 4 for quarter-turn symmetry.
pub fn uv_sphere(center: Vec3, radius: f64, segments: usize, rings: usize) -> Result<TriMesh, GeometryError> {
    if segments < 3 || rings < 2 {
        return Err(GeometryError::InvalidParameter("sphere needs segments >= 3 and rings >= 2".into()));
    }
    let mut v = vec![center + Vec3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let phi = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let th = TAU * s as f64 / segments as f64;
            v.push(center + radius * Vec3::new(phi.sin() * th.cos(), phi.sin() * th.sin(), phi.cos()));
        }
    }
    v.push(center - Vec3::new(0.0, 0.0, radius));
    let south = v.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut f = Vec::new();
    for s in 0..segments {
        f.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
            f.push([a, c, d]);
            f.push([a, d, b]);
        }
    }
    for s in 0..segments {
        f.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    TriMesh::new(v, f)
}

/// Relief pattern on the bottom face of a coin-shaped indenter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoinRelief {
    Flat,
    /// Concentric ridges `amplitude * (1 + cos(2 pi r / wavelength)) / 2`
    /// protruding below the base plane.
    Rings {
        amplitude: f64,
        wavelength: f64,
    },
}

/// Closed coin (short cylinder) surface whose bottom face sits at `z = 0`
/// (lowest relief point) and whose top is at `z = thickness`.
pub fn textured_coin(
    radius: f64,
    thickness: f64,
    relief: CoinRelief,
    radial: usize,
    segments: usize,
) -> Result<TriMesh, GeometryError> {
    if radial < 2 || segments < 3 {
        return Err(GeometryError::InvalidParameter("coin needs radial >= 2 and segments >= 3".into()));
    }
    let amp = match relief {
        CoinRelief::Flat => 0.0,
        CoinRelief::Rings { amplitude, .. } => amplitude,
    };
    let depth = |r: f64| match relief {
        CoinRelief::Flat => 0.0,
        // the rim is kept flat so the side wall meets a planar edge
        CoinRelief::Rings { amplitude, wavelength } if r < radius * (1.0 - 1.0 / radial as f64) => {
            amplitude * 0.5 * (1.0 + (TAU * r / wavelength).cos())
        }
        CoinRelief::Rings { .. } => 0.0,
    };
    let mut v = vec![Vec3::new(0.0, 0.0, amp - depth(0.0))];
    for r in 1..=radial {
        let rr = radius * r as f64 / radial as f64;
        for s in 0..segments {
            let th = TAU * s as f64 / segments as f64;
            v.push(Vec3::new(rr * th.cos(), rr * th.sin(), amp - depth(rr)));
        }
    }
    let bottom = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let top_c = v.len();
    v.push(Vec3::new(0.0, 0.0, amp + thickness));
    let top0 = v.len();
    for s in 0..segments {
        let th = TAU * s as f64 / segments as f64;
        v.push(Vec3::new(radius * th.cos(), radius * th.sin(), amp + thickness));
    }
    let top = |s: usize| top0 + s % segments;
    let mut f = Vec::new();
    for s in 0..segments {
        f.push([0, bottom(1, s + 1), bottom(1, s)]);
    }
    for r in 1..radial {
        for s in 0..segments {
            let (a, b, c, d) = (bottom(r, s), bottom(r, s + 1), bottom(r + 1, s), bottom(r + 1, s + 1));
            f.push([a, d, c]);
            f.push([a, b, d]);
        }
    }
    for s in 0..segments {
        let (a, b) = (bottom(radial, s), bottom(radial, s + 1));
        f.push([a, b, top(s + 1)]);
        f.push([a, top(s + 1), top(s)]);
        f.push([top_c, top(s), top(s + 1)]);
    }
    TriMesh::new(v, f)
}
