use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{PlaneSpec, TactileError};
use crate::geometry::Vec3;

/// `rows × cols` grid centred at `center` (in-plane coordinates, m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerGrid {
    pub rows: usize,
    pub cols: usize,
    /// m
    pub spacing: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

impl MarkerGrid {
    /// In-plane grid points, row by row.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push((
                    self.center[0] + (c as f64 - (self.cols as f64 - 1.0) / 2.0) * self.spacing,
                    self.center[1] + (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.spacing,
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub triangle: usize,
    pub vertices: [usize; 3],
    pub barycentric: [f64; 3],
    pub rest: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerSet {
    pub grid: MarkerGrid,
    pub markers: Vec<Marker>,
}

/// In-plane barycentric coordinates of `(a, b)` in a projected triangle.
fn planar_barycentric(q: &[(f64, f64, f64); 3], a: f64, b: f64) -> Option<[f64; 3]> {
    let (e1a, e1b) = (q[1].0 - q[0].0, q[1].1 - q[0].1);
    let (e2a, e2b) = (q[2].0 - q[0].0, q[2].1 - q[0].1);
    let det = e1a * e2b - e2a * e1b;
    if det == 0.0 {
        return None;
    }
    let (da, db) = (a - q[0].0, b - q[0].1);
    let l1 = (da * e2b - e2a * db) / det;
    let l2 = (e1a * db - da * e1b) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

/// Attaches each grid point to the topmost front-facing surface triangle
/// under it. Points up to `tolerance` (m) outside every triangle snap to the
/// nearest one; farther points are an error.
type ProjectedTri = [(f64, f64, f64); 3];

pub fn embed_markers(
    rest: &[Vec3],
    tris: &[[usize; 3]],
    grid: &MarkerGrid,
    plane: &PlaneSpec,
) -> Result<MarkerSet, TactileError> {
    let tolerance = 1e-9;
    let (_, _, n) = plane.axes();
    let front: Vec<(usize, ProjectedTri)> = tris
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            let tn = (rest[t[1]] - rest[t[0]]).cross(&(rest[t[2]] - rest[t[0]]));
            tn.dot(&n) > 1e-12 * tn.norm()
        })
        .map(|(k, t)| (k, t.map(|i| plane.project(&rest[i]))))
        .collect();
    let mut markers = Vec::new();
    for (a, b) in grid.points() {
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for (k, q) in &front {
            let Some(l) = planar_barycentric(q, a, b) else { continue };
            let outside = -l.iter().fold(0.0f64, |m, &x| m.min(x));
            let scale = ((q[1].0 - q[0].0).hypot(q[1].1 - q[0].1)).max((q[2].0 - q[0].0).hypot(q[2].1 - q[0].1));
            if outside * scale > tolerance {
                continue;
            }
            let z = l[0] * q[0].2 + l[1] * q[1].2 + l[2] * q[2].2;
            if best.is_none_or(|(bz, _, _)| z > bz) {
                let clamped = l.map(|x| x.max(0.0));
                let s: f64 = clamped.iter().sum();
                best = Some((z, *k, clamped.map(|x| x / s)));
            }
        }
        let Some((_, k, bary)) = best else {
            return Err(TactileError::MarkerOffSurface { x: a, y: b });
        };
        let t = tris[k];
        let p = rest[t[0]] * bary[0] + rest[t[1]] * bary[1] + rest[t[2]] * bary[2];
        markers.push(Marker { triangle: k, vertices: t, barycentric: bary, rest: [p.x, p.y, p.z] });
    }
    Ok(MarkerSet { grid: *grid, markers })
}

pub fn marker_positions(set: &MarkerSet, x: &[Vec3]) -> Vec<Vec3> {
    set.markers
        .iter()
        .map(|m| {
            x[m.vertices[0]] * m.barycentric[0]
                + x[m.vertices[1]] * m.barycentric[1]
                + x[m.vertices[2]] * m.barycentric[2]
        })
        .collect()
}

/// In-plane displacement of every marker for one frame, and their mean length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkerFrame {
    pub positions: Vec<[f64; 3]>,
    pub displacements: Vec<[f64; 2]>,
    pub mean_displacement: f64,
}

pub fn marker_displacements(set: &MarkerSet, frames: &[&[Vec3]], plane: &PlaneSpec) -> Vec<MarkerFrame> {
    let (u, v, _) = plane.axes();
    frames
        .iter()
        .map(|x| {
            let pos = marker_positions(set, x);
            let disp: Vec<[f64; 2]> = pos
                .iter()
                .zip(&set.markers)
                .map(|(p, m)| {
                    let d = p - Vec3::from(m.rest);
                    [d.dot(&u), d.dot(&v)]
                })
                .collect();
            let mean = if disp.is_empty() {
                0.0
            } else {
                disp.iter().map(|d| d[0].hypot(d[1])).sum::<f64>() / disp.len() as f64
            };
            MarkerFrame {
                positions: pos.iter().map(|p| [p.x, p.y, p.z]).collect(),
                displacements: disp,
                mean_displacement: mean,
            }
        })
        .collect()
}

/// CSV with columns frame, marker_id, x, y, z, u, v.
pub fn write_marker_csv<W: Write>(out: W, frames: &[MarkerFrame]) -> Result<(), TactileError> {
    let mut w = csv::Writer::from_writer(out);
    let e = |e: csv::Error| TactileError::Csv(e.to_string());
    w.write_record(["frame", "marker_id", "x", "y", "z", "u", "v"]).map_err(e)?;
    for (f, frame) in frames.iter().enumerate() {
        for (k, (p, d)) in frame.positions.iter().zip(&frame.displacements).enumerate() {
            w.write_record([
                f.to_string(),
                k.to_string(),
                format!("{:e}", p[0]),
                format!("{:e}", p[1]),
                format!("{:e}", p[2]),
                format!("{:e}", d[0]),
                format!("{:e}", d[1]),
            ])
            .map_err(e)?;
        }
    }
    w.flush().map_err(|e| TactileError::Csv(e.to_string()))
}
