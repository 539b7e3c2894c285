//! Narrow phase: squared distances between point-triangle and edge-edge
//! primitive pairs with exact derivatives, plus additive CCD.

mod ccd;
mod kernels;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ccd::{ccd_toi, pair_toi, DEFAULT_CCD_SLACK};
pub use kernels::{Grad12, Hess12, Kernel};

type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("degenerate triangle (area {area:e} below tolerance)")]
    DegenerateTriangle { area: f64 },
    #[error("zero-length edge")]
    ZeroLengthEdge,
    #[error("pair {indices:?} is already intersecting at the start of the motion")]
    StartIntersecting { indices: [usize; 4] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    PointTriangle,
    EdgeEdge,
}

/// Closest-feature case of a point-triangle pair. Edge `k` joins triangle
/// corners `k` and `(k + 1) % 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PtRegion {
    Vertex(u8),
    Edge(u8),
    Interior,
}

/// Closest-feature case of an edge-edge pair (edge `a` = first two points).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EeRegion {
    EndpointEndpoint {
        a: u8,
        b: u8,
    },
    /// endpoint of `a` against the interior of `b`
    EndpointInterior {
        a: u8,
    },
    /// interior of `a` against an endpoint of `b`
    InteriorEndpoint {
        b: u8,
    },
    InteriorInterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Pt(PtRegion),
    Ee(EeRegion),
}

impl PtRegion {
    pub fn kernel(self) -> Kernel {
        match self {
            PtRegion::Vertex(i) => Kernel::PointPoint(0, 1 + i as usize),
            PtRegion::Edge(k) => Kernel::PointLine(0, 1 + k as usize, 1 + (k as usize + 1) % 3),
            PtRegion::Interior => Kernel::PointPlane,
        }
    }
}

impl EeRegion {
    pub fn kernel(self) -> Kernel {
        match self {
            EeRegion::EndpointEndpoint { a, b } => Kernel::PointPoint(a as usize, 2 + b as usize),
            EeRegion::EndpointInterior { a } => Kernel::PointLine(a as usize, 2, 3),
            EeRegion::InteriorEndpoint { b } => Kernel::PointLine(2 + b as usize, 0, 1),
            EeRegion::InteriorInterior => Kernel::LineLine,
        }
    }

    fn swapped(self) -> Self {
        match self {
            EeRegion::EndpointEndpoint { a, b } => EeRegion::EndpointEndpoint { a: b, b: a },
            EeRegion::EndpointInterior { a } => EeRegion::InteriorEndpoint { b: a },
            EeRegion::InteriorEndpoint { b } => EeRegion::EndpointInterior { a: b },
            EeRegion::InteriorInterior => EeRegion::InteriorInterior,
        }
    }
}

impl Region {
    pub fn kernel(self) -> Kernel {
        match self {
            Region::Pt(r) => r.kernel(),
            Region::Ee(r) => r.kernel(),
        }
    }
}

/// Candidate pair: four global vertex indices. Point-triangle pairs store
/// `[p, t0, t1, t2]`, edge-edge pairs `[a0, a1, b0, b1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairIndex {
    pub kind: PairKind,
    pub indices: [usize; 4],
}

/// A pair with its evaluated squared distance and closest-feature case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitivePair {
    pub kind: PairKind,
    pub indices: [usize; 4],
    pub region: Region,
    pub d2: f64,
}

impl PairIndex {
    pub fn points(&self, x: &[Vec3]) -> [Vec3; 4] {
        self.indices.map(|i| x[i])
    }

    /// Squared distance and region, no derivatives.
    pub fn evaluate(&self, x: &[Vec3]) -> Result<PrimitivePair, DistanceError> {
        let [p0, p1, p2, p3] = self.points(x);
        let (d2, region) = match self.kind {
            PairKind::PointTriangle => {
                let (d2, r) = point_triangle_distance(&p0, &p1, &p2, &p3)?;
                (d2, Region::Pt(r))
            }
            PairKind::EdgeEdge => {
                let (d2, r, _) = edge_edge_distance(&p0, &p1, &p2, &p3)?;
                (d2, Region::Ee(r))
            }
        };
        Ok(PrimitivePair { kind: self.kind, indices: self.indices, region, d2 })
    }
}

/// Full result of a distance query with derivatives wrt the 12 stacked
/// coordinates of the pair.
#[derive(Debug, Clone)]
pub struct DistanceDerivatives<R> {
    pub d2: f64,
    pub region: R,
    pub gradient: Grad12,
    pub hessian: Hess12,
}

fn check_triangle(t0: &Vec3, t1: &Vec3, t2: &Vec3) -> Result<(), DistanceError> {
    let area = 0.5 * (t1 - t0).cross(&(t2 - t0)).norm();
    let scale2 = (t1 - t0).norm_squared().max((t2 - t0).norm_squared()).max((t2 - t1).norm_squared());
    if !(area > 1e-14 * scale2) {
        return Err(DistanceError::DegenerateTriangle { area });
    }
    Ok(())
}

/// Closest-feature classification of `p` against the closed triangle.
pub fn classify_point_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> PtRegion {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return PtRegion::Vertex(0);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return PtRegion::Vertex(1);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return PtRegion::Edge(0);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return PtRegion::Vertex(2);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return PtRegion::Edge(2);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return PtRegion::Edge(1);
    }
    PtRegion::Interior
}

/// Squared point-triangle distance and region without derivatives.
pub fn point_triangle_distance(p: &Vec3, t0: &Vec3, t1: &Vec3, t2: &Vec3) -> Result<(f64, PtRegion), DistanceError> {
    check_triangle(t0, t1, t2)?;
    let r = classify_point_triangle(p, t0, t1, t2);
    let d2 = r.kernel().value(&[*p, *t0, *t1, *t2]).max(0.0);
    Ok((d2, r))
}

pub fn point_triangle_d2(
    p: &Vec3,
    t0: &Vec3,
    t1: &Vec3,
    t2: &Vec3,
) -> Result<DistanceDerivatives<PtRegion>, DistanceError> {
    check_triangle(t0, t1, t2)?;
    let region = classify_point_triangle(p, t0, t1, t2);
    let (d2, gradient, hessian) = region.kernel().derivatives(&[*p, *t0, *t1, *t2]);
    Ok(DistanceDerivatives { d2: d2.max(0.0), region, gradient, hessian })
}

fn point_segment_param(p: &Vec3, e0: &Vec3, e1: &Vec3) -> f64 {
    let e = e1 - e0;
    (p - e0).dot(&e) / e.norm_squared()
}

/// Whether two edge directions are flagged as nearly parallel.
pub fn nearly_parallel(u: &Vec3, v: &Vec3) -> bool {
    u.cross(v).norm_squared() < 1e-12 * u.norm_squared() * v.norm_squared()
}

fn lex_greater(a: [&Vec3; 2], b: [&Vec3; 2]) -> bool {
    let fa = [a[0].x, a[0].y, a[0].z, a[1].x, a[1].y, a[1].z];
    let fb = [b[0].x, b[0].y, b[0].z, b[1].x, b[1].y, b[1].z];
    fa.partial_cmp(&fb) == Some(std::cmp::Ordering::Greater)
}

/// Classification in a fixed argument order; callers canonicalize first.
fn classify_edge_edge_ordered(x: &[Vec3; 4]) -> (EeRegion, bool) {
    let u = x[1] - x[0];
    let v = x[3] - x[2];
    let parallel = nearly_parallel(&u, &v);
    if !parallel {
        let w = x[0] - x[2];
        let (a, b, c, d, e) = (u.dot(&u), u.dot(&v), v.dot(&v), u.dot(&w), v.dot(&w));
        let denom = a * c - b * b;
        let s = (b * e - c * d) / denom;
        let t = (a * e - b * d) / denom;
        if s > 0.0 && s < 1.0 && t > 0.0 && t < 1.0 {
            return (EeRegion::InteriorInterior, false);
        }
    }
    // the minimum lies on the boundary of the parameter square: one of the
    // four endpoint-to-segment distances
    let mut best = (f64::INFINITY, EeRegion::InteriorInterior);
    for i in 0..2u8 {
        let t = point_segment_param(&x[i as usize], &x[2], &x[3]);
        let r = if t <= 0.0 {
            EeRegion::EndpointEndpoint { a: i, b: 0 }
        } else if t >= 1.0 {
            EeRegion::EndpointEndpoint { a: i, b: 1 }
        } else {
            EeRegion::EndpointInterior { a: i }
        };
        let d2 = r.kernel().value(x);
        if d2 < best.0 {
            best = (d2, r);
        }
    }
    for j in 0..2u8 {
        let s = point_segment_param(&x[2 + j as usize], &x[0], &x[1]);
        let r = if s <= 0.0 {
            EeRegion::EndpointEndpoint { a: 0, b: j }
        } else if s >= 1.0 {
            EeRegion::EndpointEndpoint { a: 1, b: j }
        } else {
            EeRegion::InteriorEndpoint { b: j }
        };
        let d2 = r.kernel().value(x);
        if d2 < best.0 {
            best = (d2, r);
        }
    }
    (best.1, parallel)
}

fn check_edges(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3) -> Result<(), DistanceError> {
    if (a1 - a0).norm_squared() == 0.0 || (b1 - b0).norm_squared() == 0.0 {
        return Err(DistanceError::ZeroLengthEdge);
    }
    Ok(())
}

/// Squared segment-segment distance, region and parallel flag without
/// derivatives.
pub fn edge_edge_distance(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3) -> Result<(f64, EeRegion, bool), DistanceError> {
    check_edges(a0, a1, b0, b1)?;
    let swap = lex_greater([a0, a1], [b0, b1]);
    let x = if swap { [*b0, *b1, *a0, *a1] } else { [*a0, *a1, *b0, *b1] };
    let (r, parallel) = classify_edge_edge_ordered(&x);
    let d2 = r.kernel().value(&x).max(0.0);
    Ok((d2, if swap { r.swapped() } else { r }, parallel))
}

/// Edge-edge distance with derivatives; the last value is the parallel flag.
pub fn edge_edge_d2(
    a0: &Vec3,
    a1: &Vec3,
    b0: &Vec3,
    b1: &Vec3,
) -> Result<(DistanceDerivatives<EeRegion>, bool), DistanceError> {
    check_edges(a0, a1, b0, b1)?;
    let swap = lex_greater([a0, a1], [b0, b1]);
    let x = if swap { [*b0, *b1, *a0, *a1] } else { [*a0, *a1, *b0, *b1] };
    let (r, parallel) = classify_edge_edge_ordered(&x);
    let (d2, g, h) = r.kernel().derivatives(&x);
    let d2 = d2.max(0.0);
    if !swap {
        return Ok((DistanceDerivatives { d2, region: r, gradient: g, hessian: h }, parallel));
    }
    let perm = |i: usize| (i + 6) % 12;
    let gradient = Grad12::from_fn(|i, _| g[perm(i)]);
    let hessian = Hess12::from_fn(|i, j| h[(perm(i), perm(j))]);
    Ok((DistanceDerivatives { d2, region: r.swapped(), gradient, hessian }, parallel))
}

/// Value, gradient and Hessian of a pair's squared distance at `x`.
pub fn pair_derivatives(pair: &PairIndex, x: &[Vec3]) -> Result<(PrimitivePair, Grad12, Hess12), DistanceError> {
    let [p0, p1, p2, p3] = pair.points(x);
    match pair.kind {
        PairKind::PointTriangle => {
            let d = point_triangle_d2(&p0, &p1, &p2, &p3)?;
            let pp = PrimitivePair { kind: pair.kind, indices: pair.indices, region: Region::Pt(d.region), d2: d.d2 };
            Ok((pp, d.gradient, d.hessian))
        }
        PairKind::EdgeEdge => {
            let (d, _) = edge_edge_d2(&p0, &p1, &p2, &p3)?;
            let pp = PrimitivePair { kind: pair.kind, indices: pair.indices, region: Region::Ee(d.region), d2: d.d2 };
            Ok((pp, d.gradient, d.hessian))
        }
    }
}
