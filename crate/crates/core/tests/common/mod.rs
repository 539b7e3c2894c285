//! Oracles shared by the integration tests. Nothing here calls into the
//! library's distance, energy-derivative or image-metric code.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tacsim::geometry::Vec3;

pub fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn rvec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

// ---------------------------------------------------------------------------
// Closed-form closest points

/// Closest point on triangle `abc` to `p`, by Voronoi region walk.
pub fn closest_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

pub fn pt_distance(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    (p - closest_on_triangle(p, a, b, c)).norm()
}

/// Closest points between segments `p1q1` and `p2q2` as parameters.
pub fn closest_segment_params(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> (f64, f64) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let eps = 1e-300;
    if a <= eps && e <= eps {
        return (0.0, 0.0);
    }
    if a <= eps {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= eps {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

pub fn ee_distance(a0: Vec3, a1: Vec3, b0: Vec3, b1: Vec3) -> f64 {
    let (s, t) = closest_segment_params(a0, a1, b0, b1);
    ((a0 + (a1 - a0) * s) - (b0 + (b1 - b0) * t)).norm()
}

// ---------------------------------------------------------------------------
// Face-enumeration oracles. The squared distance |r0 + u e1 + v e2|^2 is a
// convex quadratic over a polygon in (u, v); its minimum sits at the free
// stationary point or on one of the polygon's edges.

fn enumerate_faces(r0: Vec3, e1: Vec3, e2: Vec3, corners: &[(f64, f64)], inside: impl Fn(f64, f64) -> bool) -> f64 {
    let at = |u: f64, v: f64| r0 + e1 * u + e2 * v;
    let mut best = f64::INFINITY;
    let (a11, a12, a22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
    let det = a11 * a22 - a12 * a12;
    if det > 1e-12 * a11 * a22 {
        let (b1, b2) = (-r0.dot(&e1), -r0.dot(&e2));
        let u = (b1 * a22 - b2 * a12) / det;
        let v = (a11 * b2 - a12 * b1) / det;
        if inside(u, v) {
            best = best.min(at(u, v).norm_squared());
        }
    }
    for k in 0..corners.len() {
        let (pu, pv) = corners[k];
        let (qu, qv) = corners[(k + 1) % corners.len()];
        let start = at(pu, pv);
        let dir = e1 * (qu - pu) + e2 * (qv - pv);
        let len2 = dir.norm_squared();
        let s = if len2 > 0.0 { (-start.dot(&dir) / len2).clamp(0.0, 1.0) } else { 0.0 };
        best = best.min((start + dir * s).norm_squared());
    }
    best.sqrt()
}

pub fn pt_distance_enumerated(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    enumerate_faces(a - p, b - a, c - a, &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], |u, v| {
        u >= 0.0 && v >= 0.0 && u + v <= 1.0
    })
}

pub fn ee_distance_enumerated(a0: Vec3, a1: Vec3, b0: Vec3, b1: Vec3) -> f64 {
    let unit = |w: f64| (0.0..=1.0).contains(&w);
    enumerate_faces(a0 - b0, a1 - a0, b0 - b1, &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], |u, v| {
        unit(u) && unit(v)
    })
}

// ---------------------------------------------------------------------------
// Finite differences

pub fn norm(v: &[Vec3]) -> f64 {
    v.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt()
}

pub fn rel_err(approx: &[Vec3], exact: &[Vec3]) -> f64 {
    let d: Vec<Vec3> = approx.iter().zip(exact).map(|(a, b)| a - b).collect();
    let s = norm(exact);
    if s == 0.0 {
        if norm(&d) == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        norm(&d) / s
    }
}

/// Central-difference gradient, one coordinate at a time.
pub fn central_gradient(f: impl Fn(&[Vec3]) -> f64, x: &[Vec3], h: f64) -> Vec<Vec3> {
    let mut y = x.to_vec();
    let mut g = vec![Vec3::zeros(); x.len()];
    for i in 0..x.len() {
        for c in 0..3 {
            let x0 = y[i][c];
            y[i][c] = x0 + h;
            let up = f(&y);
            y[i][c] = x0 - h;
            let down = f(&y);
            y[i][c] = x0;
            g[i][c] = (up - down) / (2.0 * h);
        }
    }
    g
}

/// Central difference of a gradient field along `u`.
pub fn central_directional(grad: impl Fn(&[Vec3]) -> Vec<Vec3>, x: &[Vec3], u: &[Vec3], h: f64) -> Vec<Vec3> {
    let at = |s: f64| -> Vec<Vec3> { x.iter().zip(u).map(|(p, d)| p + d * s).collect() };
    let (gp, gm) = (grad(&at(h)), grad(&at(-h)));
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

pub fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    let u: Vec<Vec3> = (0..n).map(|_| rvec(rng, 1.0)).collect();
    let s = norm(&u);
    u.into_iter().map(|p| p / s).collect()
}

// ---------------------------------------------------------------------------
// Intersection and inversion audit

fn orient(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a))
}

/// Closed segment against closed triangle.
pub fn segment_hits_triangle(p: Vec3, q: Vec3, a: Vec3, b: Vec3, c: Vec3) -> bool {
    // Orientation values below this are treated as coplanar roundoff.
    let scale = [(q - p).norm(), (b - a).norm(), (c - b).norm(), (a - c).norm()].into_iter().fold(0.0, f64::max);
    let eps = 1e-12 * scale.powi(3);
    let sp = orient(a, b, c, p);
    let sq = orient(a, b, c, q);
    if !((sp > eps && sq < -eps) || (sp < -eps && sq > eps)) {
        return false;
    }
    let s1 = orient(p, q, a, b);
    let s2 = orient(p, q, b, c);
    let s3 = orient(p, q, c, a);
    (s1 > eps && s2 > eps && s3 > eps) || (s1 < -eps && s2 < -eps && s3 < -eps)
}

pub struct Surface {
    pub tris: Vec<[usize; 3]>,
    pub rigid: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Audit {
    /// Smallest distance among non-adjacent primitives within the search radius.
    pub min_distance: f64,
    /// Edge/triangle crossings among non-adjacent primitives.
    pub crossings: usize,
    pub min_volume: f64,
}

type Cell = (i64, i64, i64);

fn cells(lo: Vec3, hi: Vec3, size: f64) -> impl Iterator<Item = Cell> {
    let c = |v: f64| (v / size).floor() as i64;
    let (x0, y0, z0, x1, y1, z1) = (c(lo.x), c(lo.y), c(lo.z), c(hi.x), c(hi.y), c(hi.z));
    (x0..=x1).flat_map(move |i| (y0..=y1).flat_map(move |j| (z0..=z1).map(move |k| (i, j, k))))
}

fn bbox(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in &points[1..] {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Brute-force-by-hashing audit of a state. Pairs within one rigid body are
/// skipped; everything else that shares no vertex is checked.
pub fn audit(x: &[Vec3], tets: &[[usize; 4]], surfaces: &[Surface], search: f64) -> Audit {
    let min_volume =
        tets.iter().map(|t| orient(x[t[0]], x[t[1]], x[t[2]], x[t[3]]) / 6.0).fold(f64::INFINITY, f64::min);

    let mut tris: Vec<([usize; 3], usize)> = Vec::new();
    let mut edges: Vec<([usize; 2], usize)> = Vec::new();
    let mut verts: Vec<(usize, usize)> = Vec::new();
    for (body, s) in surfaces.iter().enumerate() {
        let mut es = HashSet::new();
        let mut vs = HashSet::new();
        for t in &s.tris {
            tris.push((*t, body));
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                es.insert([a.min(b), a.max(b)]);
                vs.insert(t[k]);
            }
        }
        let mut es: Vec<_> = es.into_iter().collect();
        es.sort();
        edges.extend(es.into_iter().map(|e| (e, body)));
        let mut vs: Vec<_> = vs.into_iter().collect();
        vs.sort();
        verts.extend(vs.into_iter().map(|v| (v, body)));
    }
    let size = edges.iter().map(|(e, _)| (x[e[0]] - x[e[1]]).norm()).fold(search, f64::max);
    let pad = Vec3::repeat(search);
    let mut tri_grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (k, (t, _)) in tris.iter().enumerate() {
        let (lo, hi) = bbox(&[x[t[0]], x[t[1]], x[t[2]]]);
        for c in cells(lo - pad, hi + pad, size) {
            tri_grid.entry(c).or_default().push(k);
        }
    }
    let mut edge_grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (k, (e, _)) in edges.iter().enumerate() {
        let (lo, hi) = bbox(&[x[e[0]], x[e[1]]]);
        for c in cells(lo - pad, hi + pad, size) {
            edge_grid.entry(c).or_default().push(k);
        }
    }
    let allowed = |ba: usize, bb: usize| ba != bb || !surfaces[ba].rigid;

    let mut min_distance = f64::INFINITY;
    for &(v, bv) in &verts {
        let p = x[v];
        let mut seen = HashSet::new();
        for c in cells(p, p, size) {
            for &k in tri_grid.get(&c).into_iter().flatten() {
                let (t, bt) = tris[k];
                if !seen.insert(k) || t.contains(&v) || !allowed(bv, bt) {
                    continue;
                }
                min_distance = min_distance.min(pt_distance(p, x[t[0]], x[t[1]], x[t[2]]));
            }
        }
    }
    let mut crossings = 0;
    for (ka, &(e, be)) in edges.iter().enumerate() {
        let (lo, hi) = bbox(&[x[e[0]], x[e[1]]]);
        let mut seen_e = HashSet::new();
        let mut seen_t = HashSet::new();
        for c in cells(lo, hi, size) {
            for &kb in edge_grid.get(&c).into_iter().flatten() {
                let (f, bf) = edges[kb];
                if kb <= ka || !seen_e.insert(kb) || f.contains(&e[0]) || f.contains(&e[1]) || !allowed(be, bf) {
                    continue;
                }
                min_distance = min_distance.min(ee_distance(x[e[0]], x[e[1]], x[f[0]], x[f[1]]));
            }
            for &kt in tri_grid.get(&c).into_iter().flatten() {
                let (t, bt) = tris[kt];
                if !seen_t.insert(kt) || t.contains(&e[0]) || t.contains(&e[1]) || !allowed(be, bt) {
                    continue;
                }
                if segment_hits_triangle(x[e[0]], x[e[1]], x[t[0]], x[t[1]], x[t[2]]) {
                    crossings += 1;
                }
            }
        }
    }
    Audit { min_distance, crossings, min_volume }
}

// ---------------------------------------------------------------------------
// Statistics

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
