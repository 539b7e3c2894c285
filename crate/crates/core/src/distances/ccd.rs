//! Additive continuous collision detection (conservative advancement).

use rayon::prelude::*;

use super::{edge_edge_distance, point_triangle_distance, DistanceError, PairIndex, PairKind, Vec3};

pub const DEFAULT_CCD_SLACK: f64 = 0.1;

const MAX_ITERATIONS: usize = 1_000_000;

/// Conservative time of impact of one pair moving linearly from `x0` by `dx`
/// over `t ∈ [0, 1]`. Returns `None` when no impact is found before `t = 1`.
pub fn pair_toi(kind: PairKind, x0: &[Vec3; 4], dx: &[Vec3; 4], slack: f64) -> Result<Option<f64>, DistanceError> {
    let dist = |t: f64| -> Result<f64, DistanceError> {
        let p: [Vec3; 4] = std::array::from_fn(|i| x0[i] + t * dx[i]);
        let d2 = match kind {
            PairKind::PointTriangle => point_triangle_distance(&p[0], &p[1], &p[2], &p[3])?.0,
            PairKind::EdgeEdge => edge_edge_distance(&p[0], &p[1], &p[2], &p[3])?.0,
        };
        Ok(d2.sqrt())
    };
    let mean = (dx[0] + dx[1] + dx[2] + dx[3]) / 4.0;
    let m: [f64; 4] = std::array::from_fn(|i| (dx[i] - mean).norm());
    let lp = match kind {
        PairKind::PointTriangle => m[0] + m[1].max(m[2]).max(m[3]),
        PairKind::EdgeEdge => m[0].max(m[1]) + m[2].max(m[3]),
    };
    let d0 = dist(0.0)?;
    if d0 <= 0.0 {
        return Err(DistanceError::StartIntersecting { indices: [0, 1, 2, 3] });
    }
    if lp == 0.0 {
        return Ok(None);
    }
    let gap = slack * d0;
    let mut t = 0.0;
    let mut tl = (1.0 - slack) * d0 / lp;
    for _ in 0..MAX_ITERATIONS {
        let d = dist(t + tl)?;
        if t > 0.0 && d < gap {
            return Ok(Some(t));
        }
        t += tl;
        if t > 1.0 {
            return Ok(None);
        }
        tl = 0.9 * d / lp;
    }
    Ok(Some(t))
}

/// Largest safe fraction of the motion `x_start -> x_end` over all `pairs`.
pub fn ccd_toi(x_start: &[Vec3], x_end: &[Vec3], pairs: &[PairIndex], slack: f64) -> Result<f64, DistanceError> {
    let tois: Result<Vec<f64>, DistanceError> = pairs
        .par_iter()
        .map(|p| {
            let x0 = p.indices.map(|i| x_start[i]);
            let dx = p.indices.map(|i| x_end[i] - x_start[i]);
            match pair_toi(p.kind, &x0, &dx, slack) {
                Ok(t) => Ok(t.unwrap_or(1.0)),
                Err(DistanceError::StartIntersecting { .. }) => {
                    Err(DistanceError::StartIntersecting { indices: p.indices })
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    Ok(tois?.into_iter().fold(1.0, f64::min))
}
