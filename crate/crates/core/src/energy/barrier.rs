//! Log barrier on squared primitive distances.

use rayon::prelude::*;

use super::{ContactParams, EnergyError, LocalHessian, Vec3};
use crate::distances::{pair_derivatives, PairIndex, PrimitivePair};

/// `b(s) = −(s − ŝ)² ln(s/ŝ)` for `s < ŝ = d̂²`, else 0, with its first and
/// second derivatives in `s = d²`.
pub fn barrier_value(d2: f64, dhat: f64) -> Result<(f64, f64, f64), EnergyError> {
    if !(d2 > 0.0) {
        return Err(EnergyError::NonPositiveDistance(d2));
    }
    let s_hat = dhat * dhat;
    if d2 >= s_hat {
        return Ok((0.0, 0.0, 0.0));
    }
    let r = d2 - s_hat;
    let l = (d2 / s_hat).ln();
    let b = -r * r * l;
    let db = -2.0 * r * l - r * r / d2;
    let ddb = -2.0 * l - 4.0 * r / d2 + r * r / (d2 * d2);
    Ok((b, db, ddb))
}

#[derive(Debug, Clone, Default)]
pub struct BarrierEval {
    pub value: f64,
    pub grad: Vec<Vec3>,
    /// Raw (possibly indefinite) per-pair Hessians of the active pairs.
    pub hessians: Vec<LocalHessian>,
    /// Pairs with `d < d̂`.
    pub active: Vec<PrimitivePair>,
    /// Smallest squared distance over all evaluated pairs.
    pub min_d2: f64,
}

fn intersecting(p: &PrimitivePair) -> EnergyError {
    EnergyError::Intersecting { indices: p.indices, d2: p.d2 }
}

/// `κ Σ_k b(d_k²)` over candidate pairs, with gradient and Hessians.
pub fn barrier_energy(x: &[Vec3], pairs: &[PairIndex], params: &ContactParams) -> Result<BarrierEval, EnergyError> {
    let s_hat = params.dhat * params.dhat;
    let per_pair: Result<Vec<_>, EnergyError> = pairs
        .par_iter()
        .map(|pair| {
            let pp = pair.evaluate(x)?;
            if !(pp.d2 > 0.0) {
                return Err(intersecting(&pp));
            }
            if pp.d2 >= s_hat {
                return Ok((pp, None));
            }
            let (pp, g, h) = pair_derivatives(pair, x)?;
            if !(pp.d2 > 0.0) {
                return Err(intersecting(&pp));
            }
            let (b, db, ddb) = barrier_value(pp.d2, params.dhat)?;
            let k = params.kappa;
            let hess = (g * g.transpose()) * (k * ddb) + h * (k * db);
            Ok((pp, Some((k * b, g * (k * db), hess))))
        })
        .collect();
    let mut out = BarrierEval { grad: vec![Vec3::zeros(); x.len()], min_d2: f64::INFINITY, ..Default::default() };
    for (pp, local) in per_pair? {
        out.min_d2 = out.min_d2.min(pp.d2);
        let Some((e, g, h)) = local else { continue };
        out.value += e;
        for (k, &vi) in pp.indices.iter().enumerate() {
            out.grad[vi] += g.fixed_rows::<3>(3 * k);
        }
        out.hessians.push(LocalHessian { indices: pp.indices, matrix: h });
        out.active.push(pp);
    }
    Ok(out)
}

/// Barrier energy value and minimum squared distance, without derivatives.
pub fn barrier_value_only(x: &[Vec3], pairs: &[PairIndex], params: &ContactParams) -> Result<(f64, f64), EnergyError> {
    let vals: Result<Vec<(f64, f64)>, EnergyError> = pairs
        .par_iter()
        .map(|pair| {
            let pp = pair.evaluate(x)?;
            if !(pp.d2 > 0.0) {
                return Err(intersecting(&pp));
            }
            Ok((params.kappa * barrier_value(pp.d2, params.dhat)?.0, pp.d2))
        })
        .collect();
    let mut value = 0.0;
    let mut min_d2 = f64::INFINITY;
    for (e, d2) in vals? {
        value += e;
        min_d2 = min_d2.min(d2);
    }
    Ok((value, min_d2))
}
