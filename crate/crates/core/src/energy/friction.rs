//! Smoothed Coulomb friction with lagged normal forces and sliding bases.

use nalgebra::{Matrix2, Matrix3x2, Vector2};
use rayon::prelude::*;

use super::{barrier_value, ContactParams, EnergyError, LocalHessian, Vec3};
use crate::distances::{EeRegion, Hess12, PairIndex, PtRegion, Region};

/// Smooth transition `f1(y)`; `y` is a tangential displacement over one step.
pub fn friction_f1(y: f64, h: f64, epsv: f64) -> f64 {
    let e = epsv * h;
    if y < e {
        -y * y / (e * e) + 2.0 * y / e
    } else {
        1.0
    }
}

/// Antiderivative of [`friction_f1`] with `f0(h ε_v) = h ε_v`.
pub fn friction_f0(y: f64, h: f64, epsv: f64) -> f64 {
    let e = epsv * h;
    if y < e {
        -y * y * y / (3.0 * e * e) + y * y / e + e / 3.0
    } else {
        y
    }
}

/// `f1(y) / y`, finite at `y = 0`.
fn f1_over_y(y: f64, e: f64) -> f64 {
    if y < e {
        -y / (e * e) + 2.0 / e
    } else {
        1.0 / y
    }
}

/// `(f1'(y) − f1(y)/y) / y²`, the coefficient of `u uᵀ`; zero at `y = 0`.
fn f1_curvature(y: f64, e: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else if y < e {
        -1.0 / (y * e * e)
    } else {
        -1.0 / (y * y * y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaggedPair {
    pub indices: [usize; 4],
    /// Relative displacement of the closest points is `Σ wᵢ Δxᵢ`.
    pub weights: [f64; 4],
    /// Orthonormal tangent basis of the contact plane.
    pub basis: Matrix3x2<f64>,
    /// Contact force magnitude (N).
    pub normal_force: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrictionLag {
    /// Positions at the start of the step; sliding is measured from here.
    pub anchor: Vec<Vec3>,
    pub pairs: Vec<LaggedPair>,
}

fn tangent_basis(n: &Vec3) -> Matrix3x2<f64> {
    let n = n.normalize();
    let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    Matrix3x2::from_columns(&[t1, t2])
}

fn clamp01(t: f64) -> f64 {
    t.clamp(0.0, 1.0)
}

fn segment_param(p: &Vec3, e0: &Vec3, e1: &Vec3) -> f64 {
    let e = e1 - e0;
    clamp01((p - e0).dot(&e) / e.norm_squared())
}

/// Closest-point combination weights for a classified pair.
pub(crate) fn closest_point_weights(region: Region, p: &[Vec3; 4]) -> [f64; 4] {
    match region {
        Region::Pt(r) => {
            let beta = match r {
                PtRegion::Vertex(i) => {
                    let mut b = [0.0; 3];
                    b[i as usize] = 1.0;
                    b
                }
                PtRegion::Edge(k) => {
                    let (i, j) = (k as usize, (k as usize + 1) % 3);
                    let t = segment_param(&p[0], &p[1 + i], &p[1 + j]);
                    let mut b = [0.0; 3];
                    b[i] = 1.0 - t;
                    b[j] = t;
                    b
                }
                PtRegion::Interior => {
                    let (e1, e2, q) = (p[2] - p[1], p[3] - p[1], p[0] - p[1]);
                    let (a, b, c) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
                    let (d, e) = (e1.dot(&q), e2.dot(&q));
                    let det = a * c - b * b;
                    let u = (c * d - b * e) / det;
                    let v = (a * e - b * d) / det;
                    [1.0 - u - v, u, v]
                }
            };
            [1.0, -beta[0], -beta[1], -beta[2]]
        }
        Region::Ee(r) => {
            let (s, t) = match r {
                EeRegion::EndpointEndpoint { a, b } => (a as f64, b as f64),
                EeRegion::EndpointInterior { a } => (a as f64, segment_param(&p[a as usize], &p[2], &p[3])),
                EeRegion::InteriorEndpoint { b } => (segment_param(&p[2 + b as usize], &p[0], &p[1]), b as f64),
                EeRegion::InteriorInterior => {
                    let (u, v, w) = (p[1] - p[0], p[3] - p[2], p[0] - p[2]);
                    let (a, b, c, d, e) = (u.dot(&u), u.dot(&v), v.dot(&v), u.dot(&w), v.dot(&w));
                    let den = a * c - b * b;
                    (clamp01((b * e - c * d) / den), clamp01((a * e - b * d) / den))
                }
            };
            [1.0 - s, s, -(1.0 - t), -t]
        }
    }
}

/// Direction between the closest points; face and edge-cross normals are
/// used directly where the region makes them exact.
fn contact_normal(region: Region, p: &[Vec3; 4], weights: &[f64; 4]) -> Vec3 {
    let diff: Vec3 = (0..4).map(|i| p[i] * weights[i]).sum();
    let exact = match region {
        Region::Pt(PtRegion::Interior) => (p[2] - p[1]).cross(&(p[3] - p[1])),
        Region::Ee(EeRegion::InteriorInterior) => (p[1] - p[0]).cross(&(p[3] - p[2])),
        _ => diff,
    };
    let n = if exact.dot(&diff) < 0.0 { -exact } else { exact };
    if n.norm_squared() > 0.0 {
        n
    } else {
        Vec3::z()
    }
}

/// Freeze normal forces and tangent bases at `x` for pairs closer than d̂.
/// The contact force magnitude is `κ |b'(d²)| · 2d`.
pub fn update_friction_lag(
    x: &[Vec3],
    anchor: &[Vec3],
    pairs: &[PairIndex],
    params: &ContactParams,
) -> Result<FrictionLag, EnergyError> {
    let s_hat = params.dhat * params.dhat;
    let lagged: Result<Vec<Option<LaggedPair>>, EnergyError> = pairs
        .par_iter()
        .map(|pair| {
            let pp = pair.evaluate(x)?;
            if !(pp.d2 > 0.0) {
                return Err(EnergyError::Intersecting { indices: pp.indices, d2: pp.d2 });
            }
            if pp.d2 >= s_hat {
                return Ok(None);
            }
            let p = pair.points(x);
            let weights = closest_point_weights(pp.region, &p);
            let n = contact_normal(pp.region, &p, &weights);
            let (_, db, _) = barrier_value(pp.d2, params.dhat)?;
            Ok(Some(LaggedPair {
                indices: pp.indices,
                weights,
                basis: tangent_basis(&n),
                normal_force: params.kappa * db.abs() * 2.0 * pp.d2.sqrt(),
            }))
        })
        .collect();
    Ok(FrictionLag { anchor: anchor.to_vec(), pairs: lagged?.into_iter().flatten().collect() })
}

fn tangential(lp: &LaggedPair, x: &[Vec3], anchor: &[Vec3]) -> Vector2<f64> {
    let rel: Vec3 = (0..4).map(|k| (x[lp.indices[k]] - anchor[lp.indices[k]]) * lp.weights[k]).sum();
    lp.basis.transpose() * rel
}

pub fn friction_value(x: &[Vec3], lag: &FrictionLag, params: &ContactParams, h: f64) -> f64 {
    if params.mu == 0.0 {
        return 0.0;
    }
    lag.pairs
        .iter()
        .map(|lp| params.mu * lp.normal_force * friction_f0(tangential(lp, x, &lag.anchor).norm(), h, params.epsv))
        .sum()
}

/// `Σ μ λ f0(‖u‖)` with gradient and per-pair PSD Hessians.
pub fn friction_energy(
    x: &[Vec3],
    lag: &FrictionLag,
    params: &ContactParams,
    h: f64,
) -> (f64, Vec<Vec3>, Vec<LocalHessian>) {
    let mut grad = vec![Vec3::zeros(); x.len()];
    if params.mu == 0.0 {
        return (0.0, grad, Vec::new());
    }
    let e = params.epsv * h;
    let mut value = 0.0;
    let mut hess = Vec::with_capacity(lag.pairs.len());
    for lp in &lag.pairs {
        let u = tangential(lp, x, &lag.anchor);
        let y = u.norm();
        let scale = params.mu * lp.normal_force;
        value += scale * friction_f0(y, h, params.epsv);
        let gu = lp.basis * (u * (scale * f1_over_y(y, e)));
        for k in 0..4 {
            grad[lp.indices[k]] += gu * lp.weights[k];
        }
        let h2 = (Matrix2::identity() * f1_over_y(y, e) + u * u.transpose() * f1_curvature(y, e)) * scale;
        let h3 = lp.basis * h2 * lp.basis.transpose();
        let mut m = Hess12::zeros();
        for a in 0..4 {
            for b in 0..4 {
                m.fixed_view_mut::<3, 3>(3 * a, 3 * b).copy_from(&(h3 * (lp.weights[a] * lp.weights[b])));
            }
        }
        hess.push(LocalHessian { indices: lp.indices, matrix: m });
    }
    (value, grad, hess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::PairKind;

    const H: f64 = 0.01;
    const EPSV: f64 = 1e-3;

    #[test]
    fn transition_values() {
        let e = H * EPSV;
        assert_eq!(friction_f1(e, H, EPSV), 1.0);
        assert!((friction_f1(e / 2.0, H, EPSV) - 0.75).abs() < 1e-15);
        assert_eq!(friction_f1(2.0 * e, H, EPSV), 1.0);
        assert!((friction_f0(e, H, EPSV) - e).abs() < 1e-18);
    }

    #[test]
    fn f0_derivative_is_f1() {
        let e = H * EPSV;
        let d = 1e-4 * e;
        for i in 1..300 {
            let y = 3.0 * e * i as f64 / 300.0;
            let fd = (friction_f0(y + d, H, EPSV) - friction_f0(y - d, H, EPSV)) / (2.0 * d);
            assert!((fd - friction_f1(y, H, EPSV)).abs() < 1e-6, "y={y}");
        }
    }

    fn contact_scene() -> (Vec<Vec3>, [PairIndex; 1], ContactParams) {
        let x = vec![
            Vec3::new(0.1, 0.2, 5e-4),
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(2.0, -1.0, 0.0),
            Vec3::new(-1.0, 2.0, 0.0),
        ];
        let pairs = [PairIndex { kind: PairKind::PointTriangle, indices: [0, 1, 2, 3] }];
        (x, pairs, ContactParams { dhat: 1e-3, kappa: 1e6, mu: 0.7, epsv: EPSV })
    }

    #[test]
    fn lag_basis_and_force() {
        let (x, pairs, params) = contact_scene();
        let lag = update_friction_lag(&x, &x, &pairs, &params).unwrap();
        assert_eq!(lag.pairs.len(), 1);
        let t = lag.pairs[0].basis;
        assert!(t.column(0).z.abs() < 1e-15 && t.column(1).z.abs() < 1e-15);
        assert!((t.transpose() * t - Matrix2::identity()).norm() < 1e-15);
        assert!(lag.pairs[0].normal_force > 0.0);
        let far: Vec<Vec3> =
            x.iter().enumerate().map(|(i, p)| if i == 0 { p + Vec3::new(0.0, 0.0, 1e-3) } else { *p }).collect();
        assert!(update_friction_lag(&far, &far, &pairs, &params).unwrap().pairs.is_empty());
    }

    #[test]
    fn static_and_dynamic_limits() {
        let (x, pairs, params) = contact_scene();
        let lag = update_friction_lag(&x, &x, &pairs, &params).unwrap();
        let (_, g, _) = friction_energy(&x, &lag, &params, H);
        assert!(g.iter().all(|v| *v == Vec3::zeros()));
        let mut xs = x.clone();
        xs[0].x += 0.01;
        let (_, g, _) = friction_energy(&xs, &lag, &params, H);
        let lam = lag.pairs[0].normal_force;
        assert!((g[0].norm() - params.mu * lam).abs() < 1e-12 * params.mu * lam);
        let zero = ContactParams { mu: 0.0, ..params };
        let (e, g, _) = friction_energy(&xs, &lag, &zero, H);
        assert_eq!(e, 0.0);
        assert!(g.iter().all(|v| *v == Vec3::zeros()));
    }
}
