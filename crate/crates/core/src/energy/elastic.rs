//! Stable Neo-Hookean hyperelasticity on linear tetrahedra.

use nalgebra::{Matrix3, SMatrix, SVector};
use rayon::prelude::*;

use super::{LocalHessian, MaterialParams, Vec3};
use crate::distances::{Grad12, Hess12};
use crate::geometry::TetMesh;

type Mat9 = SMatrix<f64, 9, 9>;
type Vec9 = SVector<f64, 9>;

/// Parameters of the stable form: shear modulus, shifted bulk parameter and
/// the rest offset that makes `F = I` stress free.
#[derive(Debug, Clone, Copy)]
struct Snh {
    mu: f64,
    lambda: f64,
    alpha: f64,
}

impl Snh {
    fn new(m: &MaterialParams) -> Self {
        let mu = m.lame_mu();
        let lambda = m.lame_lambda() + mu;
        Snh { mu, lambda, alpha: 1.0 + mu / lambda }
    }
}

fn cofactor(f: &Matrix3<f64>) -> Matrix3<f64> {
    let (c0, c1, c2) = (f.column(0), f.column(1), f.column(2));
    Matrix3::from_columns(&[c1.cross(&c2), c2.cross(&c0), c0.cross(&c1)])
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Strain energy density Ψ(F).
pub fn neo_hookean_density(f: &Matrix3<f64>, m: &MaterialParams) -> f64 {
    let p = Snh::new(m);
    let j = f.determinant();
    0.5 * p.mu * (f.norm_squared() - 3.0) + 0.5 * p.lambda * ((j - p.alpha).powi(2) - (1.0 - p.alpha).powi(2))
}

/// First Piola-Kirchhoff stress ∂Ψ/∂F.
pub fn neo_hookean_stress(f: &Matrix3<f64>, m: &MaterialParams) -> Matrix3<f64> {
    let p = Snh::new(m);
    p.mu * f + p.lambda * (f.determinant() - p.alpha) * cofactor(f)
}

/// ∂²Ψ/∂F² acting on column-major `vec(F)`; indefinite in general.
pub fn neo_hookean_hessian(f: &Matrix3<f64>, m: &MaterialParams) -> Mat9 {
    let p = Snh::new(m);
    let g = Vec9::from_column_slice(cofactor(f).as_slice());
    let mut h = Mat9::identity() * p.mu + p.lambda * g * g.transpose();
    let s = p.lambda * (f.determinant() - p.alpha);
    let cols = [f.column(0).into_owned(), f.column(1).into_owned(), f.column(2).into_owned()];
    for a in 0..3 {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        // ∂(f_a × f_b)/∂f_b = [f_a]ₓ
        let blk = skew(&cols[a]) * s;
        let mut v = h.fixed_view_mut::<3, 3>(3 * c, 3 * b);
        v += blk;
        let mut v = h.fixed_view_mut::<3, 3>(3 * b, 3 * c);
        v += blk.transpose();
    }
    h
}

pub fn tet_deformation_gradient(mesh: &TetMesh, x: &[Vec3], t: usize) -> Matrix3<f64> {
    let [a, b, c, d] = mesh.tets[t];
    let ds = Matrix3::from_columns(&[x[b] - x[a], x[c] - x[a], x[d] - x[a]]);
    ds * mesh.inverse_rest_matrices[t]
}

/// `∂vec(F)/∂x` for one tet (9×12).
fn df_dx(dm_inv: &Matrix3<f64>) -> SMatrix<f64, 9, 12> {
    let mut rows = [[0.0; 3]; 4];
    for a in 1..4 {
        for j in 0..3 {
            rows[a][j] = dm_inv[(a - 1, j)];
            rows[0][j] -= dm_inv[(a - 1, j)];
        }
    }
    let mut d = SMatrix::<f64, 9, 12>::zeros();
    for (a, row) in rows.iter().enumerate() {
        for (j, &bj) in row.iter().enumerate() {
            for i in 0..3 {
                d[(i + 3 * j, 3 * a + i)] = bj;
            }
        }
    }
    d
}

/// Total elastic energy Σ V Ψ(F) only.
pub fn elastic_value(mesh: &TetMesh, x: &[Vec3], m: &MaterialParams) -> f64 {
    let e: Vec<f64> = (0..mesh.tets.len())
        .into_par_iter()
        .map(|t| mesh.rest_volumes[t] * neo_hookean_density(&tet_deformation_gradient(mesh, x, t), m))
        .collect();
    e.iter().sum()
}

/// Elastic energy, gradient over all of `x`, and raw per-tet Hessians.
pub fn elastic_energy(mesh: &TetMesh, x: &[Vec3], m: &MaterialParams) -> (f64, Vec<Vec3>, Vec<LocalHessian>) {
    let per_tet: Vec<(f64, Grad12, Hess12)> = (0..mesh.tets.len())
        .into_par_iter()
        .map(|t| {
            let f = tet_deformation_gradient(mesh, x, t);
            let v = mesh.rest_volumes[t];
            let d = df_dx(&mesh.inverse_rest_matrices[t]);
            let p = Vec9::from_column_slice(neo_hookean_stress(&f, m).as_slice());
            let g: Grad12 = d.transpose() * p * v;
            let h: Hess12 = d.transpose() * neo_hookean_hessian(&f, m) * d * v;
            (v * neo_hookean_density(&f, m), g, h)
        })
        .collect();
    let mut value = 0.0;
    let mut grad = vec![Vec3::zeros(); x.len()];
    let mut hess = Vec::with_capacity(per_tet.len());
    for (t, (e, g, h)) in per_tet.into_iter().enumerate() {
        value += e;
        for (k, &vi) in mesh.tets[t].iter().enumerate() {
            grad[vi] += g.fixed_rows::<3>(3 * k);
        }
        hess.push(LocalHessian { indices: mesh.tets[t], matrix: h });
    }
    (value, grad, hess)
}
