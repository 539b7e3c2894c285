//! PSD projection of local Hessians and the sparse symmetric solve.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use nalgebra::{DMatrix, SymmetricEigen};

use super::SolverError;
use crate::distances::Hess12;

const PROJECTION_REG: f64 = 1e-12;

/// Clamps negative eigenvalues of a symmetric matrix; clamped ones become
/// `1e-12 · max|λ|`. PSD input is returned unchanged.
pub fn spd_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return m.clone();
    }
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let vals = eig.eigenvalues.map(|l| if l < 0.0 { PROJECTION_REG * scale } else { l });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// [`spd_project`] specialised to 12×12 element blocks.
pub fn spd_project12(m: &Hess12) -> Hess12 {
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return *m;
    }
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let vals = eig.eigenvalues.map(|l| if l < 0.0 { PROJECTION_REG * scale } else { l });
    let v = eig.eigenvectors;
    let mut out = v * Hess12::from_diagonal(&vals) * v.transpose();
    out = 0.5 * (out + out.transpose());
    out
}

/// Lower-triangular coordinate entries of a symmetric matrix.
#[derive(Debug, Default, Clone)]
pub struct SymTriplets {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymTriplets {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        if r >= c {
            self.entries.push((r, c, v));
        }
    }

    /// `y = A x` using the symmetric lower storage.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }
}

/// Solves `A x = b` with a sparse Cholesky factorization (fill-reducing
/// ordering) or, above `direct_max`, Jacobi-preconditioned CG.
pub fn solve_spd(a: &SymTriplets, b: &[f64], direct_max: usize) -> Result<Vec<f64>, SolverError> {
    if a.n == 0 {
        return Ok(Vec::new());
    }
    if a.n > direct_max {
        return pcg(a, b);
    }
    let trip: Vec<Triplet<usize, usize, f64>> = a.entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.n, a.n, &trip)
        .map_err(|e| SolverError::LinearSolve(format!("{e:?}")))?;
    let llt = m.sp_cholesky(Side::Lower).map_err(|e| SolverError::LinearSolve(format!("{e:?}")))?;
    let mut rhs = Col::<f64>::from_fn(a.n, |i| b[i]);
    llt.solve_in_place(rhs.as_mat_mut());
    let x: Vec<f64> = (0..a.n).map(|i| rhs[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::LinearSolve("non-finite solution".into()));
    }
    Ok(x)
}

fn pcg(a: &SymTriplets, b: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = a.n;
    let mut diag = vec![0.0; n];
    for &(r, c, v) in &a.entries {
        if r == c {
            diag[r] += v;
        }
    }
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let bnorm = dot(b, b).sqrt();
    for _ in 0..10 * n.max(100) {
        if dot(&r, &r).sqrt() <= 1e-12 * bnorm {
            return Ok(x);
        }
        let ap = a.mul(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolverError::LinearSolve("conjugate gradient did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_eq!(spd_project(&i), i);
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let p = spd_project(&m);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(p[(1, 1)] >= 0.0 && p[(1, 1)] <= 1e-11);
        assert!(p[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn projection_is_psd_and_idempotent_on_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = Hess12::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let s = a + a.transpose();
            let p = spd_project12(&s);
            let min = p.symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-12 * p.norm());
            let psd = a * a.transpose();
            let q = spd_project12(&psd);
            assert!((q - psd).norm() <= 1e-10 * psd.norm());
        }
    }

    #[test]
    fn sparse_solve_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 30;
        let b = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(n, n);
        let mut t = SymTriplets::new(n);
        for r in 0..n {
            for c in 0..n {
                t.push(r, c, a[(r, c)]);
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let x = solve_spd(&t, &rhs, usize::MAX).unwrap();
        let y = pcg(&t, &rhs).unwrap();
        let xv = nalgebra::DVector::from_vec(x);
        let r = &a * &xv - nalgebra::DVector::from_vec(rhs.clone());
        assert!(r.norm() < 1e-9);
        assert!((xv - nalgebra::DVector::from_vec(y)).norm() < 1e-8);
    }
}
