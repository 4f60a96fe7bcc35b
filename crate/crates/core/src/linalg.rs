//! Small dense symmetric matrices: Cholesky solves and eigenvalues for the
//! `D × D` systems of the pointwise problem.

use crate::error::{Error, Result};

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for k in 0..n {
            m[(k, k)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.concat(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `self += scale · v vᵀ`, adding the same rounded value to `(r, c)`
    /// and `(c, r)`.
    pub fn add_outer(&mut self, v: &[f64], scale: f64) {
        let n = self.n;
        for (r, &vr) in v.iter().enumerate() {
            let s = scale * vr;
            for (c, &vc) in v.iter().enumerate().skip(r) {
                let t = s * vc;
                self.data[r * n + c] += t;
                if c != r {
                    self.data[c * n + r] += t;
                }
            }
        }
    }

    pub fn add_diagonal(&mut self, lambda: f64) {
        for k in 0..self.n {
            self[(k, k)] += lambda;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|k| self[(k, k)]).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|r| (0..r).all(|c| self[(r, c)] == self[(c, r)]))
    }

    /// Lower-triangular `L` with `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.n;
        let scale = (0..n).map(|k| self[(k, k)].abs()).fold(0.0, f64::max);
        let tol = n.max(1) as f64 * f64::EPSILON * scale;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > tol) {
                        return Err(Error::Singular { column: i, pivot: s });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = self.data.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c))).map(|(r, c)| a[r * n + c].powi(2)).sum();
            let diag: f64 = (0..n).map(|k| a[k * n + k].powi(2)).sum();
            if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k * n + p], a[k * n + q]);
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|k| a[k * n + k]).collect();
        eig.sort_by(f64::total_cmp);
        eig
    }

    /// Ratio of largest to smallest eigenvalue; infinite when the smallest is
    /// not positive.
    pub fn condition_number(&self) -> f64 {
        let eig = self.symmetric_eigenvalues();
        match (eig.first(), eig.last()) {
            (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
            _ => f64::INFINITY,
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.n + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.n + c]
    }
}

#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Solves `L Lᵀ x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// Solves the symmetric positive-definite system `a x = rhs`.
pub fn solve_spd(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(a.cholesky()?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn solves_known_system() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let x = solve_spd(&a, &[2.0, 1.0]).unwrap();
        // 4x + 2y = 2, 2x + 3y = 1 -> x = 0.5, y = 0
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(a.cholesky(), Err(Error::Singular { column: 1, .. })));
        let mut r = a.clone();
        r.add_diagonal(1e-3);
        assert!(r.cholesky().is_ok());
    }

    #[test]
    fn eigenvalues_of_diagonal_and_rotated() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = a.symmetric_eigenvalues();
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
        assert!((a.condition_number() - 3.0).abs() < 1e-12);
        let s = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(s.condition_number().is_infinite());
    }

    proptest! {
        #[test]
        fn random_spd_solve_residual(seed_rows in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 8)) {
            let mut a = DenseMatrix::zeros(6);
            for r in &seed_rows {
                a.add_outer(r, 1.0);
            }
            a.add_diagonal(0.1);
            let rhs: Vec<f64> = (0..6).map(|k| k as f64 - 2.5).collect();
            let x = solve_spd(&a, &rhs).unwrap();
            let back = a.mul_vec(&x);
            for (b, r) in back.iter().zip(&rhs) {
                prop_assert!((b - r).abs() < 1e-9);
            }
            let eig = a.symmetric_eigenvalues();
            prop_assert!((eig.iter().sum::<f64>() - a.trace()).abs() < 1e-9);
        }
    }
}
