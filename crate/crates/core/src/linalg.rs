//! Small dense square matrices.
//!
//! Kernels in this crate are `d x d` with `d` rarely above 3, so the
//! operator norm uses closed-form symmetric eigenvalues for `d <= 3` and
//! cyclic Jacobi sweeps otherwise.

use std::f64::consts::PI;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Row-major `n x n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn scalar(v: f64) -> Self {
        Self { n: 1, data: vec![v] }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds from rows; `None` when the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == n * n).then_some(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        mat_vec_into(&self.data, self.n, v, &mut out);
        out
    }

    /// `x . M y`.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        if self.n == 1 {
            return self.data[0].abs();
        }
        let gram = &self.transpose() * self;
        symmetric_eigenvalues(&gram)
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(0.0)
            .sqrt()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.frobenius().max(f64::MIN_POSITIVE);
        (0..self.n).all(|i| {
            (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= rel_tol * scale)
        })
    }

    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Option<Self> {
        let n = self.n;
        let mut l = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Some(l)
    }

    /// Orthonormalizes the columns by modified Gram-Schmidt.
    pub fn orthonormalized_columns(&self) -> Option<Self> {
        let n = self.n;
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|i| self[(i, j)]).collect())
            .collect();
        for j in 0..n {
            for k in 0..j {
                let proj = dot(&cols[k], &cols[j]);
                let (head, tail) = cols.split_at_mut(j);
                for (c, q) in tail[0].iter_mut().zip(&head[k]) {
                    *c -= proj * q;
                }
            }
            let norm = dot(&cols[j], &cols[j]).sqrt();
            if norm < 1e-12 {
                return None;
            }
            cols[j].iter_mut().for_each(|c| *c /= norm);
        }
        let mut q = Self::zeros(n);
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                q[(i, j)] = *v;
            }
        }
        Some(q)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `out = M v` for a row-major `n x n` slice.
#[inline]
pub fn mat_vec_into(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// `out += c * M v` for a row-major `n x n` slice.
#[inline]
pub fn mat_vec_acc(m: &[f64], n: usize, v: &[f64], c: f64, out: &mut [f64]) {
    if n == 1 {
        out[0] += c * m[0] * v[0];
        return;
    }
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        let s: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
        out[i] += c * s;
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let mut ev = match a.n {
        0 => Vec::new(),
        1 => vec![a.data[0]],
        2 => sym2_eigenvalues(a),
        3 => sym3_eigenvalues(a),
        _ => jacobi_eigen(a).0,
    };
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

fn sym2_eigenvalues(a: &Matrix) -> Vec<f64> {
    let (p, q, r) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
    let mean = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    vec![mean - rad, mean + rad]
}

// Trigonometric solution of the characteristic cubic.
fn sym3_eigenvalues(a: &Matrix) -> Vec<f64> {
    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    let diag = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
    if p1 == 0.0 {
        return diag.to_vec();
    }
    let q = diag.iter().sum::<f64>() / 3.0;
    let p2 = diag.iter().map(|d| (d - q).powi(2)).sum::<f64>() + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = |i: usize, j: usize| (a[(i, j)] - if i == j { q } else { 0.0 }) / p;
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
        - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    vec![lo, 3.0 * q - hi - lo, hi]
}

/// Cyclic Jacobi sweeps. Returns eigenvalues (unsorted) and the matrix whose
/// columns are the corresponding eigenvectors.
pub fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.n;
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].powi(2))
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> Matrix {
        let mut s = seed;
        let data = (0..n * n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Matrix::from_row_major(n, data).unwrap()
    }

    #[test]
    fn closed_forms_match_jacobi() {
        for n in 2..=3 {
            for seed in 0..20 {
                let m = sample(n, seed);
                let sym = &m + &m.transpose();
                let mut jac = jacobi_eigen(&sym).0;
                jac.sort_by(|a, b| a.total_cmp(b));
                let closed = symmetric_eigenvalues(&sym);
                for (a, b) in jac.iter().zip(&closed) {
                    assert!((a - b).abs() < 1e-10, "{n} {seed}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn operator_norm_of_diagonal_and_rotation() {
        let d = Matrix::diagonal(&[0.5, -3.0, 2.0]);
        assert!((d.operator_norm() - 3.0).abs() < 1e-14);
        let c = 0.3f64.cos();
        let s = 0.3f64.sin();
        let r = Matrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        assert!((r.operator_norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn operator_norm_bounds_vectors() {
        let m = sample(5, 7);
        let norm = m.operator_norm();
        for seed in 0..50 {
            let v = sample(5, 100 + seed).as_slice()[..5].to_vec();
            let mv = m.mul_vec(&v);
            assert!(norm_sq(&mv).sqrt() <= norm * norm_sq(&v).sqrt() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cholesky_and_gram_schmidt() {
        let m = sample(3, 3);
        let spd = &(&m * &m.transpose()) + &Matrix::identity(3);
        let l = spd.cholesky().unwrap();
        let back = &l * &l.transpose();
        assert!((&back - &spd).frobenius() < 1e-12);
        let q = sample(3, 9).orthonormalized_columns().unwrap();
        let qtq = &q.transpose() * &q;
        assert!((&qtq - &Matrix::identity(3)).frobenius() < 1e-12);
    }
}
