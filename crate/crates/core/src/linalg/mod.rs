//! Small dense linear algebra over a generic [`Scalar`].
//!
//! Everything here targets protocol-sized problems (tens to a few hundred
//! rows), so the implementations are straightforward dense loops: row-major
//! storage, Cholesky for definiteness tests, Gaussian elimination with
//! partial pivoting for the Kronecker-vectorized Lyapunov fallback, and
//! cyclic Jacobi for symmetric spectra.

mod expm;

pub use expm::expm;

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};
use serde::{Deserialize, Serialize};

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, entries: Vec<T>) -> Result<Self> {
        if rows * cols != entries.len() {
            return Err(Error::config(format!(
                "matrix shape {rows}x{cols} does not match {} entries",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("matrix entries must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::config("matrix addition shape mismatch"));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::config("matrix subtraction shape mismatch"));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn scale(&self, s: T) -> Self {
        let entries = self.entries.iter().map(|&a| a * s).collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::config("matrix product shape mismatch"));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if self.cols != x.len() {
            return Err(Error::config("matrix-vector shape mismatch"));
        }
        let mut out = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            let mut acc = T::zero();
            for j in 0..self.cols {
                acc = acc + self[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        let mut best = T::zero();
        for j in 0..self.cols {
            let mut s = T::zero();
            for i in 0..self.rows {
                s = s + self[(i, j)].abs();
            }
            best = best.max(s);
        }
        best
    }

    /// Relative asymmetry max|M - Mᵀ| / max(1, max|M|).
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / T::one().max(self.norm_max())
    }

    pub fn is_lower_triangular(&self) -> bool {
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if self[(i, j)] != T::zero() {
                    return false;
                }
            }
        }
        true
    }

    /// Exact symmetrization (M + Mᵀ)/2.
    pub fn symmetrized(&self) -> Self {
        let half = real::<T>(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)]) * half
        })
    }

    /// Cholesky factorization of a symmetric matrix.
    ///
    /// `Ok(Some(l))` with `M = L·Lᵀ` when the matrix is positive definite,
    /// `Ok(None)` when a pivot is non-positive (not PD), `Err` on shape
    /// problems. The caller is responsible for symmetry.
    pub fn cholesky(&self) -> Result<Option<Matrix<T>>> {
        if !self.is_square() {
            return Err(Error::analysis("cholesky requires a square matrix"));
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = self[(i, j)];
                for k in 0..j {
                    acc = acc - l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if acc <= T::zero() || !acc.is_finite() {
                        return Ok(None);
                    }
                    l[(i, j)] = acc.sqrt();
                } else {
                    l[(i, j)] = acc / l[(j, j)];
                }
            }
        }
        Ok(Some(l))
    }

    /// Solves `self * x = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        if !self.is_square() {
            return Err(Error::analysis("solve requires a square matrix"));
        }
        if rhs.len() != self.rows {
            return Err(Error::config("solve right-hand side length mismatch"));
        }
        let n = self.rows;
        let mut a = self.entries.clone();
        let mut b = rhs.to_vec();
        let scale = self.norm_max().max(T::one());
        let tiny = scale * T::epsilon() * real::<T>(n as f64);
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val <= tiny {
                return Err(Error::analysis(format!(
                    "singular linear system (pivot {pivot_val:e} at column {col})"
                )));
            }
            if pivot_row != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot_row * n + j);
                }
                b.swap(col, pivot_row);
            }
            let p = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / p;
                if f == T::zero() {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] = a[r * n + j] - f * a[col * n + j];
                }
                b[r] = b[r] - f * b[col];
            }
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in (i + 1)..n {
                acc = acc - a[i * n + j] * x[j];
            }
            x[i] = acc / a[i * n + i];
        }
        Ok(x)
    }

    /// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations,
    /// sorted ascending. Absolute accuracy is driven down to a few ulps of
    /// the matrix scale, well below the 1e-9 reporting contract.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<T>> {
        if !self.is_square() {
            return Err(Error::analysis("eigenvalues require a square matrix"));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut a = self.symmetrized();
        let scale = a.norm_max().max(T::epsilon());
        let target = scale * T::epsilon() * real::<T>(n as f64);
        let half = real::<T>(0.5);
        for _sweep in 0..100 {
            let mut off = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(a[(i, j)].abs());
                }
            }
            if off <= target {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= target {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) * half / apq;
                    // stable tan(phi) of the smaller rotation angle
                    let t = {
                        let sign = if theta >= T::zero() {
                            T::one()
                        } else {
                            -T::one()
                        };
                        sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eigs: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
        eigs.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
        Ok(eigs)
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.entries[i * self.cols + j]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.entries[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m64(rows: usize, cols: usize, e: &[f64]) -> Matrix<f64> {
        Matrix::new(rows, cols, e.to_vec()).unwrap()
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Matrix::<f64>::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::<f64>::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn matmul_and_matvec() {
        let a = m64(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = m64(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(a.matmul(&b).unwrap(), m64(2, 2, &[2.0, 1.0, 4.0, 3.0]));
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn cholesky_detects_definiteness() {
        let pd = m64(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let l = pd.cholesky().unwrap().unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.sub(&pd).unwrap().norm_max() < 1e-14);

        let indef = m64(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(indef.cholesky().unwrap().is_none());
        assert!(Matrix::<f64>::zeros(3, 3).cholesky().unwrap().is_none());
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = m64(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let x = vec![1.0, -2.0, 0.5];
        let b = a.matvec(&x).unwrap();
        let got = a.solve(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-12);
        }
        let singular = m64(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(singular.solve(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn jacobi_eigenvalues_match_hand_case() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let a = m64(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = a.symmetric_eigenvalues().unwrap();
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_eigenvalues_f32() {
        let a = Matrix::<f32>::new(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = a.symmetric_eigenvalues().unwrap();
        assert!((e[0] - 1.0).abs() < 1e-5);
        assert!((e[1] - 3.0).abs() < 1e-5);
    }
}
