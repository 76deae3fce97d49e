//! Compressed sparse row matrices used for every assembled operator.

use std::ops::{Add, Mul, Neg, Sub};

use faer::Mat;
use num_complex::Complex64;

pub trait Scalar:
    Copy
    + Send
    + Sync
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

pub type RealCsr = CsrMatrix<f64>;
pub type ComplexCsr = CsrMatrix<Complex64>;

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::from_real(1.0); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Assemble from `(row, col, value)` entries. Duplicates are summed in
    /// the order given; entries that sum to exactly zero are kept out.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            // stable sort keeps insertion order among duplicates
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut acc = row[i].1;
                i += 1;
                while i < row.len() && row[i].0 == c {
                    acc = acc + row[i].1;
                    i += 1;
                }
                if acc != T::zero() {
                    indices.push(c);
                    values.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r)
            .find(|&(cc, _)| cc == c)
            .map(|(_, v)| v)
            .unwrap_or_else(T::zero)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in mul_vec");
        (0..self.nrows)
            .map(|r| self.row(r).fold(T::zero(), |acc, (c, v)| acc + v * x[c]))
            .collect()
    }

    /// `y^T A` as a vector of length `ncols`.
    pub fn vec_mul(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.nrows, "dimension mismatch in vec_mul");
        let mut out = vec![T::zero(); self.ncols];
        for (r, &yr) in y.iter().enumerate() {
            for (c, v) in self.row(r) {
                out[c] = out[c] + yr * v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = s * *v);
        out.prune();
        out
    }

    /// Left-multiply by a diagonal matrix.
    pub fn scale_rows(&self, diag: &[T]) -> Self {
        assert_eq!(diag.len(), self.nrows);
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.values[k] = diag[r] * out.values[k];
            }
        }
        out.prune();
        out
    }

    /// Right-multiply by a diagonal matrix.
    pub fn scale_cols(&self, diag: &[T]) -> Self {
        assert_eq!(diag.len(), self.ncols);
        let mut out = self.clone();
        for k in 0..out.values.len() {
            out.values[k] = out.values[k] * diag[out.indices[k]];
        }
        out.prune();
        out
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (r, c, a * v)).collect();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, b * v)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(T::from_real(1.0), other, T::from_real(1.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(T::from_real(1.0), other, T::from_real(-1.0))
    }

    /// Sparse product `self * rhs`; each output entry accumulates its terms
    /// in increasing order of the inner index.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "dimension mismatch in matmul");
        let mut acc = vec![T::zero(); rhs.ncols];
        let mut touched = vec![false; rhs.ncols];
        let mut cols = Vec::new();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        cols.push(c);
                    }
                    acc[c] = acc[c] + a * b;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                if acc[c] != T::zero() {
                    indices.push(c);
                    values.push(acc[c]);
                }
                acc[c] = T::zero();
                touched[c] = false;
            }
            cols.clear();
            indptr.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: rhs.ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.modulus().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    pub fn to_complex(&self) -> ComplexCsr {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v.to_complex()).collect(),
        }
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| *v != T::zero()) {
            return;
        }
        let t: Vec<_> = self.triplets();
        *self = Self::from_triplets(self.nrows, self.ncols, &t);
    }
}

impl RealCsr {
    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let diff = self.sub(&self.transpose());
        diff.max_abs() <= tol * self.max_abs().max(f64::MIN_POSITIVE)
    }
}

impl ComplexCsr {
    pub fn mul_vec_real(&self, x: &[f64]) -> Vec<Complex64> {
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.mul_vec(&xc)
    }
}

/// Relative Frobenius residual `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_residual<T: Scalar>(a: &CsrMatrix<T>, b: &CsrMatrix<T>) -> f64 {
    let scale = a.frobenius().max(b.frobenius());
    if scale == 0.0 {
        return 0.0;
    }
    a.sub(b).frobenius() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &RealCsr) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| m.get(r, c)).collect())
            .collect()
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = RealCsr::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, -1.0), (1, 0, 2.0), (1, 0, 0.5)]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(1, 0), 2.5);
    }

    #[test]
    fn matmul_matches_dense_product() {
        let a = RealCsr::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let b = RealCsr::from_triplets(3, 2, &[(0, 0, 4.0), (1, 1, 5.0), (2, 0, 6.0), (2, 1, 7.0)]);
        let c = dense(&a.matmul(&b));
        assert_eq!(c, vec![vec![16.0, 14.0], vec![0.0, 15.0]]);
        assert_eq!(dense(&a.transpose().transpose()), dense(&a));
    }

    #[test]
    fn vec_mul_is_transpose_product() {
        let a = RealCsr::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let y = [1.0, -1.0];
        assert_eq!(a.vec_mul(&y), a.transpose().mul_vec(&y));
    }
}
