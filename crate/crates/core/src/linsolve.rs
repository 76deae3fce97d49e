//! Sparse LU factorizations (faer) of shifted operators `a·I + b·M`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::traits::ComplexField;
use faer::Mat;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, Scalar};

pub struct SparseLu<T: ComplexField> {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, T>,
}

impl<T: Scalar + ComplexField> SparseLu<T> {
    /// Factor `a·I + b·m`.
    pub fn shifted(m: &CsrMatrix<T>, a: T, b: T) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(Error::Solve("matrix is not square".into()));
        }
        let mut t: Vec<Triplet<usize, usize, T>> = m
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, b * v))
            .collect();
        t.extend((0..n).map(|i| Triplet::new(i, i, a)));
        let sp = SparseColMat::<usize, T>::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::Solve(format!("{e:?}")))?;
        let lu = sp.sp_lu().map_err(|e| Error::Solve(format!("{e:?}")))?;
        Ok(Self { n, lu })
    }

    fn run(&self, b: &[T], transpose: bool) -> Result<Vec<T>> {
        assert_eq!(b.len(), self.n);
        let mut rhs = Mat::<T>::from_fn(self.n, 1, |i, _| b[i]);
        if transpose {
            self.lu.solve_transpose_in_place(rhs.as_mut());
        } else {
            self.lu.solve_in_place(rhs.as_mut());
        }
        let out: Vec<T> = (0..self.n).map(|i| rhs[(i, 0)]).collect();
        if out.iter().any(|v| !v.to_complex().is_finite()) {
            return Err(Error::Solve("singular system".into()));
        }
        Ok(out)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        self.run(b, false)
    }

    /// Solve with the transposed (not conjugated) matrix.
    pub fn solve_transpose(&self, b: &[T]) -> Result<Vec<T>> {
        self.run(b, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::RealCsr;

    #[test]
    fn shifted_solve_and_transpose() {
        let m = RealCsr::from_triplets(3, 3, &[(0, 1, 2.0), (1, 2, -1.0), (2, 0, 0.5), (1, 1, 3.0)]);
        let lu = SparseLu::shifted(&m, 1.0, 0.5).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]).unwrap();
        let a = RealCsr::identity(3).combine(1.0, &m, 0.5);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
        let y = lu.solve_transpose(&[1.0, 0.0, -1.0]).unwrap();
        let r = a.vec_mul(&y);
        for (ri, bi) in r.iter().zip([1.0, 0.0, -1.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
    }
}
