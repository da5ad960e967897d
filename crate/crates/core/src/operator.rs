//! Matrix-free access to symmetric positive semi-definite matrices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rows below this count are multiplied sequentially.
const PAR_ROWS: usize = 256;

/// A symmetric matrix that can be queried entry-wise, row-wise and through
/// matrix-vector products without being materialized.
pub trait SymmetricOperator<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Entry `(i, j)`. Callers guarantee both indices are in range.
    fn entry(&self, i: usize, j: usize) -> T;

    /// Magnitude of the diagonal used to make tolerances relative.
    fn diag_scale(&self) -> T;

    fn row_into(&self, i: usize, out: &mut [T]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.entry(i, j);
        }
    }

    fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.entry(i, i)).collect()
    }

    /// `out = A v`. Each output entry is reduced left to right, so the result
    /// does not depend on how rows are split across threads.
    fn apply_into(&self, v: &[T], out: &mut [T]) {
        let n = self.dim();
        assert_eq!(v.len(), n);
        assert_eq!(out.len(), n);
        let row_dot = |i: usize, buf: &mut Vec<T>| {
            self.row_into(i, buf);
            crate::scalar::dot(buf, v)
        };
        if n < PAR_ROWS {
            let mut buf = vec![T::zero(); n];
            for (i, o) in out.iter_mut().enumerate() {
                *o = row_dot(i, &mut buf);
            }
        } else {
            out.par_iter_mut().enumerate().for_each_init(
                || vec![T::zero(); n],
                |buf, (i, o)| *o = row_dot(i, buf),
            );
        }
    }

    fn apply(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.apply_into(v, &mut out);
        out
    }
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseSymmetric<T> {
    /// Builds from row-major data, rejecting non-square or asymmetric input.
    pub fn from_row_major(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::AssumptionViolated { i, j });
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { T::zero() })
    }

    /// Materializes any operator.
    pub fn from_operator<O: SymmetricOperator<T> + ?Sized>(op: &O) -> Self {
        let n = op.dim();
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            op.row_into(i, &mut data[i * n..(i + 1) * n]);
        }
        Self { n, data }
    }

    /// Principal submatrix on `idx`, in the given order.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let m = idx.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in idx {
            for &j in idx {
                data.push(self.data[i * self.n + j]);
            }
        }
        Self { n: m, data }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Swaps rows and columns `a` and `b`.
    pub fn swap_symmetric(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let n = self.n;
        for k in 0..n {
            self.data.swap(a * n + k, b * n + k);
        }
        for k in 0..n {
            self.data.swap(k * n + a, k * n + b);
        }
    }
}

impl<T: Real> SymmetricOperator<T> for DenseSymmetric<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn entry(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    fn diag_scale(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).fold(T::zero(), T::max)
    }

    fn row_into(&self, i: usize, out: &mut [T]) {
        out.copy_from_slice(self.row(i));
    }
}

/// In-place lower Cholesky of a row-major `n x n` matrix. Only the lower
/// triangle is read; the upper triangle is zeroed. Returns the failing column
/// when a pivot is not strictly positive.
pub(crate) fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> std::result::Result<(), usize> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = T::zero();
        }
    }
    Ok(())
}

/// Solves `L x = b` in place for a row-major lower factor.
pub(crate) fn forward_subst<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place for a row-major lower factor.
pub(crate) fn backward_subst<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Cholesky factorization with a single diagonal-shift retry.
pub(crate) fn cholesky_with_retry<T: Real>(
    a: &[T],
    n: usize,
    shift: T,
) -> std::result::Result<Vec<T>, usize> {
    let mut l = a.to_vec();
    if cholesky_in_place(&mut l, n).is_ok() {
        return Ok(l);
    }
    let mut l = a.to_vec();
    for i in 0..n {
        l[i * n + i] = l[i * n + i] + shift;
    }
    cholesky_in_place(&mut l, n).map(|_| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mvp() {
        let id = DenseSymmetric::<f64>::identity(4);
        let v = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(id.apply(&v), v);
    }

    #[test]
    fn rejects_asymmetric() {
        let r = DenseSymmetric::from_row_major(2, vec![1.0, 0.5, 0.4, 1.0]);
        assert_eq!(r, Err(Error::AssumptionViolated { i: 1, j: 0 }));
    }

    #[test]
    fn cholesky_solves() {
        let a: Vec<f64> = vec![4.0, 2.0, 2.0, 3.0];
        let mut l = a.clone();
        cholesky_in_place(&mut l, 2).unwrap();
        let mut b = vec![2.0, 1.0];
        forward_subst(&l, 2, &mut b);
        backward_subst(&l, 2, &mut b);
        // A x = (2, 1) -> x = (0.5, 0)
        assert!((b[0] - 0.5).abs() < 1e-15 && b[1].abs() < 1e-15);
    }

    #[test]
    fn swap_symmetric_permutes() {
        let mut a = DenseSymmetric::from_fn(3, |i, j| (i * 3 + j + j * 3 + i) as f64);
        let before = a.clone();
        a.swap_symmetric(0, 2);
        assert_eq!(a.get(0, 0), before.get(2, 2));
        assert_eq!(a.get(0, 1), before.get(2, 1));
        assert_eq!(a.get(2, 0), before.get(0, 2));
    }

    #[test]
    fn large_mvp_parallel_matches_sequential() {
        let n = 300;
        let a = DenseSymmetric::from_fn(n, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        let v: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let par = a.apply(&v);
        let seq: Vec<f64> = (0..n).map(|i| crate::scalar::dot(a.row(i), &v)).collect();
        assert_eq!(par, seq);
    }
}
