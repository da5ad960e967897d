//! Low-rank-plus-diagonal triangular preconditioner built from a partial factor.
//!
//! `L~ = D~ + L E^T`, where the first `M` columns are the columns of the
//! partial factor and `D~` carries `sqrt(d_j)` for the remaining positions.
//! Then `L~ L~^T = D~^2 + L L^T`, the FITC reconstruction
//! `diag(A - A_hat) + A_hat`. Only the `M` dense columns and one length-`N`
//! diagonal are stored.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pivot::PartialCholesky;
use crate::scalar::Real;

/// Residual diagonal entries are floored at `DIAG_FLOOR * diag_scale`.
pub const DIAG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LowRankTriangular<T> {
    n: usize,
    m: usize,
    cols: Arc<Vec<T>>,
    resid_diag: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Real> LowRankTriangular<T> {
    /// Shares the factor's columns; allocates only the residual diagonal and pivot copy.
    pub fn build(pc: &PartialCholesky<T>) -> Self {
        let (n, m) = (pc.dim(), pc.rank());
        let floor = T::lit(DIAG_FLOOR) * pc.diag_scale();
        let resid_diag = pc
            .schur_diag()
            .iter()
            .enumerate()
            .map(|(j, &d)| if j < m { T::zero() } else { d.max(floor).sqrt() })
            .collect();
        LowRankTriangular { n, m, cols: pc.shared_columns(), resid_diag, pivots: pc.pivots().to_vec() }
    }

    pub(crate) fn from_parts(pc: &PartialCholesky<T>, resid_diag: Vec<T>) -> Result<Self> {
        if resid_diag.len() != pc.dim() {
            return Err(Error::Format("residual diagonal length mismatch".into()));
        }
        let m = pc.rank();
        if resid_diag[m..].iter().any(|d| !(*d > T::zero())) {
            return Err(Error::Format("residual diagonal must be positive beyond the rank".into()));
        }
        Ok(LowRankTriangular {
            n: pc.dim(),
            m,
            cols: pc.shared_columns(),
            resid_diag,
            pivots: pc.pivots().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.m
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// `D~` in pivoted order (zero for the first `rank` positions).
    pub fn resid_diag(&self) -> &[T] {
        &self.resid_diag
    }

    #[inline]
    fn col(&self, c: usize) -> &[T] {
        &self.cols[c * self.n..(c + 1) * self.n]
    }

    /// Diagonal entry `j` of `L~`.
    pub fn diag_entry(&self, j: usize) -> T {
        if j < self.m {
            self.col(j)[j]
        } else {
            self.resid_diag[j]
        }
    }

    /// Entry `(i, j)` of `L~` (zero above the diagonal).
    pub fn entry(&self, i: usize, j: usize) -> T {
        if j > i {
            T::zero()
        } else if j < self.m {
            self.col(j)[i]
        } else if i == j {
            self.resid_diag[j]
        } else {
            T::zero()
        }
    }

    fn check_len(&self, b: &[T]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: b.len() });
        }
        if let Some(p) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite right-hand side entry {p}")));
        }
        Ok(())
    }

    /// Solves `L~ x = b` (pivoted order) in O(NM).
    pub fn solve_lower(&self, b: &[T]) -> Result<Vec<T>> {
        self.check_len(b)?;
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        Ok(x)
    }

    /// Solves `L~^T x = b` (pivoted order) in O(NM).
    pub fn solve_upper(&self, b: &[T]) -> Result<Vec<T>> {
        self.check_len(b)?;
        let mut x = b.to_vec();
        self.solve_upper_in_place(&mut x);
        Ok(x)
    }

    /// `(L~ L~^T)^{-1} v` in pivoted order.
    pub fn apply_inverse(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v)?;
        let mut x = v.to_vec();
        self.apply_inverse_in_place(&mut x);
        Ok(x)
    }

    pub fn apply_inverse_in_place(&self, x: &mut [T]) {
        self.solve_lower_in_place(x);
        self.solve_upper_in_place(x);
    }

    fn solve_lower_in_place(&self, x: &mut [T]) {
        let (n, m) = (self.n, self.m);
        // Dense M x M triangle, column-oriented: eliminate x_c from every later row.
        for c in 0..m {
            let col = self.col(c);
            let xc = x[c] / col[c];
            x[c] = xc;
            for j in c + 1..n {
                x[j] = x[j] - col[j] * xc;
            }
        }
        for j in m..n {
            x[j] = x[j] / self.resid_diag[j];
        }
    }

    fn solve_upper_in_place(&self, x: &mut [T]) {
        let (n, m) = (self.n, self.m);
        for j in m..n {
            x[j] = x[j] / self.resid_diag[j];
        }
        for c in (0..m).rev() {
            let col = self.col(c);
            let mut s = x[c];
            for j in c + 1..n {
                s = s - col[j] * x[j];
            }
            x[c] = s / col[c];
        }
    }

    /// `L~ v` in pivoted order.
    pub fn mul_lower(&self, v: &[T]) -> Vec<T> {
        let (n, m) = (self.n, self.m);
        let mut out = vec![T::zero(); n];
        for c in 0..m {
            let col = self.col(c);
            for j in c..n {
                out[j] = out[j] + col[j] * v[c];
            }
        }
        for j in m..n {
            out[j] = out[j] + self.resid_diag[j] * v[j];
        }
        out
    }

    /// `L~ L~^T v` in pivoted order.
    pub fn mul_reconstructed(&self, v: &[T]) -> Vec<T> {
        let (n, m) = (self.n, self.m);
        // L~^T v
        let mut t = vec![T::zero(); n];
        for c in 0..m {
            let col = self.col(c);
            t[c] = (c..n).fold(T::zero(), |acc, j| acc + col[j] * v[j]);
        }
        for j in m..n {
            t[j] = self.resid_diag[j] * v[j];
        }
        self.mul_lower(&t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DenseSymmetric;
    use crate::pivot::{decompose, Strategy, Target};

    fn toeplitz(n: usize) -> DenseSymmetric<f64> {
        DenseSymmetric::from_fn(n, |i, j| {
            let r = (i as f64 - j as f64) / 2.5;
            (-0.5 * r * r).exp() + if i == j { 0.05 } else { 0.0 }
        })
    }

    #[test]
    fn rank_zero_is_jacobi() {
        let a = DenseSymmetric::from_diagonal(&[4.0, 9.0, 16.0]);
        let pc = decompose(&a, &[0.0; 3], Strategy::Var, Target::Rank(0)).unwrap();
        let p = LowRankTriangular::build(&pc);
        assert_eq!(p.solve_lower(&[4.0, 9.0, 16.0]).unwrap(), vec![2.0, 3.0, 4.0]);
        assert_eq!(p.solve_upper(&[4.0, 9.0, 16.0]).unwrap(), vec![2.0, 3.0, 4.0]);
        assert_eq!(p.apply_inverse(&[4.0, 9.0, 16.0]).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn round_trips() {
        let a = toeplitz(15);
        let pc = decompose(&a, &[0.0; 15], Strategy::PCov, Target::Rank(4)).unwrap();
        let p = LowRankTriangular::build(&pc);
        let ones = vec![1.0; 15];
        let x = p.solve_lower(&p.mul_lower(&ones)).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let v: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
        let back = p.apply_inverse(&p.mul_reconstructed(&v)).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn shares_columns() {
        let a = toeplitz(10);
        let pc = decompose(&a, &[0.0; 10], Strategy::Var, Target::Rank(3)).unwrap();
        let p = LowRankTriangular::build(&pc);
        assert!(Arc::ptr_eq(&p.cols, &pc.shared_columns()));
    }

    #[test]
    fn rejects_bad_rhs() {
        let a = toeplitz(4);
        let pc = decompose(&a, &[0.0; 4], Strategy::Var, Target::Rank(2)).unwrap();
        let p = LowRankTriangular::build(&pc);
        assert!(p.solve_lower(&[1.0; 3]).is_err());
        assert!(p.solve_upper(&[1.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
