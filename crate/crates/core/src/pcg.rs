//! Preconditioned conjugate gradients for `A x = y`.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::operator::SymmetricOperator;
use crate::precond::LowRankTriangular;
use crate::scalar::{dot, norm2, Real};

/// Relative residual tolerance used when none is given.
pub const DEFAULT_TOL: f64 = 1e-4;
/// The recursive residual is replaced by the true residual this often.
pub const TRUE_RESIDUAL_PERIOD: usize = 25;

#[derive(Debug, Clone)]
pub struct PcgOptions<T> {
    pub tol: T,
    /// Defaults to `10 N`.
    pub max_iter: Option<usize>,
}

impl<T: Real> Default for PcgOptions<T> {
    fn default() -> Self {
        PcgOptions { tol: T::lit(DEFAULT_TOL), max_iter: None }
    }
}

#[derive(Debug, Clone)]
pub struct PcgReport<T> {
    /// Solution in the operator's (user) order.
    pub solution: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `||y - A x_k|| / ||y||` after each iteration.
    pub residual_history: Vec<T>,
    pub wall_time: Duration,
}

/// Solves `op x = y` from a zero initial guess.
///
/// The preconditioner works in its own pivoted order; vectors are permuted on
/// the way in and out. The per-iteration test uses the recursive residual,
/// which is refreshed from a true-residual product every
/// [`TRUE_RESIDUAL_PERIOD`] iterations and before convergence is accepted.
pub fn pcg_solve<T: Real, O: SymmetricOperator<T> + ?Sized>(
    op: &O,
    y: &[T],
    precond: Option<&LowRankTriangular<T>>,
    options: &PcgOptions<T>,
) -> Result<PcgReport<T>> {
    pcg_solve_observed(op, y, precond, options, |_, _| {})
}

/// [`pcg_solve`] calling `observe(k, x_k)` after every iteration.
pub fn pcg_solve_observed<T: Real, O: SymmetricOperator<T> + ?Sized>(
    op: &O,
    y: &[T],
    precond: Option<&LowRankTriangular<T>>,
    options: &PcgOptions<T>,
    mut observe: impl FnMut(usize, &[T]),
) -> Result<PcgReport<T>> {
    let start = Instant::now();
    let n = op.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if let Some(p) = precond {
        if p.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: p.dim() });
        }
    }
    if !(options.tol > T::zero()) {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let max_iter = options.max_iter.unwrap_or(10 * n);
    if max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }

    let mut x = vec![T::zero(); n];
    let y_norm = norm2(y);
    if y_norm == T::zero() {
        return Ok(PcgReport {
            solution: x,
            iterations: 0,
            converged: true,
            residual_history: Vec::new(),
            wall_time: start.elapsed(),
        });
    }

    let mut scratch = vec![T::zero(); n];
    let mut precondition = |r: &[T], z: &mut [T]| match precond {
        None => z.copy_from_slice(r),
        Some(p) => {
            let piv = p.pivots();
            for (s, &k) in scratch.iter_mut().zip(piv) {
                *s = r[k];
            }
            p.apply_inverse_in_place(&mut scratch);
            for (s, &k) in scratch.iter().zip(piv) {
                z[k] = *s;
            }
        }
    };

    let mut r = y.to_vec();
    let mut z = vec![T::zero(); n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![T::zero(); n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..max_iter {
        op.apply_into(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        if !alpha.is_finite() {
            return Err(Error::NumericalDivergence { iteration: k });
        }
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * q[i];
        }
        iterations = k + 1;
        observe(iterations, &x);

        let mut rel = norm2(&r) / y_norm;
        let refresh = iterations % TRUE_RESIDUAL_PERIOD == 0;
        if refresh || rel <= options.tol {
            op.apply_into(&x, &mut q);
            for i in 0..n {
                r[i] = y[i] - q[i];
            }
            rel = norm2(&r) / y_norm;
        }
        if !rel.is_finite() {
            return Err(Error::NumericalDivergence { iteration: k });
        }
        history.push(rel);
        if rel <= options.tol {
            converged = true;
            break;
        }

        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        if !beta.is_finite() {
            return Err(Error::NumericalDivergence { iteration: k });
        }
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Ok(PcgReport {
        solution: x,
        iterations,
        converged,
        residual_history: history,
        wall_time: start.elapsed(),
    })
}
