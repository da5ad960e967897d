//! Sparse-GP quality metrics for a set of selected inducing points and the
//! row-moment bounds on single-pivot trace reduction.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operator::{backward_subst, cholesky_in_place, cholesky_with_retry, forward_subst, SymmetricOperator};
use crate::pivot::PartialCholesky;
use crate::scalar::{dot, Real};

/// Relative jitter (times `theta * N`) for the least-squares normal equations.
const SSE_JITTER: f64 = 1e-10;

/// Metrics of one decomposition at one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub rank: usize,
    pub sse: f64,
    pub trace_residual: f64,
    pub nlml: f64,
    pub seed: u64,
    pub strategy: String,
}

/// Remaining trace `tr(A - L L^T) = sum_{j >= M} d_j` in O(N).
pub fn trace_residual<T: Real>(pc: &PartialCholesky<T>) -> T {
    pc.remaining_trace()
}

/// Sum of squared errors of the least-squares fit
/// `alpha = (K_IX K_XI)^{-1} K_IX y` on the columns of the selected points.
///
/// `centered_y` is in the operator's row order; `op` supplies the kernel columns.
pub fn sse<T: Real, O: SymmetricOperator<T> + ?Sized>(
    pc: &PartialCholesky<T>,
    op: &O,
    centered_y: &[T],
) -> Result<T> {
    let n = op.dim();
    if centered_y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: centered_y.len() });
    }
    let sel = pc.selected();
    let m = sel.len();
    if m == 0 {
        return Err(Error::InvalidConfig("least squares needs at least one selected point".into()));
    }
    // Columns of K_XI, stored column-major.
    let mut kx = vec![T::zero(); m * n];
    for (c, &idx) in sel.iter().enumerate() {
        op.row_into(idx, &mut kx[c * n..(c + 1) * n]);
    }
    let col = |c: usize| &kx[c * n..(c + 1) * n];
    let mut normal = vec![T::zero(); m * m];
    for a in 0..m {
        for b in 0..=a {
            let v = dot(col(a), col(b));
            normal[a * m + b] = v;
            normal[b * m + a] = v;
        }
    }
    let mut rhs: Vec<T> = (0..m).map(|c| dot(col(c), centered_y)).collect();
    let shift = T::lit(SSE_JITTER) * op.diag_scale() * T::from_usize(n).unwrap();
    let l = cholesky_with_retry(&normal, m, shift).map_err(|_| Error::SingularSystem)?;
    forward_subst(&l, m, &mut rhs);
    backward_subst(&l, m, &mut rhs);
    let mut err = T::zero();
    for i in 0..n {
        let mut pred = T::zero();
        for c in 0..m {
            pred = pred + kx[c * n + i] * rhs[c];
        }
        let r = centered_y[i] - pred;
        err = err + r * r;
    }
    Ok(err)
}

/// Coefficients of the complexity and penalty terms of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NlmlCoefficients {
    /// `1/2 log|Q|` and `1/(2 sigma^2) tr(K - Q)`: the collapsed variational bound.
    #[default]
    Standard,
    /// `N/2 log|Q|` and `1/sigma^2 tr(K - Q)` as printed in the source derivation.
    PaperLiteral,
}

/// The four terms of the variational free energy bound on the NLML.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmlTerms<T> {
    pub constant: T,
    pub data_fit: T,
    pub complexity: T,
    pub penalty: T,
}

impl<T: Real> NlmlTerms<T> {
    pub fn total(&self) -> T {
        self.constant + self.data_fit + self.complexity + self.penalty
    }
}

/// Negative variational lower bound with `Q = L L^T + sigma^2 I`, where `L`
/// is the partial factor of the *latent* kernel.
///
/// The inner solve uses Woodbury and the log-determinant the determinant lemma,
/// both through the `M x M` matrix `sigma^2 I + L^T L`.
pub fn nlml_terms<T: Real>(
    latent: &PartialCholesky<T>,
    centered_y: &[T],
    noise_variance: T,
    coefficients: NlmlCoefficients,
) -> Result<NlmlTerms<T>> {
    let n = latent.dim();
    if centered_y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: centered_y.len() });
    }
    if !(noise_variance > T::zero()) {
        return Err(Error::ZeroNoise);
    }
    let m = latent.rank();
    let s2 = noise_variance;
    // y in pivoted order, to match the factor rows.
    let yp: Vec<T> = latent.pivots().iter().map(|&k| centered_y[k]).collect();
    let mut inner = vec![T::zero(); m * m];
    for a in 0..m {
        for b in 0..=a {
            let v = dot(latent.column(a), latent.column(b));
            inner[a * m + b] = v;
            inner[b * m + a] = v;
        }
        inner[a * m + a] = inner[a * m + a] + s2;
    }
    cholesky_in_place(&mut inner, m).map_err(|_| Error::SingularSystem)?;
    let mut t: Vec<T> = (0..m).map(|c| dot(latent.column(c), &yp)).collect();
    forward_subst(&inner, m, &mut t);
    let quad = (dot(&yp, &yp) - dot(&t, &t)) / s2;
    let nf = T::from_usize(n).unwrap();
    let logdet_inner: T = (0..m).map(|i| inner[i * m + i].ln()).sum::<T>() * T::lit(2.0);
    let logdet = T::from_usize(n - m).unwrap() * s2.ln() + logdet_inner;
    let half = T::lit(0.5);
    let trace = latent.remaining_trace();
    let (complexity, penalty) = match coefficients {
        NlmlCoefficients::Standard => (half * logdet, half * trace / s2),
        NlmlCoefficients::PaperLiteral => (half * nf * logdet, trace / s2),
    };
    Ok(NlmlTerms {
        constant: half * nf * T::lit(2.0 * PI).ln(),
        data_fit: half * quad,
        complexity,
        penalty,
    })
}

pub fn nlml<T: Real>(
    latent: &PartialCholesky<T>,
    centered_y: &[T],
    noise_variance: T,
    coefficients: NlmlCoefficients,
) -> Result<T> {
    nlml_terms(latent, centered_y, noise_variance, coefficients).map(|t| t.total())
}

/// Row moments and trace-reduction bounds for one pivot candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceBoundRow<T> {
    pub index: usize,
    /// Row mean.
    pub m: T,
    /// Row variance.
    pub v: T,
    /// Row second moment, `m^2 + v`.
    pub s: T,
    /// Exact trace reduction `||A_i||^2 / A_ii`.
    pub tau: T,
    /// `N m^2 / A_ii`
    pub lower: T,
    /// `N m`
    pub upper: T,
}

impl<T: Real> TraceBoundRow<T> {
    /// Whether `lower <= tau <= upper` fails beyond a relative round-off slack.
    pub fn violates(&self, rel_slack: T) -> bool {
        self.tau < self.lower - rel_slack * self.lower.abs() || self.tau > self.upper + rel_slack * self.upper.abs()
    }
}

/// Moments and bounds for every row. Requires non-negative entries and a
/// constant diagonal.
pub fn trace_bounds<T: Real, O: SymmetricOperator<T> + ?Sized>(op: &O) -> Result<Vec<TraceBoundRow<T>>> {
    let n = op.dim();
    let nf = T::from_usize(n).unwrap();
    let d0 = op.entry(0, 0);
    let diag_tol = T::lit(1e-12) * d0.abs();
    let mut row = vec![T::zero(); n];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        op.row_into(i, &mut row);
        if let Some(j) = row.iter().position(|v| *v < T::zero()) {
            return Err(Error::AssumptionViolated { i, j });
        }
        let aii = row[i];
        if (aii - d0).abs() > diag_tol {
            return Err(Error::AssumptionViolated { i, j: i });
        }
        let m = row.iter().copied().sum::<T>() / nf;
        let v = row.iter().map(|a| (*a - m) * (*a - m)).sum::<T>() / nf;
        let tau = row.iter().map(|a| *a * *a).sum::<T>() / aii;
        out.push(TraceBoundRow { index: i, m, v, s: m * m + v, tau, lower: nf * m * m / aii, upper: nf * m });
    }
    Ok(out)
}
