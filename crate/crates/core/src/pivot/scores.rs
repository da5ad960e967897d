//! Dense reference scores: ε-thresholded mutual information and greedy
//! A-optimal trace reduction. Both operate on a Schur-complement block over
//! the remaining candidates.

use crate::error::{Error, Result};
use crate::operator::{cholesky_with_retry, forward_subst, DenseSymmetric, SymmetricOperator};
use crate::scalar::Real;

/// Relative jitter for neighbourhood covariances and the conditional-variance floor.
const MI_JITTER: f64 = 1e-10;

/// Mutual information between each candidate `j` and its neighbourhood
///
/// `Q_j = { i != j : |S_ij| / sqrt(S_ii S_jj) > eps }`,
///
/// i.e. `log S_jj - log(S_jj - S_jQ S_QQ^-1 S_Qj)`. With `eps = 0` every other
/// candidate is a neighbour and the score is the exact mutual information with
/// the rest of the block.
pub fn mi_score<T: Real>(schur: &DenseSymmetric<T>, eps: T, scale: T) -> Result<Vec<T>> {
    if !(eps >= T::zero() && eps <= T::one()) {
        return Err(Error::InvalidConfig(format!("MI threshold {eps} outside [0, 1]")));
    }
    let n = schur.dim();
    let jitter = T::lit(MI_JITTER) * scale;
    let diag: Vec<T> = (0..n).map(|i| schur.get(i, i)).collect();
    let mut scores = Vec::with_capacity(n);
    for j in 0..n {
        let sjj = diag[j];
        if !(sjj > T::zero()) {
            return Err(Error::NumericalBreakdown { index: j });
        }
        let q: Vec<usize> = (0..n)
            .filter(|&i| {
                if i == j || !(diag[i] > T::zero()) {
                    return false;
                }
                if eps == T::zero() {
                    return true;
                }
                let rho = (schur.get(i, j).abs() / (diag[i] * sjj).sqrt()).min(T::one());
                rho > eps
            })
            .collect();
        if q.is_empty() {
            scores.push(T::zero());
            continue;
        }
        let sub = schur.submatrix(&q);
        let k = q.len();
        let l = cholesky_with_retry(sub.as_slice(), k, jitter)
            .map_err(|_| Error::SingularNeighborhood { index: j })?;
        let mut t: Vec<T> = q.iter().map(|&i| schur.get(i, j)).collect();
        forward_subst(&l, k, &mut t);
        let explained: T = t.iter().map(|v| *v * *v).sum();
        let cond = (sjj - explained).abs().max(jitter);
        scores.push(sjj.abs().ln() - cond.ln());
    }
    Ok(scores)
}

/// Greedy A-optimal score `||S_{:,j}||^2 / S_jj`: the trace removed from the
/// block when `j` is conditioned on.
pub fn aopt_score<T: Real>(schur: &DenseSymmetric<T>) -> Result<Vec<T>> {
    let n = schur.dim();
    (0..n)
        .map(|j| {
            let sjj = schur.get(j, j);
            if !(sjj > T::zero()) {
                return Err(Error::NumericalBreakdown { index: j });
            }
            let sq: T = schur.row(j).iter().map(|v| *v * *v).sum();
            Ok(sq / sjj)
        })
        .collect()
}
