//! Partial pivoted Cholesky decomposition with pluggable pivot selection.
//!
//! After `M` steps the factor holds `L` (an `N x M` matrix in pivoted row
//! order), the permutation `pi`, and the diagonal of the Schur complement
//! `diag(P^T A P - L L^T)`. The columns are reference counted so that
//! preconditioners and truncated views can share them without copying.

mod scores;
mod strategy;

use std::sync::Arc;

use rayon::prelude::*;

pub use scores::{aopt_score, mi_score};
pub use strategy::{Strategy, StrategyState};

use crate::error::{Error, Result};
use crate::operator::{DenseSymmetric, SymmetricOperator};
use crate::scalar::Real;

/// Pivots whose Schur diagonal falls to `RANK_TOLERANCE * diag_scale` or below
/// stop the factorization.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Work (rows times columns) above which column accumulation runs in parallel.
const PAR_WORK: usize = 1 << 16;
const PAR_CHUNK: usize = 512;

/// Why a decomposition stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    RankReached,
    TraceTolerance,
    /// Achieved rank and the offending Schur diagonal.
    Breakdown { rank: usize, value: f64 },
}

/// Termination rule for [`decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<T> {
    /// Stop at this rank. Requesting the full dimension turns a breakdown into an error.
    Rank(usize),
    /// Stop once the remaining trace is at most this fraction of the initial trace.
    TraceTolerance(T),
}

#[derive(Debug, Clone)]
pub struct PartialCholesky<T> {
    n: usize,
    rank: usize,
    pivots: Vec<usize>,
    schur_diag: Vec<T>,
    /// Diagonal of the factorized matrix, pivoted order.
    diag: Vec<T>,
    /// Column-major storage; at least `rank` columns of length `n`.
    cols: Arc<Vec<T>>,
    trace_history: Vec<T>,
    diag_scale: T,
    stop: Option<StopReason>,
}

impl<T: Real> PartialCholesky<T> {
    /// The rank-0 factor of `op`.
    pub fn empty<O: SymmetricOperator<T> + ?Sized>(op: &O) -> Self {
        let diag = op.diagonal();
        let trace = diag.iter().copied().sum();
        PartialCholesky {
            n: op.dim(),
            rank: 0,
            pivots: (0..op.dim()).collect(),
            schur_diag: diag.clone(),
            diag,
            cols: Arc::new(Vec::new()),
            trace_history: vec![trace],
            diag_scale: op.diag_scale(),
            stop: None,
        }
    }

    pub(crate) fn from_parts(
        pivots: Vec<usize>,
        schur_diag: Vec<T>,
        cols: Vec<T>,
        rank: usize,
    ) -> Result<Self> {
        let n = pivots.len();
        if schur_diag.len() != n || cols.len() != rank * n {
            return Err(Error::Format("inconsistent factor array lengths".into()));
        }
        if rank > n {
            return Err(Error::RankExceeded { rank, dim: n });
        }
        let mut seen = vec![false; n];
        for &p in &pivots {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Format("pivot vector is not a permutation".into()));
            }
        }
        let mut diag = schur_diag.clone();
        for (j, dj) in diag.iter_mut().enumerate() {
            for c in 0..rank.min(j + 1) {
                let l = cols[c * n + j];
                *dj = *dj + l * l;
            }
        }
        let diag_scale = diag.iter().copied().fold(T::zero(), T::max);
        let trace = schur_diag[rank..].iter().copied().sum();
        Ok(PartialCholesky {
            n,
            rank,
            pivots,
            schur_diag,
            diag,
            cols: Arc::new(cols),
            trace_history: vec![trace],
            diag_scale,
            stop: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Permutation: pivoted position `k` holds original index `pivots()[k]`.
    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Original indices of the selected points, in selection order.
    pub fn selected(&self) -> &[usize] {
        &self.pivots[..self.rank]
    }

    /// Diagonal of the Schur complement in pivoted order; zero for the first `rank` entries.
    pub fn schur_diag(&self) -> &[T] {
        &self.schur_diag
    }

    /// Diagonal of the factorized matrix in pivoted order.
    pub fn original_diag(&self) -> &[T] {
        &self.diag
    }

    /// Column `c` of `L` in pivoted row order. Rows above `c` are zero.
    pub fn column(&self, c: usize) -> &[T] {
        assert!(c < self.rank, "column {c} beyond rank {}", self.rank);
        &self.cols[c * self.n..(c + 1) * self.n]
    }

    pub(crate) fn shared_columns(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.cols)
    }

    /// Remaining trace `sum_j d_j` after each step, starting with the full trace.
    pub fn trace_history(&self) -> &[T] {
        &self.trace_history
    }

    pub fn diag_scale(&self) -> T {
        self.diag_scale
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    fn rank_tolerance(&self) -> T {
        T::lit(RANK_TOLERANCE) * self.diag_scale
    }

    /// One pivoted Cholesky step driven by `state`. Returns the original index
    /// of the selected pivot.
    pub fn step<O: SymmetricOperator<T> + ?Sized>(
        &mut self,
        state: &mut StrategyState<T>,
        op: &O,
    ) -> Result<usize> {
        let pos = state.select_pivot(self.rank)?;
        self.check_pivot(pos)?;
        state.swap(self.rank, pos);
        self.eliminate(op, pos);
        state.update(self)?;
        Ok(self.pivots[self.rank - 1])
    }

    fn check_pivot(&self, pos: usize) -> Result<()> {
        let value = self.schur_diag[pos];
        if value > self.rank_tolerance() {
            Ok(())
        } else {
            Err(Error::PivotBreakdown { rank: self.rank, value: value.as_f64() })
        }
    }

    /// Swaps position `pos` to the front of the remaining block and appends
    /// the corresponding column.
    fn eliminate<O: SymmetricOperator<T> + ?Sized>(&mut self, op: &O, pos: usize) {
        let (m, n) = (self.rank, self.n);
        let cols = Arc::make_mut(&mut self.cols);
        cols.truncate(m * n);
        if pos != m {
            self.pivots.swap(m, pos);
            self.schur_diag.swap(m, pos);
            self.diag.swap(m, pos);
            for c in 0..m {
                cols.swap(c * n + m, c * n + pos);
            }
        }

        let mut row = vec![T::zero(); n];
        op.row_into(self.pivots[m], &mut row);
        let mut col = vec![T::zero(); n];
        for j in m + 1..n {
            col[j] = row[self.pivots[j]];
        }

        // col[j] -= sum_k L[m, k] L[j, k], reduced in k order for every row.
        let coeffs: Vec<T> = (0..m).map(|k| cols[k * n + m]).collect();
        let subtract = |start: usize, chunk: &mut [T]| {
            for (k, &a) in coeffs.iter().enumerate() {
                let src = &cols[k * n + start..k * n + start + chunk.len()];
                for (cj, &l) in chunk.iter_mut().zip(src) {
                    *cj = *cj - a * l;
                }
            }
        };
        let tail = &mut col[m + 1..];
        if tail.len() * m >= PAR_WORK {
            tail.par_chunks_mut(PAR_CHUNK)
                .enumerate()
                .for_each(|(b, chunk)| subtract(m + 1 + b * PAR_CHUNK, chunk));
        } else {
            subtract(m + 1, tail);
        }

        let pivot = self.schur_diag[m].sqrt();
        col[m] = pivot;
        for j in m + 1..n {
            col[j] = col[j] / pivot;
            self.schur_diag[j] = self.schur_diag[j] - col[j] * col[j];
        }
        self.schur_diag[m] = T::zero();
        cols.extend_from_slice(&col);
        self.rank += 1;
        self.trace_history.push(self.schur_diag[self.rank..].iter().copied().sum());
    }

    /// View of the first `m` steps. Columns are shared; the Schur diagonal is
    /// recomputed with the same subtraction order the incremental update used.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m > self.rank {
            return Err(Error::RankExceeded { rank: m, dim: self.rank });
        }
        let n = self.n;
        let mut schur_diag = vec![T::zero(); n];
        for j in m..n {
            let mut d = self.diag[j];
            for c in 0..m {
                let l = self.cols[c * n + j];
                d = d - l * l;
            }
            schur_diag[j] = d;
        }
        Ok(PartialCholesky {
            n,
            rank: m,
            pivots: self.pivots.clone(),
            schur_diag,
            diag: self.diag.clone(),
            cols: Arc::clone(&self.cols),
            trace_history: self.trace_history[..=m].to_vec(),
            diag_scale: self.diag_scale,
            stop: Some(StopReason::RankReached),
        })
    }

    /// Remaining trace `sum_{j >= rank} d_j`.
    pub fn remaining_trace(&self) -> T {
        self.schur_diag[self.rank..].iter().copied().sum()
    }

    /// Dense `L L^T` in pivoted order.
    pub fn reconstruct(&self) -> DenseSymmetric<T> {
        let n = self.n;
        DenseSymmetric::from_fn(n, |i, j| {
            (0..self.rank).fold(T::zero(), |acc, c| acc + self.cols[c * n + i] * self.cols[c * n + j])
        })
    }
}

/// Runs pivoted Cholesky steps from an initialized strategy until `target`
/// is met or the factorization breaks down.
///
/// A breakdown before the target yields the partial factor with
/// [`StopReason::Breakdown`], except when the full dimension was requested,
/// in which case the error is returned.
pub fn decompose_with<T: Real, O: SymmetricOperator<T> + ?Sized>(
    op: &O,
    mut state: StrategyState<T>,
    target: Target<T>,
) -> Result<PartialCholesky<T>> {
    let n = op.dim();
    let mut pc = PartialCholesky::empty(op);
    let (max_rank, trace_stop) = match target {
        Target::Rank(m) if m > n => return Err(Error::RankExceeded { rank: m, dim: n }),
        Target::Rank(m) => (m, None),
        Target::TraceTolerance(t) if !(t > T::zero()) => {
            return Err(Error::InvalidConfig("trace tolerance must be positive".into()))
        }
        Target::TraceTolerance(t) => (n, Some(t * pc.trace_history[0])),
    };
    loop {
        if let Some(stop) = trace_stop {
            if pc.remaining_trace() <= stop {
                pc.stop = Some(StopReason::TraceTolerance);
                return Ok(pc);
            }
        }
        if pc.rank >= max_rank {
            pc.stop = Some(StopReason::RankReached);
            return Ok(pc);
        }
        match pc.step(&mut state, op) {
            Ok(_) => {}
            Err(Error::PivotBreakdown { rank, value }) => {
                if matches!(target, Target::Rank(m) if m == n) {
                    return Err(Error::PivotBreakdown { rank, value });
                }
                pc.stop = Some(StopReason::Breakdown { rank, value });
                return Ok(pc);
            }
            Err(e) => return Err(e),
        }
    }
}

/// [`decompose_with`] for strategies that need no explicit weight vector.
pub fn decompose<T: Real, O: SymmetricOperator<T> + ?Sized>(
    op: &O,
    centered_y: &[T],
    kind: Strategy,
    target: Target<T>,
) -> Result<PartialCholesky<T>> {
    let state = StrategyState::init(kind, op, centered_y, None)?;
    decompose_with(op, state, target)
}

/// Factorizes `op` pivoting on the given original indices in order.
///
/// Used to carry a pivot sequence chosen on one matrix (e.g. the noisy Gram
/// matrix) over to another (the latent kernel). Stops early with
/// [`StopReason::Breakdown`] if a pivot's Schur diagonal vanishes.
pub fn replay_pivots<T: Real, O: SymmetricOperator<T> + ?Sized>(
    op: &O,
    order: &[usize],
) -> Result<PartialCholesky<T>> {
    let n = op.dim();
    let mut pc = PartialCholesky::empty(op);
    let mut position: Vec<usize> = (0..n).collect();
    for &idx in order {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
        let pos = position[idx];
        if pos < pc.rank {
            return Err(Error::InvalidConfig(format!("pivot {idx} repeated")));
        }
        if let Err(Error::PivotBreakdown { rank, value }) = pc.check_pivot(pos) {
            pc.stop = Some(StopReason::Breakdown { rank, value });
            return Ok(pc);
        }
        let displaced = pc.pivots[pc.rank];
        pc.eliminate(op, pos);
        position[displaced] = pos;
        position[idx] = pc.rank - 1;
    }
    pc.stop = Some(StopReason::RankReached);
    Ok(pc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]]) -> DenseSymmetric<f64> {
        let n = rows.len();
        DenseSymmetric::from_row_major(n, rows.concat()).unwrap()
    }

    #[test]
    fn one_by_one() {
        let a = dense(&[&[4.0]]);
        let pc = decompose(&a, &[0.0], Strategy::Var, Target::Rank(1)).unwrap();
        assert_eq!(pc.column(0), &[2.0]);
        assert_eq!(pc.schur_diag(), &[0.0]);
    }

    #[test]
    fn var_picks_largest_diagonal() {
        let a = DenseSymmetric::from_diagonal(&[1.0, 2.0, 3.0]);
        let mut st = StrategyState::init(Strategy::Var, &a, &[0.0; 3], None).unwrap();
        assert_eq!(st.select_pivot(0).unwrap(), 2);
        let id = DenseSymmetric::<f64>::identity(3);
        let mut st = StrategyState::init(Strategy::Var, &id, &[0.0; 3], None).unwrap();
        assert_eq!(st.select_pivot(0).unwrap(), 0);
        assert!(matches!(st.select_pivot(3), Err(Error::RankExceeded { .. })));
    }

    #[test]
    fn pcov_on_identity_ties_to_first() {
        let id = DenseSymmetric::<f64>::identity(3);
        let mut st = StrategyState::init(Strategy::PCov, &id, &[0.0; 3], None).unwrap();
        assert_eq!(st.s_star(), &[1.0, 1.0, 1.0]);
        assert_eq!(st.select_pivot(0).unwrap(), 0);
        assert_eq!(st.mvp_count(), 1);
    }

    #[test]
    fn pcov_hand_computed_row_sums() {
        let a = dense(&[&[1.0, 0.9, 0.0], &[0.9, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let mut st = StrategyState::init(Strategy::PCov, &a, &[0.0; 3], None).unwrap();
        assert_eq!(st.s_star(), &[1.9, 1.9, 1.0]);
        assert_eq!(st.select_pivot(0).unwrap(), 0);
    }

    #[test]
    fn weighted_with_ones_equals_pcov() {
        let a = dense(&[&[2.0, 0.3, 0.1], &[0.3, 1.0, 0.2], &[0.1, 0.2, 1.5]]);
        let y = [0.5, -1.0, 2.0];
        let p = StrategyState::init(Strategy::PCov, &a, &y, None).unwrap();
        let w = StrategyState::init(Strategy::Weighted, &a, &y, Some(&[1.0; 3])).unwrap();
        assert_eq!(p.s_star(), w.s_star());
        assert_eq!(p.s_vec(), w.s_vec());
        assert_eq!(p.scores(), w.scores());
    }

    #[test]
    fn weighted_requires_weight() {
        let a = DenseSymmetric::<f64>::identity(2);
        assert_eq!(
            StrategyState::init(Strategy::Weighted, &a, &[0.0; 2], None).unwrap_err(),
            Error::MissingWeight
        );
        assert!(matches!(
            StrategyState::init(Strategy::Weighted, &a, &[0.0; 2], Some(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn trace_tolerance_one_gives_rank_zero() {
        let a = DenseSymmetric::from_diagonal(&[1.0, 2.0]);
        let pc = decompose(&a, &[0.0; 2], Strategy::Var, Target::TraceTolerance(1.0)).unwrap();
        assert_eq!(pc.rank(), 0);
        assert_eq!(pc.stop_reason(), Some(StopReason::TraceTolerance));
    }

    #[test]
    fn breakdown_on_singular_matrix() {
        let a = dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let err = decompose(&a, &[0.0; 2], Strategy::Var, Target::Rank(2)).unwrap_err();
        assert!(matches!(err, Error::PivotBreakdown { rank: 1, .. }));
        let b = DenseSymmetric::from_fn(3, |i, j| if i < 2 && j < 2 { 1.0 } else if i == j { 1.0 } else { 0.0 });
        let pc = decompose(&b, &[0.0; 3], Strategy::Var, Target::Rank(3)).unwrap_err();
        assert!(matches!(pc, Error::PivotBreakdown { rank: 2, .. }));
        // Two duplicated pairs: rank 2, requested 3 of 4.
        let c = DenseSymmetric::from_fn(4, |i, j| if i / 2 == j / 2 { 1.0 } else { 0.0 });
        let pc = decompose(&c, &[0.0; 4], Strategy::Var, Target::Rank(3)).unwrap();
        assert_eq!(pc.rank(), 2);
        assert_eq!(pc.selected(), &[0, 2]);
        assert!(matches!(pc.stop_reason(), Some(StopReason::Breakdown { rank: 2, .. })));
    }

    #[test]
    fn truncation_matches_shorter_run() {
        let a = DenseSymmetric::from_fn(12, |i, j| (-((i as f64 - j as f64) / 3.0).powi(2)).exp() + if i == j { 0.01 } else { 0.0 });
        let y = vec![0.0; 12];
        let long = decompose(&a, &y, Strategy::PCov, Target::Rank(8)).unwrap();
        let short = decompose(&a, &y, Strategy::PCov, Target::Rank(5)).unwrap();
        let view = long.truncated(5).unwrap();
        assert_eq!(view.selected(), short.selected());
        assert_eq!(view.trace_history(), short.trace_history());
        assert_eq!(view.remaining_trace(), short.remaining_trace());
        assert!(long.truncated(9).is_err());
    }

    #[test]
    fn replay_reproduces_selection() {
        let a = DenseSymmetric::from_fn(10, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).powi(2)) + if i == j { 0.1 } else { 0.0 });
        let pc = decompose(&a, &[0.0; 10], Strategy::PCov, Target::Rank(6)).unwrap();
        let re = replay_pivots(&a, pc.selected()).unwrap();
        assert_eq!(re.selected(), pc.selected());
        for c in 0..6 {
            assert_eq!(re.column(c), pc.column(c));
        }
        assert!(replay_pivots(&a, &[1, 1]).is_err());
        assert!(replay_pivots(&a, &[10]).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let a = DenseSymmetric::from_fn(20, |i, j| if i == j { 2.0 } else { 0.5f64.powi((i as i32 - j as i32).abs()) });
        let y = vec![0.0; 20];
        let r1 = decompose(&a, &y, Strategy::Random { seed: 7 }, Target::Rank(10)).unwrap();
        let r2 = decompose(&a, &y, Strategy::Random { seed: 7 }, Target::Rank(10)).unwrap();
        let r3 = decompose(&a, &y, Strategy::Random { seed: 8 }, Target::Rank(10)).unwrap();
        assert_eq!(r1.selected(), r2.selected());
        assert_ne!(r1.selected(), r3.selected());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in ["var", "pcov", "wpcov", "weighted", "me", "mi", "aopt", "random"] {
            assert_eq!(s.parse::<Strategy>().unwrap().name(), s);
        }
        assert!("foo".parse::<Strategy>().is_err());
    }
}
