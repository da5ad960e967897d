//! Pivot-selection strategies and their incremental score updates.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scores::{aopt_score, mi_score};
use super::PartialCholesky;
use crate::error::{Error, Result};
use crate::kernel::DEFAULT_CACHE_CAP;
use crate::operator::{DenseSymmetric, SymmetricOperator};
use crate::scalar::{dot, Real};

/// Pivot-selection rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Largest Schur-complement diagonal (the classical pivoted Cholesky).
    Var,
    /// Largest residual row sum `((K - K_hat) 1)_j`.
    PCov,
    /// Row sum weighted by the centered targets, `((K - K_hat)(y - mu))_j`.
    WPCov,
    /// Row sum weighted by a caller-supplied vector.
    Weighted,
    /// Largest squared prediction residual.
    ME,
    /// Mutual information with ε-thresholded neighbourhoods.
    MI { eps: f64 },
    /// Greedy one-step A-optimal trace reduction.
    AOpt,
    /// Uniform draw among the remaining candidates.
    Random { seed: u64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Var => "var",
            Strategy::PCov => "pcov",
            Strategy::WPCov => "wpcov",
            Strategy::Weighted => "weighted",
            Strategy::ME => "me",
            Strategy::MI { .. } => "mi",
            Strategy::AOpt => "aopt",
            Strategy::Random { .. } => "random",
        }
    }

    fn is_projection(&self) -> bool {
        matches!(self, Strategy::PCov | Strategy::WPCov | Strategy::Weighted)
    }

    fn needs_dense_schur(&self) -> bool {
        matches!(self, Strategy::MI { .. } | Strategy::AOpt)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a strategy name. `mi` gets `eps = 0.5` and `random` seed 0; callers
/// override those parameters afterwards.
impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "var" => Strategy::Var,
            "pcov" => Strategy::PCov,
            "wpcov" => Strategy::WPCov,
            "weighted" => Strategy::Weighted,
            "me" => Strategy::ME,
            "mi" => Strategy::MI { eps: 0.5 },
            "aopt" => Strategy::AOpt,
            "random" => Strategy::Random { seed: 0 },
            other => return Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        })
    }
}

/// Per-strategy score vector and cached recursion vectors, all in pivoted order.
#[derive(Debug, Clone)]
pub struct StrategyState<T> {
    kind: Strategy,
    score: Vec<T>,
    /// `A w` for the projection strategies, `y - mu` for ME.
    s_star: Vec<T>,
    /// In-place recursion vector: `z` in the first `m` entries, the running
    /// projection `L_{R,I} z` below.
    s_vec: Vec<T>,
    /// ME residual; its first `m` entries hold the cached solve coefficients.
    residual: Vec<T>,
    schur: Option<DenseSymmetric<T>>,
    rng: Option<ChaCha8Rng>,
    scale: T,
    mvps: usize,
}

impl<T: Real> StrategyState<T> {
    /// Initializes the scores for a rank-0 factor of `op`.
    ///
    /// `centered_y` holds the targets minus the prior mean in the operator's
    /// row order. `weight` is required for [`Strategy::Weighted`] and
    /// overrides the default weights of PCov (`1`) and WPCov (`centered_y`).
    pub fn init<O: SymmetricOperator<T> + ?Sized>(
        kind: Strategy,
        op: &O,
        centered_y: &[T],
        weight: Option<&[T]>,
    ) -> Result<Self> {
        let n = op.dim();
        if centered_y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: centered_y.len() });
        }
        if let Some(w) = weight {
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: w.len() });
            }
        }
        let mut st = StrategyState {
            kind,
            score: vec![T::zero(); n],
            s_star: Vec::new(),
            s_vec: Vec::new(),
            residual: Vec::new(),
            schur: None,
            rng: None,
            scale: op.diag_scale(),
            mvps: 0,
        };
        match kind {
            Strategy::Var => st.score = op.diagonal(),
            Strategy::PCov | Strategy::WPCov | Strategy::Weighted => {
                let w: Vec<T> = match (kind, weight) {
                    (_, Some(w)) => w.to_vec(),
                    (Strategy::PCov, None) => vec![T::one(); n],
                    (Strategy::WPCov, None) => centered_y.to_vec(),
                    _ => return Err(Error::MissingWeight),
                };
                st.s_star = op.apply(&w);
                st.mvps = 1;
                st.s_vec = vec![T::zero(); n];
                st.score = st.s_star.iter().map(|s| *s * *s).collect();
            }
            Strategy::ME => {
                st.s_star = centered_y.to_vec();
                st.residual = centered_y.to_vec();
                st.score = st.residual.iter().map(|r| *r * *r).collect();
            }
            Strategy::MI { eps } => {
                let schur = dense_schur(op)?;
                st.score = mi_score(&schur, T::lit(eps), st.scale)?;
                st.schur = Some(schur);
            }
            Strategy::AOpt => {
                let schur = dense_schur(op)?;
                st.score = aopt_score(&schur)?;
                st.schur = Some(schur);
            }
            Strategy::Random { seed } => st.rng = Some(ChaCha8Rng::seed_from_u64(seed)),
        }
        Ok(st)
    }

    pub fn kind(&self) -> Strategy {
        self.kind
    }

    pub fn scores(&self) -> &[T] {
        &self.score
    }

    pub fn s_star(&self) -> &[T] {
        &self.s_star
    }

    pub fn s_vec(&self) -> &[T] {
        &self.s_vec
    }

    pub fn residual(&self) -> &[T] {
        &self.residual
    }

    /// Matrix-vector products spent so far.
    pub fn mvp_count(&self) -> usize {
        self.mvps
    }

    /// Next pivot position in `[rank, n)`: the largest score with ties going to
    /// the lowest position, or a uniform draw for [`Strategy::Random`].
    pub fn select_pivot(&mut self, rank: usize) -> Result<usize> {
        let n = self.score.len();
        if rank >= n {
            return Err(Error::RankExceeded { rank, dim: n });
        }
        if let Some(rng) = self.rng.as_mut() {
            return Ok(rng.random_range(rank..n));
        }
        let mut best = rank;
        let mut best_val = T::neg_infinity();
        for (j, &s) in self.score.iter().enumerate().skip(rank) {
            if s > best_val {
                best = j;
                best_val = s;
            }
        }
        Ok(best)
    }

    pub(crate) fn swap(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for v in [&mut self.score, &mut self.s_star, &mut self.s_vec, &mut self.residual] {
            if !v.is_empty() {
                v.swap(a, b);
            }
        }
        if let Some(s) = self.schur.as_mut() {
            s.swap_symmetric(a, b);
        }
    }

    /// O(N) update after `pc` gained its newest column.
    pub(crate) fn update(&mut self, pc: &PartialCholesky<T>) -> Result<()> {
        let m = pc.rank() - 1;
        let n = pc.dim();
        let c = pc.column(m);
        let row_m: Vec<T> = (0..m).map(|k| pc.column(k)[m]).collect();
        match self.kind {
            Strategy::Var => {
                let d = pc.schur_diag();
                self.score[m + 1..].copy_from_slice(&d[m + 1..]);
            }
            k if k.is_projection() => {
                let z = (self.s_star[m] - dot(&row_m, &self.s_vec[..m])) / c[m];
                self.s_vec[m] = z;
                for j in m + 1..n {
                    self.s_vec[j] = self.s_vec[j] + c[j] * z;
                    let r = self.s_star[j] - self.s_vec[j];
                    self.score[j] = r * r;
                }
            }
            Strategy::ME => {
                let w = (self.s_star[m] - dot(&row_m, &self.residual[..m])) / c[m];
                self.residual[m] = w;
                for j in m + 1..n {
                    self.residual[j] = self.residual[j] - c[j] * w;
                    self.score[j] = self.residual[j] * self.residual[j];
                }
            }
            k if k.needs_dense_schur() => {
                let schur = self.schur.as_mut().expect("dense Schur complement initialized");
                let data = schur.as_mut_slice();
                for i in m..n {
                    for j in m..n {
                        data[i * n + j] = data[i * n + j] - c[i] * c[j];
                    }
                }
                if m + 1 < n {
                    let idx: Vec<usize> = (m + 1..n).collect();
                    let block = schur.submatrix(&idx);
                    let scores = match self.kind {
                        Strategy::MI { eps } => mi_score(&block, T::lit(eps), self.scale),
                        _ => aopt_score(&block),
                    }
                    .map_err(|e| shift_index(e, m + 1))?;
                    self.score[m + 1..].copy_from_slice(&scores);
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn dense_schur<T: Real, O: SymmetricOperator<T> + ?Sized>(op: &O) -> Result<DenseSymmetric<T>> {
    let n = op.dim();
    if n > DEFAULT_CACHE_CAP {
        return Err(Error::CacheTooLarge { dim: n, cap: DEFAULT_CACHE_CAP });
    }
    Ok(DenseSymmetric::from_operator(op))
}

fn shift_index(e: Error, offset: usize) -> Error {
    match e {
        Error::SingularNeighborhood { index } => Error::SingularNeighborhood { index: index + offset },
        Error::NumericalBreakdown { index } => Error::NumericalBreakdown { index: index + offset },
        other => other,
    }
}
