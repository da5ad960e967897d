//! Partial pivoted Cholesky decompositions of kernel matrices with pluggable
//! pivot-selection strategies.
//!
//! * [`kernel`]: EQ-ARD kernel and the matrix-free [`GramOperator`].
//! * [`pivot`]: the decomposition engine and the Var, PCov, WPCov, weighted,
//!   ME, MI, A-optimal and random strategies.
//! * [`precond`]: the low-rank-plus-diagonal triangular preconditioner.
//! * [`pcg`]: preconditioned conjugate gradients.
//! * [`metrics`]: SSE, remaining trace, variational NLML bound and trace-reduction bounds.
//! * [`container`]: binary serialization of factors and preconditioners.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*F64` / `*F32`
//! aliases below name the common instantiations.

pub mod container;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod operator;
pub mod pcg;
pub mod pivot;
pub mod precond;
pub mod scalar;

pub use error::{Error, Result};
pub use kernel::{kernel_eval, Dataset, GramMode, GramOperator, KernelConfig};
pub use metrics::{nlml, nlml_terms, sse, trace_bounds, trace_residual, MetricsRow, NlmlCoefficients, NlmlTerms, TraceBoundRow};
pub use operator::{DenseSymmetric, SymmetricOperator};
pub use pcg::{pcg_solve, pcg_solve_observed, PcgOptions, PcgReport};
pub use pivot::{
    aopt_score, decompose, decompose_with, mi_score, replay_pivots, PartialCholesky, StopReason, Strategy,
    StrategyState, Target,
};
pub use precond::LowRankTriangular;
pub use scalar::Real;

pub type DatasetF64 = Dataset<f64>;
pub type KernelConfigF64 = KernelConfig<f64>;
pub type GramOperatorF64 = GramOperator<f64>;
pub type PartialCholeskyF64 = PartialCholesky<f64>;
pub type StrategyStateF64 = StrategyState<f64>;
pub type LowRankTriangularF64 = LowRankTriangular<f64>;
pub type PcgReportF64 = PcgReport<f64>;
pub type DenseSymmetricF64 = DenseSymmetric<f64>;

pub type DatasetF32 = Dataset<f32>;
pub type KernelConfigF32 = KernelConfig<f32>;
pub type GramOperatorF32 = GramOperator<f32>;
pub type PartialCholeskyF32 = PartialCholesky<f32>;
pub type LowRankTriangularF32 = LowRankTriangular<f32>;
