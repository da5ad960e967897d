#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pivchol::{Dataset, GramMode, GramOperator, KernelConfig, PartialCholesky, SymmetricOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform inputs in `[-2, 2]^d`, standard-normal targets.
pub fn random_dataset(n: usize, d: usize, seed: u64) -> Arc<Dataset<f64>> {
    let mut r = rng(seed);
    let x = (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect();
    let y = (0..n).map(|_| r.sample(StandardNormal)).collect();
    Arc::new(Dataset::new(n, d, x, y).unwrap())
}

pub fn gram(n: usize, d: usize, seed: u64, lengthscale: f64, noise: f64, mode: GramMode) -> GramOperator<f64> {
    let cfg = KernelConfig::isotropic(1.0, lengthscale, d, noise).unwrap().with_jitter(0.0);
    GramOperator::new(random_dataset(n, d, seed), cfg, mode).unwrap()
}

/// Dense matrix assembled entry by entry from the operator.
pub fn dense<O: SymmetricOperator<f64> + ?Sized>(op: &O) -> DMatrix<f64> {
    let n = op.dim();
    DMatrix::from_fn(n, n, |i, j| op.entry(i, j))
}

/// `P^T A P` for the factor's pivot order.
pub fn permuted(a: &DMatrix<f64>, pivots: &[usize]) -> DMatrix<f64> {
    let n = pivots.len();
    DMatrix::from_fn(n, n, |i, j| a[(pivots[i], pivots[j])])
}

/// `N x M` dense `L` in pivoted row order.
pub fn factor_matrix(pc: &PartialCholesky<f64>) -> DMatrix<f64> {
    let (n, m) = (pc.dim(), pc.rank());
    DMatrix::from_fn(n, m, |i, c| pc.column(c)[i])
}

/// Nystrom approximation `A_{:,I} A_II^{-1} A_{I,:}` (in `a`'s own order).
pub fn nystrom(a: &DMatrix<f64>, sel: &[usize]) -> DMatrix<f64> {
    let n = a.nrows();
    if sel.is_empty() {
        return DMatrix::zeros(n, n);
    }
    let axi = a.select_columns(sel);
    let aii = axi.select_rows(sel);
    let sol = aii.lu().solve(&axi.transpose()).expect("A_II invertible");
    &axi * sol
}

/// Schur complement of `a` on the complement of `sel`, returned as (remaining indices, block).
pub fn schur_complement(a: &DMatrix<f64>, sel: &[usize]) -> (Vec<usize>, DMatrix<f64>) {
    let n = a.nrows();
    let rest: Vec<usize> = (0..n).filter(|i| !sel.contains(i)).collect();
    let arr = a.select_rows(&rest).select_columns(&rest);
    if sel.is_empty() {
        return (rest, arr);
    }
    let ari = a.select_rows(&rest).select_columns(sel);
    let aii = a.select_rows(sel).select_columns(sel);
    let sol = aii.lu().solve(&ari.transpose()).unwrap();
    (rest, arr - &ari * sol)
}

pub fn rel_fro(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Exact Gaussian negative log marginal likelihood `-log N(y | 0, C)`.
pub fn dense_nlml(c: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ch = c.clone().cholesky().expect("covariance SPD");
    let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let alpha = ch.solve(&dvec(y));
    0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * dvec(y).dot(&alpha) + 0.5 * logdet
}
