//! Exponentiated-quadratic ARD kernel and the matrix-free Gram operator.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::SymmetricOperator;
use crate::scalar::Real;

/// Largest dimension for which a dense kernel cache may be built by default.
pub const DEFAULT_CACHE_CAP: usize = 4096;

/// Inputs `X` (row-major, `n x d`) and targets `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    n: usize,
    d: usize,
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(n: usize, d: usize, x: Vec<T>, y: Vec<T>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidData(format!("empty dataset ({n} x {d})")));
        }
        if x.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, found: x.len() });
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if let Some(p) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite entry at flat position {p}")));
        }
        Ok(Self { n, d, x, y })
    }

    /// Builds from a list of input rows.
    pub fn from_rows(rows: &[Vec<T>], y: Vec<T>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: r.len() });
        }
        Self::new(rows.len(), d, rows.concat(), y)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn inputs(&self) -> &[T] {
        &self.x
    }

    pub fn targets(&self) -> &[T] {
        &self.y
    }

    /// Reorders rows so that new row `k` is old row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: perm.len() });
        }
        let mut x = Vec::with_capacity(self.x.len());
        let mut y = Vec::with_capacity(self.n);
        for &p in perm {
            if p >= self.n {
                return Err(Error::IndexOutOfRange { index: p, len: self.n });
            }
            x.extend_from_slice(self.row(p));
            y.push(self.y[p]);
        }
        Ok(Self { n: self.n, d: self.d, x, y })
    }
}

/// Hyperparameters of the EQ-ARD kernel plus the observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig<T> {
    pub signal_variance: T,
    pub lengthscales: Vec<T>,
    pub noise_variance: T,
    pub prior_mean: T,
    /// Added to the diagonal in noisy mode on top of the noise variance.
    pub jitter: T,
}

impl<T: Real> KernelConfig<T> {
    /// Default jitter is `1e-10 * signal_variance`.
    pub fn new(signal_variance: T, lengthscales: Vec<T>, noise_variance: T) -> Result<Self> {
        let cfg = Self {
            signal_variance,
            lengthscales,
            noise_variance,
            prior_mean: T::zero(),
            jitter: T::lit(1e-10) * signal_variance,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same lengthscale in every one of `d` dimensions.
    pub fn isotropic(signal_variance: T, lengthscale: T, d: usize, noise_variance: T) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; d], noise_variance)
    }

    pub fn with_jitter(mut self, jitter: T) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_prior_mean(mut self, mean: T) -> Self {
        self.prior_mean = mean;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.signal_variance > T::zero()) || !self.signal_variance.is_finite() {
            return bad("signal variance must be positive and finite");
        }
        if self.lengthscales.is_empty() {
            return bad("at least one lengthscale is required");
        }
        if self.lengthscales.iter().any(|l| !(*l > T::zero()) || !l.is_finite()) {
            return bad("lengthscales must be positive and finite");
        }
        if !(self.noise_variance >= T::zero()) || !self.noise_variance.is_finite() {
            return bad("noise variance must be non-negative");
        }
        if !(self.jitter >= T::zero()) || !self.jitter.is_finite() {
            return bad("jitter must be non-negative");
        }
        if !self.prior_mean.is_finite() {
            return bad("prior mean must be finite");
        }
        Ok(())
    }

    /// Diagonal precision matrix entries `1 / l_d^2`.
    pub fn precisions(&self) -> Vec<T> {
        self.lengthscales.iter().map(|l| (*l * *l).recip()).collect()
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// `theta * exp(-1/2 sum_d (x_d - x'_d)^2 / l_d^2)`.
pub fn kernel_eval<T: Real>(x: &[T], x2: &[T], config: &KernelConfig<T>) -> Result<T> {
    let d = config.dim();
    for v in [x, x2] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    Ok(eq_kernel(x, x2, &config.precisions(), config.signal_variance))
}

#[inline]
fn eq_kernel<T: Real>(x: &[T], x2: &[T], precisions: &[T], theta: T) -> T {
    let mut r2 = T::zero();
    for ((&a, &b), &p) in x.iter().zip(x2).zip(precisions) {
        let diff = a - b;
        r2 = r2 + diff * diff * p;
    }
    theta * (-T::lit(0.5) * r2).exp()
}

/// Which matrix the operator exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GramMode {
    /// `K`
    Latent,
    /// `G = K + (noise + jitter) I`
    Noisy,
}

/// Matrix-free Gram matrix over a dataset. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GramOperator<T> {
    dataset: Arc<Dataset<T>>,
    config: KernelConfig<T>,
    precisions: Vec<T>,
    mode: GramMode,
    /// Dense latent kernel, row-major, shared between modes.
    cache: Option<Arc<Vec<T>>>,
}

impl<T: Real> GramOperator<T> {
    pub fn new(dataset: Arc<Dataset<T>>, config: KernelConfig<T>, mode: GramMode) -> Result<Self> {
        config.validate()?;
        if config.dim() != dataset.dim() {
            return Err(Error::DimensionMismatch { expected: dataset.dim(), found: config.dim() });
        }
        let precisions = config.precisions();
        Ok(Self { dataset, config, precisions, mode, cache: None })
    }

    /// Same data, hyperparameters and cache with a different mode.
    pub fn with_mode(&self, mode: GramMode) -> Self {
        Self { mode, ..self.clone() }
    }

    /// Materializes the latent kernel when `n <= DEFAULT_CACHE_CAP`.
    pub fn with_dense_cache(self) -> Result<Self> {
        self.with_dense_cache_cap(DEFAULT_CACHE_CAP)
    }

    pub fn with_dense_cache_cap(mut self, cap: usize) -> Result<Self> {
        let n = self.dataset.len();
        if n > cap {
            return Err(Error::CacheTooLarge { dim: n, cap });
        }
        if self.cache.is_none() {
            let mut k = vec![T::zero(); n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = self.latent(i, j);
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
            self.cache = Some(Arc::new(k));
        }
        Ok(self)
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    pub fn mode(&self) -> GramMode {
        self.mode
    }

    pub fn config(&self) -> &KernelConfig<T> {
        &self.config
    }

    pub fn dataset(&self) -> &Arc<Dataset<T>> {
        &self.dataset
    }

    /// Amount added to the latent diagonal in the current mode.
    pub fn diagonal_shift(&self) -> T {
        match self.mode {
            GramMode::Latent => T::zero(),
            GramMode::Noisy => self.config.noise_variance + self.config.jitter,
        }
    }

    #[inline]
    fn latent(&self, i: usize, j: usize) -> T {
        if let Some(c) = &self.cache {
            return c[i * self.dataset.len() + j];
        }
        // Evaluate on the ordered pair so that (i, j) and (j, i) agree bitwise.
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        eq_kernel(
            self.dataset.row(a),
            self.dataset.row(b),
            &self.precisions,
            self.config.signal_variance,
        )
    }

    fn check_index(&self, i: usize) -> Result<()> {
        let n = self.dataset.len();
        if i >= n {
            Err(Error::IndexOutOfRange { index: i, len: n })
        } else {
            Ok(())
        }
    }

    pub fn gram_entry(&self, i: usize, j: usize) -> Result<T> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.entry(i, j))
    }

    pub fn gram_row(&self, i: usize) -> Result<Vec<T>> {
        self.check_index(i)?;
        let mut out = vec![T::zero(); self.dataset.len()];
        self.row_into(i, &mut out);
        Ok(out)
    }

    pub fn gram_mvp(&self, v: &[T]) -> Result<Vec<T>> {
        let n = self.dataset.len();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
        Ok(self.apply(v))
    }
}

impl<T: Real> SymmetricOperator<T> for GramOperator<T> {
    fn dim(&self) -> usize {
        self.dataset.len()
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> T {
        let k = self.latent(i, j);
        debug_assert!(k >= T::zero());
        if i == j {
            k + self.diagonal_shift()
        } else {
            k
        }
    }

    fn diag_scale(&self) -> T {
        self.config.signal_variance
    }

    fn row_into(&self, i: usize, out: &mut [T]) {
        let n = self.dataset.len();
        match &self.cache {
            Some(c) => out.copy_from_slice(&c[i * n..(i + 1) * n]),
            None => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = self.latent(i, j);
                }
            }
        }
        out[i] = out[i] + self.diagonal_shift();
    }

    fn diagonal(&self) -> Vec<T> {
        vec![self.config.signal_variance + self.diagonal_shift(); self.dataset.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, d: usize) -> Arc<Dataset<f64>> {
        let x: Vec<f64> = (0..n * d).map(|k| ((k * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect();
        let y = (0..n).map(|i| i as f64).collect();
        Arc::new(Dataset::new(n, d, x, y).unwrap())
    }

    #[test]
    fn kernel_at_zero_distance_is_theta() {
        let cfg = KernelConfig::isotropic(2.5, 0.7, 2, 0.0).unwrap();
        assert_eq!(kernel_eval(&[0.3, -1.0], &[0.3, -1.0], &cfg).unwrap(), 2.5);
    }

    #[test]
    fn kernel_half_at_sqrt_two_ln_two() {
        let cfg = KernelConfig::isotropic(1.0, 1.0, 1, 0.0).unwrap();
        let v = kernel_eval(&[(2.0f64 * 2f64.ln()).sqrt()], &[0.0], &cfg).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernel_linear_in_theta() {
        let c1 = KernelConfig::isotropic(1.0, 1.0, 2, 0.0).unwrap();
        let c2 = KernelConfig::isotropic(2.0, 1.0, 2, 0.0).unwrap();
        let (a, b) = ([0.0, 0.0], [0.0, 0.0]);
        assert_eq!(kernel_eval(&a, &b, &c2).unwrap(), 2.0 * kernel_eval(&a, &b, &c1).unwrap());
        let (a, b) = ([0.1, 0.4], [-0.3, 1.0]);
        assert_eq!(kernel_eval(&a, &b, &c2).unwrap(), 2.0 * kernel_eval(&a, &b, &c1).unwrap());
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let cfg = KernelConfig::isotropic(1.0, 1.0, 2, 0.0).unwrap();
        assert!(matches!(kernel_eval(&[0.0], &[0.0, 1.0], &cfg), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(KernelConfig::isotropic(0.0, 1.0, 1, 0.1).is_err());
        assert!(KernelConfig::isotropic(1.0, -1.0, 1, 0.1).is_err());
        assert!(KernelConfig::isotropic(1.0, 1.0, 1, -0.1).is_err());
        assert!(KernelConfig::isotropic(1.0, 1.0, 1, 0.1).unwrap().with_jitter(-1.0).validate().is_err());
    }

    #[test]
    fn gram_entry_modes() {
        let cfg = KernelConfig::isotropic(1.0, 0.8, 2, 0.1).unwrap().with_jitter(0.0);
        let k = GramOperator::new(toy(5, 2), cfg, GramMode::Latent).unwrap();
        let g = k.with_mode(GramMode::Noisy);
        assert_eq!(k.gram_entry(2, 2).unwrap(), 1.0);
        assert!((g.gram_entry(2, 2).unwrap() - 1.1).abs() < 1e-15);
        assert_eq!(k.gram_entry(1, 3).unwrap(), g.gram_entry(1, 3).unwrap());
        assert!(matches!(k.gram_entry(5, 0), Err(Error::IndexOutOfRange { index: 5, len: 5 })));
        assert!(k.gram_row(7).is_err());
    }

    #[test]
    fn gram_mvp_edge_cases() {
        let cfg = KernelConfig::isotropic(1.7, 1.0, 3, 0.0).unwrap();
        let k = GramOperator::new(toy(4, 3), cfg.clone(), GramMode::Latent).unwrap();
        assert_eq!(k.gram_mvp(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        assert!(k.gram_mvp(&[0.0; 3]).is_err());
        let one = GramOperator::new(toy(1, 3), cfg, GramMode::Latent).unwrap();
        assert_eq!(one.gram_mvp(&[2.0]).unwrap(), vec![1.7 * 2.0]);
        assert_eq!(one.gram_row(0).unwrap(), vec![one.gram_entry(0, 0).unwrap()]);
    }

    #[test]
    fn cache_is_not_a_semantic_change() {
        let cfg = KernelConfig::new(1.3, vec![0.5, 2.0], 0.05).unwrap();
        let g = GramOperator::new(toy(30, 2), cfg, GramMode::Noisy).unwrap();
        let gc = g.clone().with_dense_cache().unwrap();
        for i in 0..30 {
            assert_eq!(g.gram_row(i).unwrap(), gc.gram_row(i).unwrap());
        }
        let v: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).cos()).collect();
        assert_eq!(g.gram_mvp(&v).unwrap(), gc.gram_mvp(&v).unwrap());
        assert!(matches!(
            g.clone().with_dense_cache_cap(10),
            Err(Error::CacheTooLarge { dim: 30, cap: 10 })
        ));
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(Dataset::<f64>::new(0, 1, vec![], vec![]).is_err());
        assert!(Dataset::new(1, 1, vec![f64::NAN], vec![0.0]).is_err());
        assert!(Dataset::new(2, 1, vec![0.0, 1.0], vec![0.0]).is_err());
    }
}
