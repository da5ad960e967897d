//! Seeded synthetic datasets.
//!
//! * `clusters(k, N, D, spread)`: `k` centres uniform in the unit cube, points
//!   Gaussian around a uniformly chosen centre with standard deviation `spread`.
//! * `uniform(N, D)`: inputs uniform in the unit cube.
//! * `gp-sample(N, D, theta, lengthscale, noise)`: uniform inputs, targets drawn
//!   from the zero-mean GP with that EQ kernel plus Gaussian noise.
//!
//! For the first two, targets are `sum_d sin(2 pi x_d) / sqrt(D)` plus noise
//! with standard deviation 0.1.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use pivchol::{decompose, Dataset, GramMode, GramOperator, KernelConfig, Strategy, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{BenchError, Result};

const TARGET_NOISE: f64 = 0.1;
/// Relative trace left out of the low-rank factor used for GP sampling; the
/// remainder enters through an independent diagonal term.
const SAMPLE_TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum SynthSpec {
    Clusters { k: usize, n: usize, d: usize, spread: f64 },
    Uniform { n: usize, d: usize },
    GpSample { n: usize, d: usize, theta: f64, lengthscale: f64, noise: f64 },
}

impl SynthSpec {
    pub fn len(&self) -> usize {
        match *self {
            SynthSpec::Clusters { n, .. } | SynthSpec::Uniform { n, .. } | SynthSpec::GpSample { n, .. } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthSpec::Clusters { k, n, d, spread } => write!(f, "clusters({k},{n},{d},{spread})"),
            SynthSpec::Uniform { n, d } => write!(f, "uniform({n},{d})"),
            SynthSpec::GpSample { n, d, theta, lengthscale, noise } => {
                write!(f, "gp-sample({n},{d},{theta},{lengthscale},{noise})")
            }
        }
    }
}

impl FromStr for SynthSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| BenchError::Config(format!("invalid synthetic spec `{s}`: {why}"));
        let s_trim = s.trim();
        let open = s_trim.find('(').ok_or_else(|| bad("expected name(args)"))?;
        let args = s_trim[open + 1..].strip_suffix(')').ok_or_else(|| bad("missing `)`"))?;
        let name = s_trim[..open].trim().to_ascii_lowercase();
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let int = |i: usize| -> Result<usize> {
            args[i].parse::<usize>().ok().filter(|v| *v > 0).ok_or_else(|| bad("sizes must be positive integers"))
        };
        let real = |i: usize| -> Result<f64> {
            args[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("expected a number"))
        };
        let arity = |k: usize| if args.len() == k { Ok(()) } else { Err(bad(&format!("expected {k} arguments"))) };
        let spec = match name.as_str() {
            "clusters" => {
                arity(4)?;
                SynthSpec::Clusters { k: int(0)?, n: int(1)?, d: int(2)?, spread: real(3)? }
            }
            "uniform" => {
                arity(2)?;
                SynthSpec::Uniform { n: int(0)?, d: int(1)? }
            }
            "gp-sample" | "gp_sample" => {
                arity(5)?;
                SynthSpec::GpSample { n: int(0)?, d: int(1)?, theta: real(2)?, lengthscale: real(3)?, noise: real(4)? }
            }
            _ => return Err(bad("unknown generator")),
        };
        match spec {
            SynthSpec::Clusters { spread, .. } if !(spread > 0.0) => Err(bad("spread must be positive")),
            SynthSpec::GpSample { theta, lengthscale, noise, .. } if !(theta > 0.0 && lengthscale > 0.0 && noise >= 0.0) => {
                Err(bad("theta and lengthscale must be positive, noise non-negative"))
            }
            spec => Ok(spec),
        }
    }
}

fn smooth_targets(x: &[f64], n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = 1.0 / (d as f64).sqrt();
    (0..n)
        .map(|i| {
            let f: f64 = x[i * d..(i + 1) * d].iter().map(|v| (2.0 * std::f64::consts::PI * v).sin()).sum();
            let e: f64 = rng.sample(StandardNormal);
            f * scale + TARGET_NOISE * e
        })
        .collect()
}

/// Generates the dataset described by `spec`; identical for identical seeds.
pub fn synth(spec: &SynthSpec, seed: u64) -> Result<Dataset<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match *spec {
        SynthSpec::Uniform { n, d } => {
            let x: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
            let y = smooth_targets(&x, n, d, &mut rng);
            Dataset::new(n, d, x, y)?
        }
        SynthSpec::Clusters { k, n, d, spread } => {
            let centres: Vec<f64> = (0..k * d).map(|_| rng.random::<f64>()).collect();
            let mut x = Vec::with_capacity(n * d);
            for _ in 0..n {
                let c = rng.random_range(0..k);
                for j in 0..d {
                    let e: f64 = rng.sample(StandardNormal);
                    x.push(centres[c * d + j] + spread * e);
                }
            }
            let y = smooth_targets(&x, n, d, &mut rng);
            Dataset::new(n, d, x, y)?
        }
        SynthSpec::GpSample { n, d, theta, lengthscale, noise } => {
            let x: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
            let inputs = Arc::new(Dataset::new(n, d, x.clone(), vec![0.0; n])?);
            let config = KernelConfig::isotropic(theta, lengthscale, d, noise)?;
            let op = GramOperator::new(inputs, config, GramMode::Latent)?;
            let op = if n <= pivchol::kernel::DEFAULT_CACHE_CAP { op.with_dense_cache()? } else { op };
            // f = L z + sqrt(d) u: exact in distribution up to the neglected
            // off-diagonal part of the residual.
            let pc = decompose(&op, &vec![0.0; n], Strategy::Var, Target::TraceTolerance(SAMPLE_TRACE_TOL))?;
            let z: Vec<f64> = (0..pc.rank()).map(|_| rng.sample(StandardNormal)).collect();
            let mut y = vec![0.0; n];
            for (row, &orig) in pc.pivots().iter().enumerate() {
                let mut f = 0.0;
                for (c, zc) in z.iter().enumerate() {
                    f += pc.column(c)[row] * zc;
                }
                let u: f64 = rng.sample(StandardNormal);
                f += pc.schur_diag()[row].max(0.0).sqrt() * u;
                y[orig] = f;
            }
            for v in y.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += noise.sqrt() * e;
            }
            Dataset::new(n, d, x, y)?
        }
    };
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_displays() {
        let s: SynthSpec = "clusters(3, 300, 2, 0.1)".parse().unwrap();
        assert_eq!(s, SynthSpec::Clusters { k: 3, n: 300, d: 2, spread: 0.1 });
        assert_eq!(s.to_string().parse::<SynthSpec>().unwrap(), s);
        let g: SynthSpec = "gp-sample(10,1,1,0.5,0.01)".parse().unwrap();
        assert_eq!(g.len(), 10);
        for bad in ["clusters(3,300,2)", "uniform(0,1)", "blobs(1,2)", "uniform(3,1", "gp-sample(5,1,-1,1,0)"] {
            assert!(bad.parse::<SynthSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn shapes_and_determinism() {
        let s: SynthSpec = "clusters(3, 300, 2, 0.1)".parse().unwrap();
        let a = synth(&s, 1).unwrap();
        assert_eq!((a.len(), a.dim()), (300, 2));
        let u = SynthSpec::Uniform { n: 4, d: 1 };
        assert_eq!(synth(&u, 5).unwrap(), synth(&u, 5).unwrap());
        assert_ne!(synth(&u, 5).unwrap(), synth(&u, 6).unwrap());
    }
}
