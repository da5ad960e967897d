//! Experiment configuration.
//!
//! Settings come from an optional config file and from command-line flags;
//! flags win. The file is TOML restricted to top-level `key = value` pairs
//! whose keys are the long flag names without the leading dashes:
//!
//! ```toml
//! # comments start with '#'
//! synth = "clusters(5, 1000, 2, 0.15)"
//! theta = 1.0
//! lengthscale = 0.3          # scalar (broadcast) or one value per dimension
//! noise = 1e-2
//! strategies = "var,pcov"    # comma-separated string or array of names
//! ranks = [8, 16, 32]
//! seeds = [0, 1, 2]
//! cap = 7000
//! tol = 1e-4
//! mi-eps = 0.5
//! paper-literal-coefficients = false
//! out = "results"
//! data-seed = 0
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use pivchol::{KernelConfig, Strategy};
use serde::{Deserialize, Deserializer};

use crate::error::{BenchError, Result};
use crate::synth::SynthSpec;

pub const DEFAULT_CAP: usize = 7000;
pub const DEFAULT_MI_EPS: f64 = 0.5;

/// Every setting optional; used for both the file and the flags.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    pub data: Option<PathBuf>,
    #[serde(default, deserialize_with = "string_or_number")]
    pub target_col: Option<String>,
    pub synth: Option<String>,
    pub theta: Option<f64>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub lengthscale: Option<Vec<f64>>,
    pub noise: Option<f64>,
    #[serde(default, deserialize_with = "names")]
    pub strategies: Option<Vec<String>>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub ranks: Option<Vec<usize>>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub seeds: Option<Vec<u64>>,
    pub cap: Option<usize>,
    pub tol: Option<f64>,
    pub mi_eps: Option<f64>,
    pub paper_literal_coefficients: Option<bool>,
    pub out: Option<PathBuf>,
    pub data_seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D: Deserializer<'de>, T: Deserialize<'de>>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error> {
    Ok(Some(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    }))
}

fn names<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<String>>, D::Error> {
    let raw: Vec<String> = one_or_many(d)?.unwrap_or_default();
    Ok(Some(raw.iter().flat_map(|s| split_list(s)).collect()))
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Col {
        Index(u64),
        Name(String),
    }
    Ok(Some(match Col::deserialize(d)? {
        Col::Index(i) => i.to_string(),
        Col::Name(s) => s,
    }))
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        Settings {
            data: top.data.or(self.data),
            target_col: top.target_col.or(self.target_col),
            synth: top.synth.or(self.synth),
            theta: top.theta.or(self.theta),
            lengthscale: top.lengthscale.or(self.lengthscale),
            noise: top.noise.or(self.noise),
            strategies: top.strategies.or(self.strategies),
            ranks: top.ranks.or(self.ranks),
            seeds: top.seeds.or(self.seeds),
            cap: top.cap.or(self.cap),
            tol: top.tol.or(self.tol),
            mi_eps: top.mi_eps.or(self.mi_eps),
            paper_literal_coefficients: top.paper_literal_coefficients.or(self.paper_literal_coefficients),
            out: top.out.or(self.out),
            data_seed: top.data_seed.or(self.data_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, target_col: Option<String> },
    Synth(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub theta: f64,
    /// One entry (broadcast) or one per input dimension.
    pub lengthscales: Vec<f64>,
    pub noise: f64,
    pub strategies: Vec<Strategy>,
    /// Explicit rank schedule; `None` selects the command's default schedule.
    pub ranks: Option<Vec<usize>>,
    pub seeds: Vec<u64>,
    pub cap: usize,
    pub tol: f64,
    pub mi_eps: f64,
    pub paper_literal: bool,
    pub out: PathBuf,
    /// Seed for ingestion shuffling and synthetic generation.
    pub data_seed: u64,
}

/// Defaults that differ between subcommands.
#[derive(Debug, Clone)]
pub struct Defaults {
    pub seeds: usize,
    pub strategies: &'static [&'static str],
}

impl Defaults {
    pub const PRECOND: Defaults = Defaults { seeds: 10, strategies: &["var", "pcov", "wpcov", "me", "mi", "random"] };
    pub const REGRESSION: Defaults =
        Defaults { seeds: 20, strategies: &["var", "pcov", "wpcov", "me", "mi", "random"] };
}

impl ExperimentConfig {
    pub fn resolve(s: Settings, defaults: &Defaults) -> Result<Self> {
        let source = match (s.data, s.synth) {
            (Some(_), Some(_)) => return Err(BenchError::Config("give either data or synth, not both".into())),
            (Some(path), None) => DataSource::Csv { path, target_col: s.target_col },
            (None, Some(spec)) => DataSource::Synth(spec.parse()?),
            (None, None) => return Err(BenchError::Config("no dataset: set data or synth".into())),
        };
        // A gp-sample generator carries its own hyperparameters.
        let model = match &source {
            DataSource::Synth(SynthSpec::GpSample { theta, lengthscale, noise, .. }) => {
                Some((*theta, *lengthscale, *noise))
            }
            _ => None,
        };
        let missing = |name: &str| BenchError::Config(format!("missing kernel hyperparameter {name}"));
        let theta = s.theta.or(model.map(|m| m.0)).ok_or_else(|| missing("theta"))?;
        let lengthscales = s.lengthscale.or(model.map(|m| vec![m.1])).ok_or_else(|| missing("lengthscale"))?;
        let noise = s.noise.or(model.map(|m| m.2)).ok_or_else(|| missing("noise"))?;
        if !(theta > 0.0) || lengthscales.is_empty() || lengthscales.iter().any(|l| !(*l > 0.0)) || !(noise >= 0.0) {
            return Err(BenchError::Config("theta and lengthscales must be positive, noise non-negative".into()));
        }
        let mi_eps = s.mi_eps.unwrap_or(DEFAULT_MI_EPS);
        if !(0.0..=1.0).contains(&mi_eps) {
            return Err(BenchError::Config("mi-eps must lie in [0, 1]".into()));
        }
        let names = s.strategies.unwrap_or_else(|| defaults.strategies.iter().map(|s| s.to_string()).collect());
        let strategies = parse_strategies(&names, mi_eps)?;
        if let Some(r) = &s.ranks {
            if r.is_empty() || r.contains(&0) {
                return Err(BenchError::Config("ranks must be positive".into()));
            }
        }
        let seeds = s.seeds.unwrap_or_else(|| (0..defaults.seeds as u64).collect());
        if seeds.is_empty() {
            return Err(BenchError::Config("at least one seed is required".into()));
        }
        let tol = s.tol.unwrap_or(pivchol::pcg::DEFAULT_TOL);
        if !(tol > 0.0) {
            return Err(BenchError::Config("tol must be positive".into()));
        }
        let cap = s.cap.unwrap_or(DEFAULT_CAP);
        if cap < 2 {
            return Err(BenchError::Config("cap must be at least 2".into()));
        }
        Ok(ExperimentConfig {
            source,
            theta,
            lengthscales,
            noise,
            strategies,
            ranks: s.ranks,
            seeds,
            cap,
            tol,
            mi_eps,
            paper_literal: s.paper_literal_coefficients.unwrap_or(false),
            out: s.out.unwrap_or_else(|| PathBuf::from("results")),
            data_seed: s.data_seed.unwrap_or(0),
        })
    }

    /// Kernel hyperparameters for inputs of dimension `d`.
    pub fn kernel(&self, d: usize) -> Result<KernelConfig<f64>> {
        let ls = match self.lengthscales.len() {
            1 => vec![self.lengthscales[0]; d],
            k if k == d => self.lengthscales.clone(),
            k => {
                return Err(BenchError::Config(format!("{k} lengthscales given for {d}-dimensional inputs")));
            }
        };
        Ok(KernelConfig::new(self.theta, ls, self.noise)?)
    }
}

pub fn parse_strategies(names: &[String], mi_eps: f64) -> Result<Vec<Strategy>> {
    let mut out = Vec::new();
    for name in names {
        let s = Strategy::from_str(name).map_err(|e| BenchError::Config(e.to_string()))?;
        let s = match s {
            Strategy::MI { .. } => Strategy::MI { eps: mi_eps },
            Strategy::Weighted => return Err(BenchError::Config("the weighted strategy needs an explicit weight vector".into())),
            other => other,
        };
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(BenchError::Config("no strategies selected".into()));
    }
    Ok(out)
}

/// Smallest `r` with `r^2 >= n`.
fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Preconditioner ranks `2^1, ..., 2^R` with `R = ceil(log2(sqrt N)) + 1`,
/// capped at `N`.
pub fn precond_ranks(n: usize) -> Vec<usize> {
    // ceil(log2 sqrt N) is the smallest r with 4^r >= N.
    let mut r = 0u32;
    while 4usize.pow(r) < n {
        r += 1;
    }
    (1..=r + 1).map(|k| 1usize << k).filter(|&m| m <= n).collect()
}

/// Regression ranks `1, ..., ceil(sqrt N)`.
pub fn regression_ranks(n: usize) -> Vec<usize> {
    (1..=ceil_sqrt(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(precond_ranks(1000), vec![2, 4, 8, 16, 32, 64]);
        assert_eq!(precond_ranks(1024), vec![2, 4, 8, 16, 32, 64]);
        assert_eq!(precond_ranks(1025), vec![2, 4, 8, 16, 32, 64, 128]);
        assert_eq!(precond_ranks(64), vec![2, 4, 8, 16]);
        assert_eq!(precond_ranks(2), vec![2]);
        assert_eq!(regression_ranks(100), (1..=10).collect::<Vec<_>>());
        assert_eq!(regression_ranks(101).len(), 11);
        assert_eq!(regression_ranks(1), vec![1]);
    }

    #[test]
    fn file_grammar() {
        let s = Settings::parse(
            "# comment\nsynth = \"uniform(10, 2)\"\ntheta = 2.0\nlengthscale = 0.5\nnoise = 0.1\n\
             strategies = \"var, pcov\"\nranks = [1, 2]\nseeds = 3\nmi-eps = 0.25\ntarget-col = 1\n",
        )
        .unwrap();
        assert_eq!(s.lengthscale, Some(vec![0.5]));
        assert_eq!(s.strategies, Some(vec!["var".into(), "pcov".into()]));
        assert_eq!(s.seeds, Some(vec![3]));
        assert_eq!(s.target_col.as_deref(), Some("1"));
        let cfg = ExperimentConfig::resolve(s, &Defaults::PRECOND).unwrap();
        assert_eq!(cfg.strategies, vec![Strategy::Var, Strategy::PCov]);
        assert_eq!(cfg.mi_eps, 0.25);
        assert_eq!(cfg.kernel(3).unwrap().lengthscales, vec![0.5; 3]);
        assert!(Settings::parse("bogus = 1").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = Settings { theta: Some(1.0), noise: Some(0.1), cap: Some(50), ..Default::default() };
        let flags = Settings { theta: Some(3.0), ..Default::default() };
        let s = file.overlay(flags);
        assert_eq!((s.theta, s.noise, s.cap), (Some(3.0), Some(0.1), Some(50)));
    }

    #[test]
    fn resolution_errors_are_config_errors() {
        let base = Settings { synth: Some("uniform(10, 2)".into()), theta: Some(1.0), noise: Some(0.1), ..Default::default() };
        let err = ExperimentConfig::resolve(base.clone(), &Defaults::PRECOND).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let ok = Settings { lengthscale: Some(vec![1.0, 2.0]), ..base };
        let cfg = ExperimentConfig::resolve(ok, &Defaults::PRECOND).unwrap();
        assert!(cfg.kernel(3).is_err());
        assert_eq!(cfg.seeds.len(), 10);
        assert!(cfg.strategies.contains(&Strategy::MI { eps: 0.5 }));
    }

    #[test]
    fn gp_sample_supplies_hyperparameters() {
        let s = Settings { synth: Some("gp-sample(100, 2, 1.5, 0.3, 0.01)".into()), ..Default::default() };
        let cfg = ExperimentConfig::resolve(s, &Defaults::REGRESSION).unwrap();
        assert_eq!((cfg.theta, cfg.lengthscales.clone(), cfg.noise), (1.5, vec![0.3], 0.01));
    }
}
