//! Experiment grids: preconditioned solves, regression metrics and
//! trace-reduction bounds.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use pivchol::kernel::DEFAULT_CACHE_CAP;
use pivchol::{
    decompose, nlml, pcg_solve, replay_pivots, sse, trace_bounds, trace_residual, Dataset, GramMode, GramOperator,
    LowRankTriangular, MetricsRow, NlmlCoefficients, PcgOptions, Strategy, Target,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{precond_ranks, regression_ranks, DataSource, ExperimentConfig};
use crate::error::{BenchError, Result};
use crate::ingest::ingest_path;
use crate::svg::{BandPoint, Plot, Series};
use crate::synth::synth;

/// MI is skipped above this size.
pub const MI_MAX_N: usize = 512;
/// Name of the unpreconditioned baseline in the preconditioning grid.
pub const BASELINE: &str = "none";
/// ChaCha stream used for the per-seed row shuffles; the random strategy
/// draws from stream 0 of the same seed.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone)]
pub struct NamedDataset {
    /// File-name safe identifier.
    pub name: String,
    pub data: Arc<Dataset<f64>>,
    /// Rows dropped during ingestion (always 0 for synthetic data).
    pub dropped: usize,
}

pub fn sanitize(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        let keep = c.is_ascii_alphanumeric() || c == '.' || c == '-';
        if keep {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<NamedDataset> {
    match &cfg.source {
        DataSource::Csv { path, target_col } => {
            let ing = ingest_path(path, target_col.as_deref(), cfg.data_seed, cfg.cap)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
            Ok(NamedDataset { name: sanitize(&stem), data: Arc::new(ing.dataset), dropped: ing.dropped })
        }
        DataSource::Synth(spec) => {
            let mut data = synth(spec, cfg.data_seed)?;
            if data.len() > cfg.cap {
                let keep: Vec<usize> = (0..cfg.cap).collect();
                data = data.permuted(&keep)?;
            }
            Ok(NamedDataset { name: sanitize(&spec.to_string()), data: Arc::new(data), dropped: 0 })
        }
    }
}

/// Row permutation for one repetition and the permuted dataset.
pub fn shuffled(data: &Dataset<f64>, seed: u64) -> Result<(Vec<usize>, Dataset<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut perm: Vec<usize> = (0..data.len()).collect();
    perm.shuffle(&mut rng);
    let permuted = data.permuted(&perm)?;
    Ok((perm, permuted))
}

fn operator(cfg: &ExperimentConfig, data: Dataset<f64>) -> Result<GramOperator<f64>> {
    let kernel = cfg.kernel(data.dim())?;
    let n = data.len();
    let op = GramOperator::new(Arc::new(data), kernel, GramMode::Noisy)?;
    Ok(if n <= DEFAULT_CACHE_CAP { op.with_dense_cache()? } else { op })
}

fn centered_targets(op: &GramOperator<f64>) -> Vec<f64> {
    let mu = op.config().prior_mean;
    op.dataset().targets().iter().map(|y| y - mu).collect()
}

/// Strategies runnable at size `n`, with a note for each one skipped.
fn usable_strategies(cfg: &ExperimentConfig, n: usize, notes: &mut Vec<String>) -> Vec<Strategy> {
    cfg.strategies
        .iter()
        .copied()
        .filter(|s| match s {
            Strategy::MI { .. } if n > MI_MAX_N => {
                notes.push(format!("mi skipped: N = {n} exceeds {MI_MAX_N}"));
                false
            }
            Strategy::AOpt if n > DEFAULT_CACHE_CAP => {
                notes.push(format!("aopt skipped: N = {n} exceeds {DEFAULT_CACHE_CAP}"));
                false
            }
            _ => true,
        })
        .collect()
}

fn with_seed(s: Strategy, seed: u64) -> Strategy {
    match s {
        Strategy::Random { .. } => Strategy::Random { seed },
        other => other,
    }
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

fn band(values: &[f64], x: f64) -> Option<BandPoint> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(BandPoint { x, mid: quantile(&v, 0.5), lo: quantile(&v, 0.05), hi: quantile(&v, 0.95) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<R> {
    pub rows: Vec<R>,
    /// Human-readable remarks such as skipped strategies.
    pub notes: Vec<String>,
}

// ---------------------------------------------------------------------------
// Preconditioning

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecondRow {
    pub dataset: String,
    pub strategy: String,
    pub rank: usize,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub wall_ms: f64,
    pub converged: bool,
    pub error: String,
}

/// For every strategy, rank and seed: decompose the noisy Gram matrix, build
/// the preconditioner and solve `G alpha = y - mu` with PCG. Cell failures are
/// recorded in the `error` column.
pub fn run_precond_experiment(cfg: &ExperimentConfig, ds: &NamedDataset) -> Result<Outcome<PrecondRow>> {
    let n = ds.data.len();
    let mut notes = Vec::new();
    let strategies = usable_strategies(cfg, n, &mut notes);
    let mut ranks: Vec<usize> = cfg.ranks.clone().unwrap_or_else(|| precond_ranks(n));
    ranks.retain(|&r| {
        let ok = r <= n;
        if !ok {
            notes.push(format!("rank {r} skipped: exceeds N = {n}"));
        }
        ok
    });
    ranks.sort_unstable();
    ranks.dedup();
    let options = PcgOptions { tol: cfg.tol, max_iter: None };

    let mut cells: Vec<(usize, Option<Strategy>, usize)> = vec![(0, None, 0)];
    for (k, s) in strategies.iter().enumerate() {
        for &r in &ranks {
            cells.push((k + 1, Some(*s), r));
        }
    }

    let mut keyed = Vec::new();
    for &seed in &cfg.seeds {
        let (_, data) = shuffled(&ds.data, seed)?;
        let op = operator(cfg, data)?;
        let y = centered_targets(&op);
        let rows: Vec<_> = cells
            .par_iter()
            .map(|&(order, strategy, rank)| {
                let start = Instant::now();
                let result = (|| -> pivchol::Result<_> {
                    let pre = match strategy {
                        None => None,
                        Some(s) => {
                            let pc = decompose(&op, &y, with_seed(s, seed), Target::Rank(rank))?;
                            Some(LowRankTriangular::build(&pc))
                        }
                    };
                    pcg_solve(&op, &y, pre.as_ref(), &options)
                })();
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let (iterations, converged, error) = match result {
                    Ok(rep) => (Some(rep.iterations), rep.converged, String::new()),
                    Err(e) => (None, false, e.to_string()),
                };
                let row = PrecondRow {
                    dataset: ds.name.clone(),
                    strategy: strategy.map_or(BASELINE, |s| s.name()).to_string(),
                    rank,
                    seed,
                    iterations,
                    wall_ms,
                    converged,
                    error,
                };
                ((order, rank, seed), row)
            })
            .collect();
        keyed.extend(rows);
    }
    keyed.sort_by_key(|(k, _)| *k);
    Ok(Outcome { rows: keyed.into_iter().map(|(_, r)| r).collect(), notes })
}

pub fn precond_plot(rows: &[PrecondRow]) -> Plot {
    let name = rows.first().map(|r| r.dataset.clone()).unwrap_or_default();
    let iters = |r: &PrecondRow| r.iterations.map_or(f64::NAN, |i| i as f64);
    let mut series: Vec<Series> = Vec::new();
    let mut baseline = Vec::new();
    for r in rows {
        if r.strategy == BASELINE {
            baseline.push(iters(r));
            continue;
        }
        if !series.iter().any(|s| s.name == r.strategy) {
            series.push(Series { name: r.strategy.clone(), points: Vec::new() });
        }
    }
    for s in series.iter_mut() {
        let mut ranks: Vec<usize> = rows.iter().filter(|r| r.strategy == s.name).map(|r| r.rank).collect();
        ranks.dedup();
        for rank in ranks {
            let vals: Vec<f64> = rows.iter().filter(|r| r.strategy == s.name && r.rank == rank).map(iters).collect();
            s.points.extend(band(&vals, rank as f64));
        }
    }
    let b = median(&baseline);
    Plot {
        title: format!("{name}: PCG iterations"),
        x_label: "rank".into(),
        y_label: "iterations (median, 5-95%)".into(),
        log2_x: true,
        series,
        hlines: if b.is_finite() { vec![(BASELINE.to_string(), b)] } else { Vec::new() },
    }
}

// ---------------------------------------------------------------------------
// Regression metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub rank: usize,
    pub sse: Option<f64>,
    pub trace: Option<f64>,
    pub nlml: Option<f64>,
    pub sse_norm: Option<f64>,
    pub trace_norm: Option<f64>,
    pub nlml_norm: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub metric: String,
    pub divisor: f64,
    pub source: String,
}

/// Metrics for the first `m` pivots of one run.
fn metrics_at(
    pc: &pivchol::PartialCholesky<f64>,
    latent_pc: &pivchol::PartialCholesky<f64>,
    latent: &GramOperator<f64>,
    y: &[f64],
    m: usize,
    coefficients: NlmlCoefficients,
) -> pivchol::Result<MetricsRow> {
    let t = pc.truncated(m)?;
    let lk = latent_pc.truncated(m.min(latent_pc.rank()))?;
    Ok(MetricsRow {
        rank: m,
        sse: sse(&t, latent, y)?,
        trace_residual: trace_residual(&t),
        nlml: nlml(&lk, y, latent.config().noise_variance, coefficients)?,
        seed: 0,
        strategy: String::new(),
    })
}

/// For every strategy and seed: one decomposition of the noisy Gram matrix to
/// the largest scheduled rank, the same pivots replayed on the latent kernel,
/// and SSE / remaining trace / NLML bound at every scheduled rank.
///
/// Metrics are normalized by the absolute median over seeds of the random
/// strategy at rank 1 (divisor 1 if that cell is not part of the grid).
pub fn run_regression_experiment(
    cfg: &ExperimentConfig,
    ds: &NamedDataset,
) -> Result<(Outcome<RegressionRow>, Vec<Normalization>)> {
    let n = ds.data.len();
    if !(cfg.noise > 0.0) {
        return Err(BenchError::Config("the regression experiment needs noise > 0".into()));
    }
    let mut notes = Vec::new();
    let strategies = usable_strategies(cfg, n, &mut notes);
    let mut ranks: Vec<usize> = cfg.ranks.clone().unwrap_or_else(|| regression_ranks(n));
    ranks.retain(|&r| r <= n);
    ranks.sort_unstable();
    ranks.dedup();
    let max_rank = ranks.last().copied().unwrap_or(0);
    let coefficients = if cfg.paper_literal { NlmlCoefficients::PaperLiteral } else { NlmlCoefficients::Standard };

    let mut keyed = Vec::new();
    for &seed in &cfg.seeds {
        let (_, data) = shuffled(&ds.data, seed)?;
        let op = operator(cfg, data)?;
        let latent = op.with_mode(GramMode::Latent);
        let y = centered_targets(&op);
        let rows: Vec<_> = strategies
            .par_iter()
            .enumerate()
            .flat_map_iter(|(order, &s)| {
                let run = decompose(&op, &y, with_seed(s, seed), Target::Rank(max_rank))
                    .and_then(|pc| replay_pivots(&latent, pc.selected()).map(|lk| (pc, lk)));
                let row = |rank: usize, m: pivchol::Result<MetricsRow>| {
                    let (sse, trace, nlml, error) = match m {
                        Ok(m) => (Some(m.sse), Some(m.trace_residual), Some(m.nlml), String::new()),
                        Err(e) => (None, None, None, e.to_string()),
                    };
                    let r = RegressionRow {
                        dataset: ds.name.clone(),
                        strategy: s.name().to_string(),
                        seed,
                        rank,
                        sse,
                        trace,
                        nlml,
                        sse_norm: None,
                        trace_norm: None,
                        nlml_norm: None,
                        error,
                    };
                    ((order, seed, rank), r)
                };
                let out: Vec<_> = ranks
                    .iter()
                    .map(|&m| match &run {
                        Ok((pc, _)) if m > pc.rank() => {
                            row(m, Err(pivchol::Error::RankExceeded { rank: m, dim: pc.rank() }))
                        }
                        Ok((pc, lk)) => row(m, metrics_at(pc, lk, &latent, &y, m, coefficients)),
                        Err(e) => row(m, Err(e.clone())),
                    })
                    .collect();
                out
            })
            .collect();
        keyed.extend(rows);
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rows: Vec<RegressionRow> = keyed.into_iter().map(|(_, r)| r).collect();
    let norms = normalize(&mut rows);
    Ok((Outcome { rows, notes }, norms))
}

fn normalize(rows: &mut [RegressionRow]) -> Vec<Normalization> {
    let reference: Vec<&RegressionRow> = rows.iter().filter(|r| r.strategy == "random" && r.rank == 1).collect();
    let pick = |f: fn(&RegressionRow) -> Option<f64>, metric: &str| {
        let vals: Vec<f64> = reference.iter().filter_map(|r| f(r)).collect();
        let m = median(&vals).abs();
        if m.is_finite() && m > 0.0 {
            Normalization { metric: metric.into(), divisor: m, source: "median random rank 1".into() }
        } else {
            Normalization { metric: metric.into(), divisor: 1.0, source: "unnormalized".into() }
        }
    };
    let ns = [pick(|r| r.sse, "sse"), pick(|r| r.trace, "trace"), pick(|r| r.nlml, "nlml")];
    for r in rows.iter_mut() {
        r.sse_norm = r.sse.map(|v| v / ns[0].divisor);
        r.trace_norm = r.trace.map(|v| v / ns[1].divisor);
        r.nlml_norm = r.nlml.map(|v| v / ns[2].divisor);
    }
    ns.to_vec()
}

pub fn regression_plots(rows: &[RegressionRow]) -> Vec<(&'static str, Plot)> {
    let name = rows.first().map(|r| r.dataset.clone()).unwrap_or_default();
    let metrics: [(&'static str, fn(&RegressionRow) -> Option<f64>); 3] =
        [("sse", |r| r.sse_norm), ("trace", |r| r.trace_norm), ("nlml", |r| r.nlml_norm)];
    metrics
        .into_iter()
        .map(|(metric, f)| {
            let mut series: Vec<Series> = Vec::new();
            for r in rows {
                if !series.iter().any(|s| s.name == r.strategy) {
                    series.push(Series { name: r.strategy.clone(), points: Vec::new() });
                }
            }
            for s in series.iter_mut() {
                let mut ranks: Vec<usize> = rows.iter().filter(|r| r.strategy == s.name).map(|r| r.rank).collect();
                ranks.sort_unstable();
                ranks.dedup();
                for rank in ranks {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.strategy == s.name && r.rank == rank)
                        .map(|r| f(r).unwrap_or(f64::NAN))
                        .collect();
                    s.points.extend(band(&vals, rank as f64));
                }
            }
            let plot = Plot {
                title: format!("{name}: {metric}"),
                x_label: "rank".into(),
                y_label: format!("normalized {metric} (median, 5-95%)"),
                log2_x: false,
                series,
                hlines: Vec::new(),
            };
            (metric, plot)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Trace bounds

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBoundCsvRow {
    pub dataset: String,
    pub index: usize,
    pub m: f64,
    pub v: f64,
    pub s: f64,
    pub tau: f64,
    pub lower: f64,
    pub upper: f64,
    pub violated: bool,
    pub error: String,
}

/// Relative slack for the bound check.
pub const BOUND_SLACK: f64 = 1e-12;

/// Row moments and trace-reduction bounds of the latent kernel matrix.
/// An assumption violation becomes a single counted row.
pub fn run_trace_bounds(cfg: &ExperimentConfig, ds: &NamedDataset) -> Result<(Vec<TraceBoundCsvRow>, usize)> {
    let kernel = cfg.kernel(ds.data.dim())?;
    let op = GramOperator::new(ds.data.clone(), kernel, GramMode::Latent)?;
    let rows = match trace_bounds(&op) {
        Ok(rows) => rows
            .into_iter()
            .map(|r| TraceBoundCsvRow {
                dataset: ds.name.clone(),
                index: r.index,
                m: r.m,
                v: r.v,
                s: r.s,
                tau: r.tau,
                lower: r.lower,
                upper: r.upper,
                violated: r.violates(BOUND_SLACK),
                error: String::new(),
            })
            .collect(),
        Err(e @ pivchol::Error::AssumptionViolated { i, .. }) => vec![TraceBoundCsvRow {
            dataset: ds.name.clone(),
            index: i,
            m: f64::NAN,
            v: f64::NAN,
            s: f64::NAN,
            tau: f64::NAN,
            lower: f64::NAN,
            upper: f64::NAN,
            violated: true,
            error: e.to_string(),
        }],
        Err(e) => return Err(e.into()),
    };
    let violations = rows.iter().filter(|r| r.violated).count();
    Ok((rows, violations))
}

// ---------------------------------------------------------------------------
// Output

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(BenchError::from)).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes `precond_<name>.csv` and `precond_<name>.svg`.
pub fn write_precond_outputs(out: &Path, name: &str, rows: &[PrecondRow]) -> Result<Vec<PathBuf>> {
    let csv = out.join(format!("precond_{name}.csv"));
    let svg = out.join(format!("precond_{name}.svg"));
    write_csv(&csv, rows)?;
    write_text(&svg, &precond_plot(rows).render())?;
    Ok(vec![csv, svg])
}

/// Writes the metrics CSV, the normalization divisors and one SVG per metric.
pub fn write_regression_outputs(
    out: &Path,
    name: &str,
    rows: &[RegressionRow],
    norms: &[Normalization],
) -> Result<Vec<PathBuf>> {
    let mut paths = vec![out.join(format!("regression_{name}.csv")), out.join(format!("regression_{name}_normalization.csv"))];
    write_csv(&paths[0], rows)?;
    write_csv(&paths[1], norms)?;
    for (metric, plot) in regression_plots(rows) {
        let p = out.join(format!("regression_{name}_{metric}.svg"));
        write_text(&p, &plot.render())?;
        paths.push(p);
    }
    Ok(paths)
}

pub fn write_trace_bounds_outputs(out: &Path, name: &str, rows: &[TraceBoundCsvRow]) -> Result<PathBuf> {
    let p = out.join(format!("trace_bounds_{name}.csv"));
    write_csv(&p, rows)?;
    Ok(p)
}
