use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pivchol::{container, decompose, LowRankTriangular, Target};
use pivchol_bench::config::{regression_ranks, split_list, Defaults};
use pivchol_bench::experiment::{
    load_dataset, run_precond_experiment, run_regression_experiment, run_trace_bounds, sanitize,
    write_precond_outputs, write_regression_outputs, write_trace_bounds_outputs,
};
use pivchol_bench::{synth, BenchError, ExperimentConfig, Result, Settings};

#[derive(Parser)]
#[command(name = "pivchol", version, about = "Pivoted Cholesky selection strategies: decompositions and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize one dataset and write the factor and preconditioner to a binary file.
    Decompose(Flags),
    /// Iterations of preconditioned CG per strategy, rank and seed.
    PrecondBench(Flags),
    /// SSE, remaining trace and NLML bound per strategy, rank and seed.
    GpBench(Flags),
    /// Row moments and trace-reduction bounds of the kernel matrix.
    TraceBounds(Flags),
    /// Write a synthetic dataset as CSV.
    Synth(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Config file of `key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV; the last column is the target unless --target-col is given.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target column, by 0-based index or header name.
    #[arg(long)]
    target_col: Option<String>,
    /// Synthetic generator, e.g. `clusters(5,1000,2,0.15)`, `uniform(500,2)`, `gp-sample(2000,2,1,0.1,0.01)`.
    #[arg(long)]
    synth: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    /// One value per input dimension, or a single value for all of them.
    #[arg(long, value_delimiter = ',')]
    lengthscale: Vec<f64>,
    #[arg(long)]
    noise: Option<f64>,
    /// Comma-separated: var, pcov, wpcov, me, mi, aopt, random.
    #[arg(long)]
    strategies: Option<String>,
    #[arg(long, value_delimiter = ',')]
    ranks: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Rows kept after shuffling (default 7000).
    #[arg(long)]
    cap: Option<usize>,
    /// Relative residual tolerance for CG (default 1e-4).
    #[arg(long)]
    tol: Option<f64>,
    /// Correlation threshold for the MI neighbourhoods (default 0.5).
    #[arg(long)]
    mi_eps: Option<f64>,
    /// Use N/2 and 1/sigma^2 as the complexity and penalty coefficients.
    #[arg(long)]
    paper_literal_coefficients: bool,
    /// Output directory (a .csv path for `synth`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for ingestion shuffling and synthetic generation.
    #[arg(long)]
    data_seed: Option<u64>,
}

impl Flags {
    fn settings(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        let flags = Settings {
            data: self.data.clone(),
            target_col: self.target_col.clone(),
            synth: self.synth.clone(),
            theta: self.theta,
            lengthscale: nonempty(&self.lengthscale),
            noise: self.noise,
            strategies: self.strategies.as_deref().map(split_list),
            ranks: nonempty(&self.ranks),
            seeds: nonempty(&self.seeds),
            cap: self.cap,
            tol: self.tol,
            mi_eps: self.mi_eps,
            paper_literal_coefficients: self.paper_literal_coefficients.then_some(true),
            out: self.out.clone(),
            data_seed: self.data_seed,
        };
        Ok(file.overlay(flags))
    }

    fn resolve(&self, defaults: &Defaults) -> Result<ExperimentConfig> {
        ExperimentConfig::resolve(self.settings()?, defaults)
    }
}

fn nonempty<T: Clone>(v: &[T]) -> Option<Vec<T>> {
    if v.is_empty() {
        None
    } else {
        Some(v.to_vec())
    }
}

fn print_notes(notes: &[String]) {
    for n in notes {
        eprintln!("note: {n}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PrecondBench(f) => {
            let cfg = f.resolve(&Defaults::PRECOND)?;
            let ds = load_dataset(&cfg)?;
            if ds.dropped > 0 {
                eprintln!("dropped {} rows with missing values", ds.dropped);
            }
            let out = run_precond_experiment(&cfg, &ds)?;
            print_notes(&out.notes);
            let failed = out.rows.iter().filter(|r| !r.error.is_empty()).count();
            for p in write_precond_outputs(&cfg.out, &ds.name, &out.rows)? {
                println!("wrote {}", p.display());
            }
            println!("{} cells, {} failed", out.rows.len(), failed);
        }
        Command::GpBench(f) => {
            let cfg = f.resolve(&Defaults::REGRESSION)?;
            let ds = load_dataset(&cfg)?;
            if ds.dropped > 0 {
                eprintln!("dropped {} rows with missing values", ds.dropped);
            }
            let (out, norms) = run_regression_experiment(&cfg, &ds)?;
            print_notes(&out.notes);
            for n in &norms {
                println!("{} divisor {} ({})", n.metric, n.divisor, n.source);
            }
            for p in write_regression_outputs(&cfg.out, &ds.name, &out.rows, &norms)? {
                println!("wrote {}", p.display());
            }
        }
        Command::TraceBounds(f) => {
            let cfg = f.resolve(&Defaults::PRECOND)?;
            let ds = load_dataset(&cfg)?;
            let (rows, violations) = run_trace_bounds(&cfg, &ds)?;
            let p = write_trace_bounds_outputs(&cfg.out, &ds.name, &rows)?;
            println!("wrote {}", p.display());
            println!("violations: {violations}");
        }
        Command::Decompose(f) => {
            let cfg = f.resolve(&Defaults::PRECOND)?;
            let ds = load_dataset(&cfg)?;
            let n = ds.data.len();
            let strategy = cfg.strategies[0];
            let strategy = match strategy {
                pivchol::Strategy::Random { .. } => pivchol::Strategy::Random { seed: cfg.seeds[0] },
                s => s,
            };
            let rank = cfg.ranks.as_ref().map_or_else(|| *regression_ranks(n).last().unwrap(), |r| r[0]);
            if rank > n {
                return Err(BenchError::Config(format!("rank {rank} exceeds N = {n}")));
            }
            let op = pivchol::GramOperator::new(ds.data.clone(), cfg.kernel(ds.data.dim())?, pivchol::GramMode::Noisy)?;
            let y: Vec<f64> = ds.data.targets().iter().map(|v| v - op.config().prior_mean).collect();
            let pc = decompose(&op, &y, strategy, Target::Rank(rank))?;
            let pre = LowRankTriangular::build(&pc);
            let path = cfg.out.join(format!("{}_{}_{}.pchl", ds.name, strategy.name(), rank));
            std::fs::create_dir_all(&cfg.out)?;
            container::write_preconditioner(&pc, &pre, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            println!("strategy {strategy}, rank {} of {rank} requested, N = {n}", pc.rank());
            println!("remaining trace {:e}", pc.remaining_trace());
            println!("wrote {}", path.display());
        }
        Command::Synth(f) => {
            let s = f.settings()?;
            let spec: synth::SynthSpec =
                s.synth.as_deref().ok_or_else(|| BenchError::Config("synth needs --synth".into()))?.parse()?;
            let data = synth::synth(&spec, s.data_seed.unwrap_or(0))?;
            let out = s.out.unwrap_or_else(|| PathBuf::from("."));
            let path = if out.extension().is_some_and(|e| e == "csv") {
                out
            } else {
                out.join(format!("{}.csv", sanitize(&spec.to_string())))
            };
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = csv::Writer::from_path(&path)?;
            let d = data.dim();
            let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
            header.push("y".into());
            w.write_record(&header)?;
            for i in 0..data.len() {
                let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
                rec.push(data.targets()[i].to_string());
                w.write_record(&rec)?;
            }
            w.flush()?;
            println!("wrote {} ({} rows)", path.display(), data.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
