//! Command line front end for least-squares Shapley attribution.
//!
//! Three subcommands: `attribute` ingests train/test CSVs and emits a JSON
//! report (plus an optional per-batch history CSV), `gen` writes synthetic
//! train/test CSVs, and `bench` compares the sampling strategies against a
//! ground truth. Exit codes: 0 on success (including a run that stopped at
//! the budget without reaching the tolerance), 2 for bad input or flags,
//! 3 for numerical failures such as rank-deficient features.

mod bench;
mod csvio;
mod fsio;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lsq_shapley::{
    attribute, Error as CoreError, ReductionPath, RunConfig, SamplerConfig, SamplerKind, SynthSpec,
};

#[derive(Parser)]
#[command(
    name = "lsq-shapley",
    version,
    about = "Shapley attribution of out-of-sample R^2 across the features of a least-squares fit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute out-of-sample R^2 across features from train/test CSVs.
    Attribute(AttributeArgs),
    /// Compare sampling methods on a synthetic problem.
    Bench(BenchArgs),
    /// Generate a synthetic train/test pair as CSV files.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SamplerChoice {
    /// Independent uniformly random permutations.
    Mc,
    /// Permutations read off scrambled Sobol' points by argsort.
    ArgsortQmc,
}

impl From<SamplerChoice> for SamplerKind {
    fn from(choice: SamplerChoice) -> Self {
        match choice {
            SamplerChoice::Mc => SamplerKind::MonteCarlo,
            SamplerChoice::ArgsortQmc => SamplerKind::ArgsortQmc,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ReductionChoice {
    /// Householder QR of the data matrix. The robust default.
    Qr,
    /// Blockwise Gram accumulation plus Cholesky. Fastest on tall data.
    Cholesky,
}

impl From<ReductionChoice> for ReductionPath {
    fn from(choice: ReductionChoice) -> Self {
        match choice {
            ReductionChoice::Qr => ReductionPath::Qr,
            ReductionChoice::Cholesky => ReductionPath::Cholesky,
        }
    }
}

#[derive(Args)]
struct AttributeArgs {
    /// Training CSV: a header row, feature columns, one target column.
    #[arg(long)]
    train: PathBuf,
    /// Test CSV with the same columns as the training file.
    #[arg(long)]
    test: PathBuf,
    /// Target column name; defaults to the last column.
    #[arg(long)]
    target: Option<String>,
    /// Total permutation budget K.
    #[arg(long, default_value_t = 8192)]
    max_perms: usize,
    /// Permutations per batch B; K must be a whole number of batches.
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    /// Stop early once the overall error estimate falls below this.
    #[arg(long, default_value_t = 1e-2)]
    tolerance: f64,
    /// Quantile level for the error estimates, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.95)]
    quantile: f64,
    /// Normal draws per risk estimate.
    #[arg(long, default_value_t = 1000)]
    risk_draws: usize,
    /// Permutation sampler.
    #[arg(long, value_enum, default_value_t = SamplerChoice::ArgsortQmc)]
    sampler: SamplerChoice,
    /// Pair every permutation with its reversal and average the two lifts.
    #[arg(long)]
    antithetical: bool,
    /// Ridge penalty lambda; omit for plain least squares.
    #[arg(long)]
    ridge: Option<f64>,
    /// Skip centering by the training means (drops the intercept).
    #[arg(long)]
    no_center: bool,
    /// How the data is reduced to triangular form.
    #[arg(long, value_enum, default_value_t = ReductionChoice::Qr)]
    reduction: ReductionChoice,
    /// Seed for permutation sampling and risk draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path, or - for stdout.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Optional per-batch convergence history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark scale.
    #[arg(long, value_enum)]
    preset: bench::Preset,
    /// Seeded repetitions per method.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Directory for the history CSVs and the summary.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Number of features.
    #[arg(long, default_value_t = 20)]
    features: usize,
    /// Training rows.
    #[arg(long, default_value_t = 10000)]
    train_rows: usize,
    /// Test rows.
    #[arg(long, default_value_t = 10000)]
    test_rows: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory that receives train.csv and test.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Attribute(args) => run_attribute(args),
        Command::Bench(args) => bench::run(&bench::Settings {
            preset: args.preset,
            seeds: args.seeds,
            out_dir: args.out,
        }),
        Command::Gen(args) => run_gen(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// Numerical failures exit with 3, everything else (I/O, parsing, wrong
/// flags, bad configuration) with 2.
fn classify(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::RankDeficient { .. }
            | CoreError::IllConditionedGram { .. }
            | CoreError::UndefinedMetric
            | CoreError::Numerical(_),
        ) => 3,
        _ => 2,
    }
}

fn run_attribute(args: AttributeArgs) -> Result<()> {
    let target = args.target.as_deref();
    let train = csvio::read_dataset(&args.train, target)?;
    let test = csvio::read_dataset(&args.test, target)?;
    if train.feature_names != test.feature_names || train.target_name != test.target_name {
        bail!(
            "{} and {} disagree on column names",
            args.train.display(),
            args.test.display()
        );
    }

    let p = train.data.n_features();
    let mut config = RunConfig::for_dimension(p);
    config.max_permutations = args.max_perms;
    config.batch_size = args.batch_size;
    config.tolerance = args.tolerance;
    config.quantile = args.quantile;
    config.risk_draws = args.risk_draws;
    config.sampler = SamplerConfig::new(args.sampler.into(), args.seed, args.antithetical, p);
    config.ridge_lambda = args.ridge;
    config.center = !args.no_center;
    config.reduction_path = args.reduction.into();
    config.seed = args.seed;

    let start = Instant::now();
    let result = attribute(&train.data, &test.data, &config)?;
    let wall_time_seconds = start.elapsed().as_secs_f64();

    if !result.converged {
        eprintln!(
            "warning: tolerance not reached: the error estimate {:.3e} is still above {:.3e} \
             after {} batches; reporting the estimate at the full budget",
            result.overall_error, config.tolerance, result.batches_used
        );
    }

    if let Some(history) = &args.history {
        csvio::write_history(history, &result.history)?;
    }

    let doc = report::ReportDocument::new(train.feature_names, &result, &config, wall_time_seconds);
    if report::write_report(&doc, &args.out)? {
        println!("{}", args.out.display());
    }
    Ok(())
}

fn run_gen(args: GenArgs) -> Result<()> {
    let spec = SynthSpec {
        p: args.features,
        n_train: args.train_rows,
        n_test: args.test_rows,
        seed: args.seed,
    };
    let (train, test, _) = lsq_shapley::gen_dataset(&spec)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let names: Vec<String> = (1..=args.features).map(|j| format!("x{j}")).collect();
    let train_path = args.out.join("train.csv");
    let test_path = args.out.join("test.csv");
    csvio::write_dataset(&train_path, &names, "y", &train)?;
    csvio::write_dataset(&test_path, &names, "y", &test)?;
    println!("{}", train_path.display());
    println!("{}", test_path.display());
    Ok(())
}
