//! `mcmpl`: fit clustered datasets, run simulation studies and trace
//! profile and modified profile log-likelihoods.

mod fit;
mod output;
mod trace;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mcmpl::io::DatasetKind;
use mcmpl::models::binary::{Link, Mechanism};
use mcmpl::mpl::Method;
use mcmpl::sim::{parse_config, run_experiment};

#[derive(Debug, Parser)]
#[command(name = "mcmpl", version, about = "Monte Carlo modified profile likelihood for clustered data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a dataset file.
    Fit(FitArgs),
    /// Run a simulation experiment described by a config file.
    Simulate(SimulateArgs),
    /// Relative profile and MCMPL log-likelihoods of one parameter over a grid.
    Trace(TraceArgs),
}

/// Model selection shared by `fit` and `trace`.
#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// binary, weibull or ar1.
    #[arg(long)]
    model: Option<DatasetKind>,
    /// Link of the binary model: logit or probit.
    #[arg(long, default_value = "logit")]
    link: Link,
    /// Missingness mechanism of the binary model: mcar or mnar.
    #[arg(long, default_value = "mcar")]
    mechanism: Mechanism,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated methods: profile, mpl-exact, mcmpl.
    #[arg(long, value_delimiter = ',', default_value = "profile,mcmpl")]
    method: Vec<Method>,
    #[arg(long)]
    data: PathBuf,
    /// Monte Carlo replicates R.
    #[arg(long, default_value_t = mcmpl::mpl::MonteCarloConfig::DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value_t = mcmpl::DEFAULT_SEED)]
    seed: u64,
    /// Confidence level of the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Results file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all available cores when unset.
    #[arg(long, env = "MCMPL_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Dataset file (requires --model).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    data: Option<PathBuf>,
    /// Experiment config; the first simulated dataset is traced.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter name, e.g. rho, xi or beta1.
    #[arg(long)]
    param: String,
    /// lo:hi:step
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    /// Monte Carlo replicates R (default: the config's R, else 500).
    #[arg(long)]
    replicates: Option<usize>,
    /// Seed of the replicates (default: the config's seed, else the built-in seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit(args) => fit::run(&args),
        Command::Simulate(args) => simulate(&args).map(|()| fit::Status::Clean),
        Command::Trace(args) => trace::run(&args).map(|()| fit::Status::Clean),
    };
    match result {
        Ok(fit::Status::Clean) => ExitCode::SUCCESS,
        Ok(fit::Status::Flagged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let spec = parse_config(&text).with_context(|| format!("in {}", args.config.display()))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        pool = pool.num_threads(n);
    }
    let result = pool.build()?.install(|| run_experiment(&spec))?;
    output::write(args.out.as_deref(), &result.to_csv())
}
