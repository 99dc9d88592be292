//! `pmop`: train, apply and evaluate ranking models over query-grouped
//! LETOR data, including the ordered-partition models with tie handling.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod model_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use commands::{cmd_eval, cmd_oracle, cmd_predict, cmd_train, OracleRequest, TrainOptions};
use model_file::LossName;
use pmop::Error;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Environment variable consulted for the default seed.
pub const SEED_ENV: &str = "PMOP_SEED";

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Numeric(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "pmop",
    version,
    about = "Learning to rank with ordered-partition models, tie-aware baselines and exact combinatorial checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model (and its feature pipeline) on a LETOR file.
    Train(TrainArgs),
    /// Rank every query in a data file with a trained model.
    Predict(PredictArgs),
    /// Mean ERR and NDCG@T of a model on a data file.
    Eval(EvalArgs),
    /// Exact combinatorial references: counts, enumerations, normalization.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training data in LETOR format.
    #[arg(long)]
    data: PathBuf,
    /// One of: pmop-fd, pmop-gibbs, pmop-mh, listmle, ranknet, ranksvm,
    /// rankreg, ties-rk, ties-d.
    #[arg(long)]
    loss: String,
    /// Output model file; the pipeline lands next to it as `<out>.pipeline`.
    #[arg(long)]
    out: PathBuf,
    /// Add correlation-selected second-order product features.
    #[arg(long)]
    second_order: bool,
    /// Absolute-correlation threshold for second-order selection.
    #[arg(long, default_value_t = 0.15)]
    corr_threshold: f64,
    /// Learning rate for the stochastic trainers (default 0.1).
    #[arg(long)]
    lr: Option<f64>,
    /// Iteration budget: L-BFGS iterations (default 100) or SGD epochs
    /// (default 1000).
    #[arg(long)]
    iters: Option<usize>,
    /// Relative-improvement stopping tolerance for L-BFGS.
    #[arg(long, default_value_t = 1e-5)]
    rel_tol: f64,
    /// L2 penalty on the weight vector.
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// gibbs or mh; only meaningful with the matching pmop-* loss.
    #[arg(long)]
    sampler: Option<String>,
    /// Chain steps before each contrastive-divergence sample.
    #[arg(long, default_value_t = 1)]
    cd_steps: usize,
    /// Contrastive-divergence samples per stage.
    #[arg(long, default_value_t = 1)]
    cd_samples: usize,
    /// Random seed; defaults to $PMOP_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for batch gradient evaluation (1 = bit-reproducible).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output file: one line per query, `qid<TAB>indices<TAB>scores`,
    /// best document first.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated NDCG truncations.
    #[arg(long, default_value = "1,5")]
    ndcg_at: String,
}

#[derive(Args)]
struct OracleArgs {
    /// Print the number of ordered partitions of an n-set.
    #[arg(long)]
    fubini: Option<u64>,
    /// Print every ordered partition of {0..n-1}, one per line.
    #[arg(long)]
    enumerate: Option<usize>,
    /// `N SEED`: brute-force probability sums for a random instance.
    #[arg(long, num_args = 2, value_names = ["N", "SEED"])]
    normalize_check: Option<Vec<u64>>,
}

fn default_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(42)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let loss: LossName = args
                .loss
                .parse()
                .map_err(|e: Error| CliError::new(EXIT_USAGE, e.to_string()))?;
            cmd_train(TrainOptions {
                data: args.data,
                loss,
                out: args.out,
                second_order: args.second_order,
                corr_threshold: args.corr_threshold,
                lr: args.lr,
                iters: args.iters,
                rel_tol: args.rel_tol,
                l2: args.l2,
                sampler: args.sampler,
                cd_steps: args.cd_steps,
                cd_samples: args.cd_samples,
                seed: args.seed.unwrap_or_else(default_seed),
                threads: args.threads,
            })
        }
        Command::Predict(args) => cmd_predict(&args.data, &args.model, &args.out),
        Command::Eval(args) => {
            let mut ts = Vec::new();
            for part in args.ndcg_at.split(',') {
                let t: usize = part
                    .trim()
                    .parse()
                    .ok()
                    .filter(|&t| t >= 1)
                    .ok_or_else(|| {
                        CliError::new(EXIT_USAGE, format!("bad NDCG truncation `{part}`"))
                    })?;
                ts.push(t);
            }
            cmd_eval(&args.data, &args.model, &ts)
        }
        Command::Oracle(args) => {
            let request = match (args.fubini, args.enumerate, args.normalize_check) {
                (Some(n), None, None) => OracleRequest::Fubini(n),
                (None, Some(n), None) => OracleRequest::Enumerate(n),
                (None, None, Some(pair)) => OracleRequest::NormalizeCheck {
                    n: pair[0] as usize,
                    seed: pair[1],
                },
                _ => {
                    return Err(CliError::new(
                        EXIT_USAGE,
                        "oracle needs exactly one of --fubini N, --enumerate N, --normalize-check N SEED",
                    ))
                }
            };
            cmd_oracle(request)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 2 for usage errors; this tool reserves 2
            // for data errors, so remap
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
