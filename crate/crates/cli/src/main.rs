//! `clustfolio`: embed companies with t-SNE, group them with spectral
//! clustering and backtest grouped tangency portfolios.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, UsageError};

#[derive(Parser, Debug)]
#[command(name = "clustfolio", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Flags override the config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// Config file with `key = value` lines; `#` starts a comment.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Price CSV: a `date` column followed by one column per ticker.
    #[arg(long, global = true, value_name = "FILE")]
    prices: Option<String>,
    /// Metadata CSV with `ticker,industry_code` columns.
    #[arg(long, global = true, value_name = "FILE")]
    meta: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Comma separated perplexities.
    #[arg(long, global = true, value_name = "LIST")]
    perplexity: Option<String>,
    /// Group counts, e.g. `2-20` or `10,16`.
    #[arg(long, global = true, value_name = "LIST")]
    groups: Option<String>,
    /// Master seed; falls back to CLUSTFOLIO_SEED.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<String>,
    /// Comma separated strategies: TS, RND, MW_full, N_full, TR2, TR4.
    #[arg(long, global = true, value_name = "LIST")]
    strategies: Option<String>,
    /// Drop tickers with missing prices instead of failing.
    #[arg(long, global = true)]
    drop_incomplete: bool,
    /// Any other setting as `key=value`, e.g. `--set max_iter=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    settings: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed the return series at each perplexity and plot the maps.
    Embed {
        /// Color points by a grouping CSV.
        #[arg(long, value_name = "FILE")]
        color_grouping: Option<PathBuf>,
        /// Color points by the leading digits of the industry code.
        #[arg(long, value_name = "DIGITS")]
        color_industry: Option<usize>,
    },
    /// Spectral clustering of an embedding for each group count.
    Cluster {
        /// Embedding CSV; computed at the first perplexity when absent.
        #[arg(long, value_name = "FILE")]
        embedding: Option<PathBuf>,
    },
    /// Run the decision engine and benchmarks.
    Backtest,
    /// Render the summary table and chart from a summary CSV.
    Report {
        /// Summary CSV; defaults to `<out>/summary.csv`.
        #[arg(long, value_name = "FILE")]
        summary: Option<PathBuf>,
    },
}

fn build_config(common: &Common) -> Result<RunConfig, UsageError> {
    let mut config = RunConfig::default();
    if let Some(path) = &common.config {
        config.apply_file(path)?;
    }
    let flags = [
        ("prices", &common.prices),
        ("meta", &common.meta),
        ("out", &common.out),
        ("perplexity", &common.perplexity),
        ("groups", &common.groups),
        ("seed", &common.seed),
        ("jobs", &common.jobs),
        ("strategies", &common.strategies),
    ];
    for setting in &common.settings {
        let (key, value) = setting
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got `{setting}`")))?;
        config.set(key, value)?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, v)?;
        }
    }
    if common.drop_incomplete {
        config.drop_incomplete = true;
    }
    config.seed_fallback(std::env::var("CLUSTFOLIO_SEED").ok().as_deref())?;
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli, config: &RunConfig) -> anyhow::Result<()> {
    match &cli.command {
        Command::Embed {
            color_grouping,
            color_industry,
        } => commands::embed(config, color_grouping.as_deref(), *color_industry),
        Command::Cluster { embedding } => commands::cluster(config, embedding.as_deref()),
        Command::Backtest => commands::backtest(config),
        Command::Report { summary } => commands::report(config, summary.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let config = match build_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(jobs) = config.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
