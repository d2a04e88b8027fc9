//! `robust-scatter` command-line front end.

mod commands;
mod io;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use robust_scatter::spec::KeyValues;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "robust-scatter",
    version,
    about = "High-breakdown estimation of location, scatter and shape"
)]
struct Cli {
    /// Seed for every random stream (overrides a `seed` config key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving outputs and the manifest.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; ROBUST_SCATTER_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// File of `key=value` settings; `key=value` arguments override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit location and scatter to a CSV of observations.
    Fit {
        data: PathBuf,
        #[arg(value_name = "KEY=VALUE")]
        settings: Vec<String>,
    },
    /// Tune an estimator to a target (or its maximum) asymptotic efficiency.
    Tune {
        #[arg(value_name = "KEY=VALUE")]
        settings: Vec<String>,
    },
    /// Asymptotic efficiency over a grid of tuning values.
    EffSweep {
        #[arg(value_name = "KEY=VALUE")]
        settings: Vec<String>,
    },
    /// Monte Carlo experiment.
    Simulate {
        #[arg(value_name = "KEY=VALUE")]
        settings: Vec<String>,
    },
    /// Minimum-variance allocation and holdout backtest.
    Portfolio {
        returns: PathBuf,
        #[arg(value_name = "KEY=VALUE")]
        settings: Vec<String>,
    },
    /// Influence functions over a range of distances.
    Influence {
        #[arg(value_name = "KEY=VALUE")]
        settings: Vec<String>,
    },
}

fn threads(flag: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var("ROBUST_SCATTER_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow!("ROBUST_SCATTER_THREADS=`{v}` is not a thread count"))?;
        return Ok(n);
    }
    Ok(flag.unwrap_or(0))
}

fn settings(config: Option<&PathBuf>, args: &[String]) -> Result<KeyValues> {
    let mut kv = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read {}", p.display()))?;
            KeyValues::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => KeyValues::default(),
    };
    kv.overlay(&KeyValues::parse(&args.join("\n")).context("in command-line settings")?);
    Ok(kv)
}

fn run(cli: Cli) -> Result<commands::Status> {
    let n = threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
    let threads = pool.current_num_threads();
    let ctx = commands::Context {
        out: cli.out.clone(),
        seed: cli.seed,
        threads,
    };
    pool.install(|| match &cli.command {
        Command::Fit { data, settings: s } => {
            commands::fit(&ctx, data, settings(cli.config.as_ref(), s)?)
        }
        Command::Tune { settings: s } => commands::tune(&ctx, settings(cli.config.as_ref(), s)?),
        Command::EffSweep { settings: s } => {
            commands::eff_sweep(&ctx, settings(cli.config.as_ref(), s)?)
        }
        Command::Simulate { settings: s } => {
            commands::simulate(&ctx, settings(cli.config.as_ref(), s)?)
        }
        Command::Portfolio {
            returns,
            settings: s,
        } => commands::portfolio(&ctx, returns, settings(cli.config.as_ref(), s)?),
        Command::Influence { settings: s } => {
            commands::influence(&ctx, settings(cli.config.as_ref(), s)?)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => {
            eprintln!("warning: the fit did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
