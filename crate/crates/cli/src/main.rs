//! `ucate`: generate benchmark data, run rejection-policy sweeps, report tables.

mod config;
mod error;
mod generate;
mod report;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "ucate",
    version,
    about = "Uncertainty-aware CATE estimation and recommendation withholding"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write every replication's train/test CSVs and a manifest.
    Generate(CommonArgs),
    /// Train models per replication and sweep the rejection policies.
    Run(RunArgs),
    /// Summarize a run directory into tables and SVG plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dataset kind: toy1d, cemnist, ihdp or csv.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Output directory.
    #[arg(short, long, default_value = "ucate-out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Estimator; repeat for several.
    #[arg(long = "model")]
    models: Vec<String>,
    /// Rejection policy; repeat for several.
    #[arg(long = "policy")]
    policies: Vec<String>,
    /// Rejection rates for per-unit decision files, comma separated.
    #[arg(long, value_delimiter = ',')]
    r_rej: Option<Vec<f64>>,
    /// Sweep grid: a point count (e.g. 21) or comma-separated rates.
    #[arg(long)]
    grid: Option<String>,
    /// Replications trained in parallel.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding results.csv.
    #[arg(short, long, default_value = "ucate-out")]
    out: PathBuf,
    /// Rates for the table, comma separated; defaults to the run's r_rej.
    #[arg(long, value_delimiter = ',')]
    r_rej: Option<Vec<f64>>,
}

/// `"21"` is 21 evenly spaced points on `[0, 1]`; anything else is a list.
fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    if let Ok(n) = s.trim().parse::<usize>() {
        if n < 2 {
            return Err(CliError::Usage(format!(
                "grid needs at least 2 points, got {n}"
            )));
        }
        return Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad grid value {v:?}")))
        })
        .collect()
}

fn load(common: &CommonArgs, extra: Overrides) -> CliResult<config::LoadedConfig> {
    let overrides = Overrides {
        dataset: common.dataset.clone(),
        seed: common.seed,
        replications: common.replications,
        ..extra
    };
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(args) => {
            let loaded = load(&args, Overrides::default())?;
            let manifest = generate::generate(&loaded.config, &args.out)?;
            println!(
                "generated {} replication(s) of {} in {}",
                manifest.replications.len(),
                manifest.dataset,
                args.out.join(generate::DATA_DIR).display()
            );
        }
        Command::Run(args) => {
            let extra = Overrides {
                models: args.models,
                policies: args.policies,
                r_rej: args.r_rej,
                grid: args.grid.as_deref().map(parse_grid).transpose()?,
                workers: args.workers,
                ..Overrides::default()
            };
            let loaded = load(&args.common, extra)?;
            let summary = run::run(&loaded, &args.common.out)?;
            println!(
                "completed {} replication(s), {} already done, {} failed; results in {}",
                summary.completed.len(),
                summary.resumed.len(),
                summary.failed.len(),
                args.common.out.join(run::RESULTS).display()
            );
        }
        Command::Report(args) => {
            let rep = report::report(&args.out, args.r_rej)?;
            print!("{}", rep.table);
            for f in rep.files {
                log::info!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string());
            eprint!("{}", e.render());
            eprintln!("{}", err.machine_line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
