mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Run;
use config::Config;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "seqcv",
    version,
    about = "Sequential cross-validated kernel smoothing and change-point monitoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Changes speed, never output.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct WithInput {
    #[command(flatten)]
    common: Common,
    /// CSV with a header row; the `y` column (or the only column) is used.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Leave-one-out predictions and smoother path at a fixed bandwidth.
    Smooth(WithInput),
    /// Cross-validation surface and bandwidth path.
    Cv(WithInput),
    /// Limit objective curve and argmin diagnostics.
    Limit(Common),
    /// Control-limit calibration (or ARL at a fixed limit).
    Calibrate(Common),
    /// Simulate one series, select bandwidths and run the detector.
    Monitor(Common),
    /// Simulate series and optionally a delay table.
    Simulate(Common),
}

fn setup(common: &Common) -> Result<Run, CliError> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let config = Config::load(&common.config)?;
    let seed = common.seed.unwrap_or(config.seed);
    let out = common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Run { config, seed, out })
}

fn dispatch(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Smooth(a) => commands::smooth(&setup(&a.common)?, a.input.as_deref()),
        Command::Cv(a) => commands::cv(&setup(&a.common)?, a.input.as_deref()),
        Command::Limit(c) => commands::limit(&setup(&c)?),
        Command::Calibrate(c) => commands::calibrate(&setup(&c)?),
        Command::Monitor(c) => commands::monitor(&setup(&c)?),
        Command::Simulate(c) => commands::simulate(&setup(&c)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::Config(format!("usage: {first}")).render());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
