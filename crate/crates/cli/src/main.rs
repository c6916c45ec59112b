use clap::{Args, Parser, Subcommand};
use nmr_qrc::commands;
use nmr_qrc::config::{parse_config, ExperimentConfig};
use nmr_qrc::error::{exit, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nmr-qrc",
    version,
    about = "Nuclear-spin quantum reservoir experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate probe traces for every binary input stream.
    Simulate(Common),
    /// Train and evaluate readouts for the configured tasks.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Task name (e.g. recognition2, parity13, xor2, multiply) or family
        /// (recognition, parity).
        #[arg(long)]
        task: Option<String>,
        /// Run the full 13-task battery.
        #[arg(long)]
        all: bool,
        /// Comma-separated sample counts, e.g. 2,3,4,6,11.
        #[arg(long, value_delimiter = ',')]
        sweep_m: Option<Vec<usize>>,
    },
    /// Summarize metrics files and write plot data.
    Report {
        /// Metrics CSV files.
        metrics: Vec<PathBuf>,
        /// Output directory for plot data.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; all keys optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path)
            .map_err(|e| CliError::io(path, e))?
            .map_err(|e| CliError::Validation(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = load(&common)?;
            let out = commands::simulate(&cfg)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} rows to {}", out.rows, out.traces.display());
            println!("config echo: {}", out.config.display());
        }
        Command::Benchmark {
            common,
            task,
            all,
            sweep_m,
        } => {
            let mut cfg = load(&common)?;
            if let Some(task) = task {
                cfg.task = task;
                cfg.all = false;
            }
            if all {
                cfg.all = true;
            }
            if let Some(ms) = sweep_m {
                cfg.sweep_m = ms;
            }
            let out = commands::benchmark(&cfg)?;
            println!("{:<20} {:>4} {:>14} {:>8}", "task", "M", "mse", "errors");
            for r in &out.rows {
                let errors = r
                    .digitized_errors
                    .map(|e| e.to_string())
                    .unwrap_or_else(|| "-".into());
                println!("{:<20} {:>4} {:>14.6e} {:>8}", r.task, r.m, r.mse, errors);
            }
            println!("metrics: {}", out.metrics.display());
            println!("predictions: {}", out.predictions.display());
            println!("config echo: {}", out.config.display());
        }
        Command::Report { metrics, out } => match commands::report(&metrics, &out) {
            Ok(rep) => {
                print!("{}", rep.table);
                for f in &rep.files {
                    println!("wrote {}", f.display());
                }
            }
            Err(CliError::NoData) => {
                println!("no data");
                return Err(CliError::NoData);
            }
            Err(e) => return Err(e),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::VALIDATION
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::NoData) => ExitCode::from(exit::VALIDATION as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
