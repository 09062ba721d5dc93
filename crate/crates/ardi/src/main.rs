use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ardi::config::RunConfig;
use ardi::data::MonthDate;
use ardi::error::Error;
use ardi::run::{cmd_evaluate, cmd_forecast, cmd_montecarlo, cmd_selftest};

#[derive(Parser)]
#[command(
    name = "ardi",
    about = "Diffusion-index forecasting with kernel-PCA factors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rolling pseudo-out-of-sample evaluation over every configured
    /// (target, horizon, method); writes report and forecast CSVs.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (0 = automatic).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One forecast per (target, horizon, method) using only data up to
    /// the given month.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        /// Forecast origin, e.g. 2019-12.
        #[arg(long)]
        asof: String,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Factor-consistency and eigenvector-concentration experiments.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the built-in property suites and print pass/fail lines.
    Selftest {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn configure_pool(jobs: usize) {
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn load_config(
    path: &std::path::Path,
    seed: Option<u64>,
    output: Option<PathBuf>,
) -> Result<RunConfig, Error> {
    let mut config = RunConfig::from_path(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(dir) = output {
        config.output_dir = dir;
    }
    Ok(config)
}

fn exit_code_for(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Evaluate {
            config,
            jobs,
            seed,
            output,
        } => {
            configure_pool(jobs);
            let config = match load_config(&config, seed, output) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code_for(&e);
                }
            };
            match cmd_evaluate(&config) {
                Ok(report) => {
                    println!("{}", report.to_text());
                    println!(
                        "report written to {}",
                        config.output_dir.join("report.csv").display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::Forecast {
            config,
            asof,
            jobs,
            seed,
            output,
        } => {
            configure_pool(jobs);
            let config = match load_config(&config, seed, output) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code_for(&e);
                }
            };
            let asof = match MonthDate::parse(&asof) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match cmd_forecast(&config, asof) {
                Ok(forecasts) => {
                    println!("target,method,horizon,forecast_date,forecast");
                    for f in &forecasts {
                        println!(
                            "{},{},{},{},{:.6}",
                            f.target, f.method, f.horizon, f.forecast_date, f.value
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::Montecarlo {
            config,
            jobs,
            seed,
            output,
        } => {
            configure_pool(jobs);
            let config = match load_config(&config, seed, output) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code_for(&e);
                }
            };
            match cmd_montecarlo(&config) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::Selftest { seed } => match cmd_selftest(seed) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
    }
}
