//! `cfpred`: counterfactual prediction from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use cfpred::error::{Error, Result};
use cfpred::parallel::{configure_threads, Parallelism};
use cfpred::simulate::{Exp1Noise, Exp1Options, Exp1Treatment};
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::SimulateArgs;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "cfpred", version, about = "Counterfactual prediction models and their evaluation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TreatmentArg {
    Increasing,
    Decreasing,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    VarianceX,
    SdX,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce a simulation experiment and write its table as CSV and JSON.
    Simulate {
        /// 1 (continuous outcome, model ranking) or 2 (binary outcome, nuisance scenarios).
        #[arg(long)]
        experiment: u8,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Experiment 1 only: sign of the treatment model.
        #[arg(long, value_enum, default_value = "increasing")]
        exp1_treatment: TreatmentArg,
        /// Experiment 1 only: whether X is the noise variance or its SD.
        #[arg(long, value_enum, default_value = "variance-x")]
        exp1_noise: NoiseArg,
    },
    /// Estimate counterfactual performance of a model as set out in a config.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Results JSON (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the configured model on the training split and save it.
    Tailor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select among candidate models by counterfactual cross-validation.
    Cv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        if !configure_threads(t) {
            log::warn!("--threads ignored: thread pool unavailable or already initialised");
        }
    }
    let par = if cli.sequential { Parallelism::Sequential } else { Parallelism::Parallel };
    match cli.command {
        Command::Simulate { experiment, reps, n, seed, out, exp1_treatment, exp1_noise } => {
            let exp1 = Exp1Options {
                treatment: match exp1_treatment {
                    TreatmentArg::Increasing => Exp1Treatment::Increasing,
                    TreatmentArg::Decreasing => Exp1Treatment::Decreasing,
                },
                noise: match exp1_noise {
                    NoiseArg::VarianceX => Exp1Noise::VarianceX,
                    NoiseArg::SdX => Exp1Noise::SdX,
                },
            };
            commands::simulate(&SimulateArgs { experiment, reps, n, seed, out, exp1 }, par)
        }
        Command::Evaluate { config, out } => commands::evaluate(&RunConfig::load(&config)?, out.as_deref(), par),
        Command::Tailor { config, out } => commands::tailor(&RunConfig::load(&config)?, out.as_deref()),
        Command::Cv { config, out } => commands::cv(&RunConfig::load(&config)?, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error code=USAGE");
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error code={}", e.code());
            eprintln!("{e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
