//! `obfnet`: preprocess, train, obfuscate, evaluate and sweep from the
//! command line. Every command is deterministic given its config and
//! input files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// A failure with its process exit code: 1 usage/config, 2 data,
/// 3 numeric.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<obfnet::Error> for CliError {
    fn from(err: obfnet::Error) -> Self {
        let code = match &err {
            obfnet::Error::InvalidConfig(_) | obfnet::Error::InvalidSpec(_) => 1,
            obfnet::Error::NonFinite(_) => 3,
            _ => 2,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::data(err.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "obfnet",
    version,
    about = "Adjustable-privacy obfuscation for tabular data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and encode a raw census CSV, then split train/test.
    Preprocess {
        /// Raw CSV in the 15-column census layout.
        #[arg(long)]
        input: PathBuf,
        /// Output directory (default: $OBF_WORKDIR or the current dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Skip the first line of the input.
        #[arg(long)]
        has_header: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the obfuscator on an encoded training CSV.
    Train {
        /// Encoded dataset from `preprocess`.
        #[arg(long)]
        data: PathBuf,
        /// Model output path (default: <workdir>/model.txt).
        #[arg(long)]
        model_out: Option<PathBuf>,
        /// Per-epoch curve CSV (default: <workdir>/history.csv).
        #[arg(long)]
        history_out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rewrite an encoded dataset through the trained obfuscator.
    Obfuscate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Noise multiplier (variance = k * nu).
        #[arg(long, allow_hyphen_values = true)]
        k: Option<f64>,
        /// Clamp value for the classifier head.
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        /// Disable the rest-head noise.
        #[arg(long)]
        no_f: bool,
        /// Disable the classifier-head clamp.
        #[arg(long)]
        no_g: bool,
        #[arg(long)]
        noise_seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one measurement protocol and append a result row.
    Eval {
        /// weak | strong | utility | baseline
        #[arg(long)]
        protocol: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
        /// Adversary's similar dataset (default: the training data).
        #[arg(long)]
        aux_data: Option<PathBuf>,
        /// original_test | obfuscated_test (utility protocol only).
        #[arg(long)]
        eval_mode: Option<String>,
        /// private | nonprivate (baseline protocol only).
        #[arg(long)]
        target: Option<String>,
        /// Result CSV path (default: <workdir>/results.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        k: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        #[arg(long)]
        noise_seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Sweep the privacy knobs, score the curve, write the AUC report.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
        /// Output directory (default: $OBF_WORKDIR or the current dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Upper bound on parallel grid cells; output is identical for
        /// any value.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the obfuscator parameter-count table.
    Params {
        /// Encoded feature width.
        #[arg(long, default_value_t = 102)]
        input_dim: usize,
    },
}

/// Default output directory: $OBF_WORKDIR when set, else the current dir.
fn workdir() -> PathBuf {
    std::env::var_os("OBF_WORKDIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess {
            input,
            out_dir,
            has_header,
            config,
        } => commands::preprocess(
            &input,
            &out_dir.unwrap_or_else(workdir),
            has_header,
            config.as_deref(),
        ),
        Command::Train {
            data,
            model_out,
            history_out,
            config,
        } => commands::train(
            &data,
            &model_out.unwrap_or_else(|| workdir().join("model.txt")),
            &history_out.unwrap_or_else(|| workdir().join("history.csv")),
            config.as_deref(),
        ),
        Command::Obfuscate {
            model,
            data,
            out,
            k,
            lambda,
            no_f,
            no_g,
            noise_seed,
            config,
        } => commands::obfuscate(
            &model,
            &data,
            &out,
            commands::PrivacyOverrides {
                k,
                lambda,
                no_f,
                no_g,
                noise_seed,
            },
            config.as_deref(),
        ),
        Command::Eval {
            protocol,
            model,
            train_data,
            test_data,
            aux_data,
            eval_mode,
            target,
            out,
            k,
            lambda,
            noise_seed,
            config,
        } => commands::eval(commands::EvalArgs {
            protocol,
            model,
            train_data,
            test_data,
            aux_data,
            eval_mode,
            target,
            out: out.unwrap_or_else(|| workdir().join("results.csv")),
            overrides: commands::PrivacyOverrides {
                k,
                lambda,
                no_f: false,
                no_g: false,
                noise_seed,
            },
            config,
        }),
        Command::Sweep {
            model,
            train_data,
            test_data,
            out_dir,
            jobs,
            config,
        } => commands::sweep(
            &model,
            &train_data,
            &test_data,
            &out_dir.unwrap_or_else(workdir),
            jobs,
            config.as_deref(),
        ),
        Command::Params { input_dim } => commands::params(input_dim),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful outcomes; everything else
            // is a usage error (exit 1, not clap's default 2).
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
