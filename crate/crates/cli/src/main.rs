mod commands;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ecc_core::netcfg::parse_widths;

use commands::{FilterDump, OracleSuite};
use experiment::{Experiment, Flags};

#[derive(Parser)]
#[command(name = "ecc", version, about = "Edge-conditioned graph convolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the training split and write metrics, checkpoint and manifest.
    Train(Flags),
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        flags: Flags,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Stratified k-fold cross-validation.
    Cv(Flags),
    /// Accuracy of a checkpoint under point deletion and coordinate noise.
    Robustness {
        #[command(flatten)]
        flags: Flags,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Deletion probabilities.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        delete: Vec<f64>,
        /// Noise standard deviations.
        #[arg(long, value_delimiter = ',')]
        noise: Vec<f64>,
    },
    /// Run a built-in reference check.
    OracleCheck {
        #[arg(value_enum, default_value = "grid")]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the weights generated by a filter network over an offset lattice.
    FiltersDump {
        #[arg(long, default_value = "C(16)-MP(2,3.4)-C(32)-MP(4,6.8)-C(64)-MP(8,30)-C(128)-D(0.5)-FC(10)")]
        config: String,
        #[arg(long, default_value = "full6d")]
        label_scheme: String,
        #[arg(long, default_value = "FC(16)-FC(32)")]
        filter_net: String,
        #[arg(long, default_value_t = 1)]
        input_width: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Index of the convolution to sample.
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = 2.0)]
        extent: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "filters")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Grid,
    Gradients,
    All,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Train(flags) => commands::run_train(&Experiment::resolve(&flags)?)?,
        Command::Eval { flags, checkpoint } => commands::run_eval(&Experiment::resolve(&flags)?, &checkpoint)?,
        Command::Cv(flags) => commands::run_cv(&Experiment::resolve(&flags)?)?,
        Command::Robustness {
            flags,
            checkpoint,
            delete,
            noise,
        } => commands::run_robustness(&Experiment::resolve(&flags)?, &checkpoint, &delete, &noise)?,
        Command::OracleCheck { suite, seed } => {
            let suites = match suite {
                Suite::Grid => vec![OracleSuite::Grid],
                Suite::Gradients => vec![OracleSuite::Gradients],
                Suite::All => vec![OracleSuite::Grid, OracleSuite::Gradients],
            };
            let mut ok = true;
            for s in suites {
                ok &= commands::run_oracle(s, seed)?;
            }
            return Ok(ok);
        }
        Command::FiltersDump {
            config,
            label_scheme,
            filter_net,
            input_width,
            checkpoint,
            layer,
            step,
            extent,
            seed,
            out,
        } => {
            let dump = FilterDump {
                config,
                scheme: label_scheme.parse()?,
                input_width,
                hidden: parse_widths(&filter_net)?,
                checkpoint,
                layer,
                step,
                extent,
                seed,
                out,
            };
            let k = commands::run_filters_dump(&dump)?;
            println!("wrote {k} filter grids to {}", dump.out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
