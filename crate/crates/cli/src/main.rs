//! `tms`: dataset generation, training, evaluation, noise sweeps, leakage
//! studies and cost tables for the TMS crossbar Braille recogniser.
//!
//! Every flag can also be set through an environment variable with the
//! `TMS_` prefix (`TMS_SEED`, `TMS_OUT`, `TMS_CONFIG`, ...).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tms_core::{Selection, SignalMode};

use crate::output::UsageError;

#[derive(Parser, Debug)]
#[command(name = "tms", version, about = "TMS crossbar Braille recognition experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Device and simulation parameters (flat TOML, dotted keys).
    #[arg(long, global = true, env = "TMS_CONFIG")]
    pub config: Option<PathBuf>,

    /// Master seed. Required by every stochastic subcommand.
    #[arg(long, global = true, env = "TMS_SEED")]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, env = "TMS_OUT", default_value = "out")]
    pub out: PathBuf,

    /// Overwrite existing output files.
    #[arg(long, global = true, env = "TMS_FORCE")]
    pub force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the force-grid dataset and its manifest.
    Dataset(DatasetArgs),
    /// Train one network on the training split.
    Train(TrainArgs),
    /// Evaluate a trained network on its held-out split.
    Eval(EvalArgs),
    /// Train and evaluate over groups x noise x mode x seeds.
    Sweep(SweepArgs),
    /// Leakage of the sensor crossbar over a parasitics grid.
    Leakage(LeakageArgs),
    /// Area and power table for the four builds.
    Cost(CostArgs),
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Group selection: `fusion`, `1`, `group3`, `1,2`, ...
    #[arg(long, env = "TMS_GROUPS", default_value = "fusion")]
    pub groups: Selection,

    /// Copies of each symbol.
    #[arg(long, default_value_t = 5)]
    pub copies: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, env = "TMS_GROUPS", default_value = "fusion")]
    pub groups: Selection,

    #[arg(long, env = "TMS_MODE", default_value = "analog")]
    pub mode: SignalMode,

    /// Noise variance injected during training.
    #[arg(long, env = "TMS_SIGMA2", default_value_t = 0.02)]
    pub sigma2: f64,

    #[arg(long, default_value_t = 5)]
    pub copies: usize,

    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,

    /// `adam` or `sgd`. Learning rate defaults to 0.01 for Adam, 0.05 for SGD.
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerArg,

    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Network written by `tms train`.
    #[arg(long, default_value = "out/network.json")]
    pub network: PathBuf,

    /// Noise variances; defaults to the training variance.
    #[arg(long, env = "TMS_SIGMA2", value_delimiter = ',')]
    pub sigma2: Vec<f64>,

    /// Noise draws per test item.
    #[arg(long, default_value_t = 20)]
    pub draws: usize,

    /// Solve the sensor crossbar with the configured parasitics.
    #[arg(long)]
    pub nodal: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Repeat for several rows. Defaults to Group1..Group4 and fusion.
    #[arg(long, env = "TMS_GROUPS", value_delimiter = ';')]
    pub groups: Vec<Selection>,

    #[arg(long, env = "TMS_SIGMA2", value_delimiter = ',', default_value = "0.02,0.05,0.1,0.5")]
    pub sigma2: Vec<f64>,

    #[arg(long, env = "TMS_MODE", value_delimiter = ',', default_value = "analog,binary")]
    pub mode: Vec<SignalMode>,

    /// Number of seeds, counting up from `--seed`.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,

    #[arg(long, default_value_t = 5)]
    pub copies: usize,

    #[arg(long, default_value_t = 20)]
    pub draws: usize,

    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug)]
pub struct LeakageArgs {
    /// Wire resistances per segment (ohms).
    #[arg(long, value_delimiter = ',', default_value = "0,10,50,100,200,326,500,1000")]
    pub wire: Vec<f64>,

    /// Switch OFF conductances (S).
    #[arg(long, value_delimiter = ',', default_value = "0,1e-5,1e-4,1e-3")]
    pub g_off: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    /// Unit-cost table (flat TOML); defaults to the bundled calibration.
    #[arg(long, env = "TMS_COST_TABLE")]
    pub table: Option<PathBuf>,

    /// Output classes of the costed network.
    #[arg(long, default_value_t = 125)]
    pub outputs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dataset(a) => commands::dataset(&cli.global, &a),
        Command::Train(a) => commands::train(&cli.global, &a),
        Command::Eval(a) => commands::eval(&cli.global, &a),
        Command::Sweep(a) => commands::sweep(&cli.global, &a),
        Command::Leakage(a) => commands::leakage(&cli.global, &a),
        Command::Cost(a) => commands::cost(&cli.global, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause.downcast_ref::<UsageError>().is_some()
            || cause
                .downcast_ref::<tms_core::Error>()
                .is_some_and(tms_core::Error::is_config_error)
    })
}
