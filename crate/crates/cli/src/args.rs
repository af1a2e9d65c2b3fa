use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, ProtocolKind};

#[derive(Debug, Parser)]
#[command(
    name = "lorentz-tomo",
    version,
    about = "Qudit tomography experiments with Lorentz-transformed protocols"
)]
pub struct Cli {
    /// JSON configuration file with flat keys; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ensemble of independent single-shot tomography experiments.
    Static(StaticArgs),
    /// Adaptive tracking of an evolving state.
    Track(TrackArgs),
    /// Write a protocol as JSON.
    Protocol(ProtocolArgs),
    /// Run the invariant checks for s = 2, 3, 4, 8.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Default)]
pub struct StaticArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Expected events per experiment.
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Dominant weight of the random states.
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolKind>,
}

#[derive(Debug, Args, Default)]
pub struct TrackArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    /// Expected events per step.
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub period: Option<usize>,
    /// Dominant weight imposed on each estimate before adapting.
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Dominant weight of the initial true state.
    #[arg(long)]
    pub initial_weight: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ProtocolArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<f64>,
    /// Dominant weight of the random reference state (Lorentz kind).
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long, value_enum, default_value = "mub")]
    pub kind: ProtocolKind,
}

#[derive(Debug, Args, Default)]
pub struct VerifyArgs {
    /// Protocol JSON replacing the MUB table of its dimension.
    #[arg(long)]
    pub protocol_file: Option<PathBuf>,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            ..Default::default()
        };
        match &self.command {
            Command::Static(a) => {
                o.dim = a.dim;
                o.rank = a.rank;
                o.n = a.n;
                o.trials = a.trials;
                o.lambda0 = a.lambda0;
                o.protocol = a.protocol;
            }
            Command::Track(a) => {
                o.dim = a.dim;
                o.n = a.n;
                o.steps = a.steps;
                o.eps = a.eps;
                o.g = a.g;
                o.period = a.period;
                o.lambda0 = a.lambda0;
                o.initial_weight = a.initial_weight;
            }
            Command::Protocol(a) => {
                o.dim = a.dim;
                o.n = a.n;
                o.lambda0 = a.lambda0;
            }
            Command::Verify(_) => {}
        }
        o
    }
}
