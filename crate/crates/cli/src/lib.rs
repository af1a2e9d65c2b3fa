//! Experiment driver behind the `lorentz-tomo` binary.
//!
//! Every command resolves an [`ExperimentConfig`] (JSON file, then flags),
//! writes its artifacts under `out`, and reports failures through
//! [`CliError::exit_code`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod protocol_io;
pub mod stats;
pub mod verify;

use std::path::PathBuf;

use lorentz_tomo::qmat::{hermitian_purification, random_mixed_state, regularize_spectrum};
use lorentz_tomo::{
    apply_lorentz, lorentz_of_state, mub_protocol, normalize_exposure, DensityMatrix64,
    StateGenConfig,
};

pub use args::{Cli, Command};
pub use config::{ExperimentConfig, ProtocolKind};
pub use error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Paths written by a command.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<Artifacts, CliError> {
    let cfg = ExperimentConfig::resolve(cli.config.as_deref(), &cli.overrides())?;
    match &cli.command {
        Command::Static(_) => cmd_static(&cfg),
        Command::Track(_) => cmd_track(&cfg),
        Command::Protocol(a) => cmd_protocol(&cfg, a.kind),
        Command::Verify(a) => cmd_verify(&cfg, a.protocol_file.as_deref()),
    }
}

pub fn cmd_static(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let kind = cfg.protocol;
    let trials = experiments::run_static(cfg, kind)?;
    let summary = experiments::summarize_static(cfg, kind, &trials);
    let tag = match kind {
        ProtocolKind::Lorentz => "lorentz",
        ProtocolKind::Mub => "mub",
    };
    let csv = cfg.out.join(format!("static_{tag}.csv"));
    let json = cfg.out.join(format!("static_{tag}_summary.json"));
    output::write_static_csv(&csv, &trials)?;
    output::write_json(&json, &summary)?;
    println!(
        "static {tag}: {} trials, mean loss {:.6e} (sd {:.3e}), efficiency {:.1}",
        summary.trials, summary.mean_loss, summary.std_loss, summary.mean_efficiency
    );
    Ok(Artifacts {
        files: vec![csv, json],
    })
}

pub fn cmd_track(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    experiments::check_track(cfg)?;
    let csv = cfg.out.join("track.csv");
    let json = cfg.out.join("track_summary.json");
    let mut writer = output::TrackCsv::create(&csv)?;
    let records = experiments::run_track_with(cfg, |r| writer.push(r))?;
    writer.finish()?;
    let summary = experiments::summarize_track(cfg, &records);
    output::write_json(&json, &summary)?;
    println!(
        "track: {} steps, mean loss {:.6e} (sd {:.3e}), max detection fraction {:.3e}, min back-action fidelity {:.8}",
        summary.steps,
        summary.mean_loss,
        summary.std_loss,
        summary.max_detection_fraction,
        summary.min_backaction_fidelity
    );
    Ok(Artifacts {
        files: vec![csv, json],
    })
}

/// Reference state for a Lorentz protocol dump.
fn protocol_reference(cfg: &ExperimentConfig) -> Result<DensityMatrix64, CliError> {
    random_mixed_state(&StateGenConfig {
        dim: cfg.dim,
        rank: cfg.dim,
        dominant_weight: cfg.lambda0,
        seed: cfg.protocol_state_seed(),
    })
    .map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_protocol(cfg: &ExperimentConfig, kind: ProtocolKind) -> Result<Artifacts, CliError> {
    let base = mub_protocol(cfg.dim).map_err(|e| CliError::Config(e.to_string()))?;
    let numerical = |e: &dyn std::fmt::Display| CliError::Numerical(e.to_string());
    let x = match kind {
        ProtocolKind::Mub => {
            normalize_exposure(&base, &DensityMatrix64::maximally_mixed(cfg.dim), cfg.n)
                .map_err(|e| numerical(&e))?
        }
        ProtocolKind::Lorentz => {
            if cfg.lambda0 >= 1.0 {
                return Err(CliError::Config(
                    "the Lorentz protocol needs lambda0 < 1".into(),
                ));
            }
            let rho = protocol_reference(cfg)?;
            let reg = regularize_spectrum(&rho, cfg.lambda0).map_err(|e| numerical(&e))?;
            let l = lorentz_of_state(&hermitian_purification(&reg)).map_err(|e| numerical(&e))?;
            let moved = apply_lorentz(&base, &l).map_err(|e| numerical(&e))?;
            normalize_exposure(&moved, &rho, cfg.n).map_err(|e| numerical(&e))?
        }
    };
    let tag = match kind {
        ProtocolKind::Lorentz => "lorentz",
        ProtocolKind::Mub => "mub",
    };
    let path = cfg.out.join(format!("protocol_{tag}_s{}.json", cfg.dim));
    output::write_json(&path, &protocol_io::ProtocolFile::from_matrix(&x))?;
    println!("{}", path.display());
    Ok(Artifacts { files: vec![path] })
}

pub fn cmd_verify(
    cfg: &ExperimentConfig,
    protocol_file: Option<&std::path::Path>,
) -> Result<Artifacts, CliError> {
    let replace = match protocol_file {
        Some(p) => Some(protocol_io::ProtocolFile::load(p)?.to_matrix()?),
        None => None,
    };
    let outcomes = verify::run_checks(&verify::DEFAULT_DIMS, replace.as_ref(), cfg.seed)?;
    print!("{}", verify::format_table(&outcomes));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(Artifacts::default())
}
