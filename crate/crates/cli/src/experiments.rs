//! The static ensemble and the tracking run, plus their summaries.

use lorentz_tomo::estimator::{efficiency, min_loss};
use lorentz_tomo::protocol::{apply_lorentz, lorentz_of_state, mub_protocol, normalize_exposure};
use lorentz_tomo::qmat::{hermitian_purification, random_mixed_state, regularize_spectrum};
use lorentz_tomo::{
    fidelity, mle_reconstruct, sample_counts, DensityMatrix64, InstrumentalMatrix64, MleStart,
    StateGenConfig, Tracker, TrackingRecord,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ProtocolKind};
use crate::error::{CliError, Result};
use crate::stats::{mean, quantile, std_dev, Histogram};
use crate::VERSION;

pub const HISTOGRAM_BINS: usize = 30;
/// Fidelity threshold counted as a high-fidelity tracking step.
pub const HIGH_FIDELITY: f64 = 1.0 - 1e-6;

fn numerical(context: String, e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(format!("{context}: {e}"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StaticTrial {
    pub trial: usize,
    pub loss: f64,
    pub efficiency: f64,
    pub iterations: usize,
}

/// Static-experiment state `i`: Haar eigenvectors with spectrum
/// `(λ₀, (1−λ₀)/(r−1), …)`.
pub fn static_state(cfg: &ExperimentConfig, i: usize) -> Result<DensityMatrix64> {
    random_mixed_state(&StateGenConfig {
        dim: cfg.dim,
        rank: cfg.rank(),
        dominant_weight: cfg.lambda0,
        seed: cfg.static_state_seed(i),
    })
    .map_err(|e| CliError::Config(e.to_string()))
}

/// Protocol aimed at `rho` (Lorentz) or the plain MUB, exposed for `n`
/// expected events under `rho`.
pub fn static_protocol(
    cfg: &ExperimentConfig,
    kind: ProtocolKind,
    rho: &DensityMatrix64,
) -> Result<InstrumentalMatrix64> {
    let base = mub_protocol(cfg.dim).map_err(|e| CliError::Config(e.to_string()))?;
    let moved = match kind {
        ProtocolKind::Mub => base,
        ProtocolKind::Lorentz => {
            let reg = regularize_spectrum(rho, cfg.lambda0)
                .map_err(|e| numerical("regularize".into(), e))?;
            let l = lorentz_of_state(&hermitian_purification(&reg))
                .map_err(|e| numerical("lorentz".into(), e))?;
            apply_lorentz(&base, &l).map_err(|e| numerical("apply lorentz".into(), e))?
        }
    };
    normalize_exposure(&moved, rho, cfg.n).map_err(|e| numerical("exposure".into(), e))
}

pub fn check_static(cfg: &ExperimentConfig, kind: ProtocolKind) -> Result<()> {
    StateGenConfig {
        dim: cfg.dim,
        rank: cfg.rank(),
        dominant_weight: cfg.lambda0,
        seed: 0,
    }
    .validate()
    .map_err(|e| CliError::Config(e.to_string()))?;
    if kind == ProtocolKind::Lorentz && cfg.lambda0 >= 1.0 {
        return Err(CliError::Config(
            "the Lorentz protocol needs lambda0 < 1 (a pure reference has no rest frame)".into(),
        ));
    }
    Ok(())
}

pub fn static_trial(cfg: &ExperimentConfig, kind: ProtocolKind, i: usize) -> Result<StaticTrial> {
    let rho = static_state(cfg, i)?;
    let x = static_protocol(cfg, kind, &rho)?;
    let rec = sample_counts(&x, &rho, cfg.static_noise_seed(i))
        .map_err(|e| numerical(format!("trial {i}"), e))?;
    let opts = cfg.mle_options(cfg.static_noise_seed(i) ^ 1);
    let fit = mle_reconstruct(&rec, cfg.rank(), &opts, MleStart::Cold)
        .map_err(|e| numerical(format!("trial {i}"), e))?;
    let f = fidelity(&fit.state, &rho).map_err(|e| numerical(format!("trial {i}"), e))?;
    let loss = (1.0 - f).max(0.0);
    let eff = efficiency(loss, cfg.dim, cfg.rank(), cfg.n).unwrap_or(f64::INFINITY);
    Ok(StaticTrial {
        trial: i,
        loss,
        efficiency: eff,
        iterations: fit.iterations,
    })
}

/// All trials, in parallel, returned in trial order.
pub fn run_static(cfg: &ExperimentConfig, kind: ProtocolKind) -> Result<Vec<StaticTrial>> {
    check_static(cfg, kind)?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| static_trial(cfg, kind, i))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct StaticSummary {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub protocol: ProtocolKind,
    pub trials: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    /// Lower bound on the mean loss of any POVM.
    pub min_loss_bound: f64,
    /// `min_loss_bound / mean_loss`.
    pub mean_efficiency: f64,
    pub mean_trial_efficiency: f64,
    pub std_trial_efficiency: f64,
    pub loss_histogram: Histogram,
}

pub fn summarize_static(
    cfg: &ExperimentConfig,
    kind: ProtocolKind,
    trials: &[StaticTrial],
) -> StaticSummary {
    let losses: Vec<f64> = trials.iter().map(|t| t.loss).collect();
    let effs: Vec<f64> = trials.iter().map(|t| t.efficiency).collect();
    let bound = min_loss(cfg.dim, cfg.rank(), cfg.n).unwrap_or(f64::NAN);
    let mean_loss = mean(&losses);
    StaticSummary {
        version: VERSION,
        config: cfg.clone(),
        protocol: kind,
        trials: trials.len(),
        mean_loss,
        std_loss: std_dev(&losses),
        min_loss_bound: bound,
        mean_efficiency: bound / mean_loss,
        mean_trial_efficiency: mean(&effs),
        std_trial_efficiency: std_dev(&effs),
        loss_histogram: Histogram::new(&losses, HISTOGRAM_BINS),
    }
}

pub fn check_track(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.lambda0 >= 1.0 {
        return Err(CliError::Config(
            "tracking needs lambda0 < 1 (a pure reference has no rest frame)".into(),
        ));
    }
    cfg.evolution()
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Runs the tracking loop, handing each record to `sink` as it is produced.
pub fn run_track_with(
    cfg: &ExperimentConfig,
    mut sink: impl FnMut(&TrackingRecord) -> Result<()>,
) -> Result<Vec<TrackingRecord>> {
    check_track(cfg)?;
    let tracker =
        Tracker::<f64>::new(cfg.evolution()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(cfg.steps);
    for rec in tracker {
        let rec = rec.map_err(|e| CliError::Numerical(e.to_string()))?;
        sink(&rec)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn run_track(cfg: &ExperimentConfig) -> Result<Vec<TrackingRecord>> {
    run_track_with(cfg, |_| Ok(()))
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackSummary {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub steps: usize,
    /// Steps at the start excluded from the statistics below (all steps are
    /// used when the run is not longer than the warm-up).
    pub warmup: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_efficiency: f64,
    pub std_efficiency: f64,
    /// Full-rank bound divided by the mean loss.
    pub efficiency_of_mean_loss: f64,
    /// Share of steps with reconstruction fidelity above `1 − 1e-6`.
    pub high_fidelity_fraction: f64,
    /// Largest per-row detection fraction over the adapted steps (`j ≥ 1`).
    pub max_detection_fraction: f64,
    /// Same for the initial MUB step.
    pub initial_step_max_detection_fraction: f64,
    /// Median over adapted steps of the per-step largest fraction.
    pub median_step_max_detection_fraction: f64,
    pub backaction_fidelity_step1: Option<f64>,
    pub min_backaction_fidelity: f64,
    pub backaction_histogram: Histogram,
}

pub fn summarize_track(cfg: &ExperimentConfig, records: &[TrackingRecord]) -> TrackSummary {
    let post = if records.len() > cfg.warmup {
        &records[cfg.warmup..]
    } else {
        records
    };
    let losses: Vec<f64> = post.iter().map(|r| r.loss).collect();
    let effs: Vec<f64> = post.iter().map(|r| r.efficiency).collect();
    let adapted_max: Vec<f64> = records
        .iter()
        .skip(1)
        .map(|r| r.max_detection_fraction())
        .collect();
    let bf: Vec<f64> = records.iter().map(|r| r.backaction_fidelity).collect();
    let mean_loss = mean(&losses);
    let bound = min_loss(cfg.dim, cfg.dim, cfg.n).unwrap_or(f64::NAN);
    TrackSummary {
        version: VERSION,
        config: cfg.clone(),
        steps: records.len(),
        warmup: cfg.warmup,
        mean_loss,
        std_loss: std_dev(&losses),
        mean_efficiency: mean(&effs),
        std_efficiency: std_dev(&effs),
        efficiency_of_mean_loss: bound / mean_loss,
        high_fidelity_fraction: post
            .iter()
            .filter(|r| r.recon_fidelity > HIGH_FIDELITY)
            .count() as f64
            / post.len().max(1) as f64,
        max_detection_fraction: adapted_max.iter().copied().fold(0.0, f64::max),
        initial_step_max_detection_fraction: records
            .first()
            .map_or(0.0, |r| r.max_detection_fraction()),
        median_step_max_detection_fraction: if adapted_max.is_empty() {
            0.0
        } else {
            quantile(&adapted_max, 0.5)
        },
        backaction_fidelity_step1: records.get(1).map(|r| r.backaction_fidelity),
        min_backaction_fidelity: bf.iter().copied().fold(1.0, f64::min),
        backaction_histogram: Histogram::new(&bf, HISTOGRAM_BINS),
    }
}
