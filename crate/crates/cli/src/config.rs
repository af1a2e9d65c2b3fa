//! Flat JSON configuration shared by every command.
//!
//! Keys (all optional; missing keys take the defaults shown by
//! `ExperimentConfig::default()`):
//!
//! | key | meaning |
//! |---|---|
//! | `dim` | Hilbert-space dimension `s` |
//! | `rank` | rank `r` of the random states and of the fit (static); defaults to `dim` |
//! | `lambda0` | dominant weight of the states (static) and the regularization target (both) |
//! | `initial_weight` | dominant weight of the initial tracked state |
//! | `n` | expected events per experiment or per tracking step |
//! | `trials` | number of static experiments |
//! | `steps` | tracking steps |
//! | `eps`, `g`, `period` | time step, modulation depth and modulation period |
//! | `protocol` | `"lorentz"` or `"mub"` for the static command |
//! | `exposure_reference` | `"estimate"` or `"regularized"` for tracking |
//! | `warmup` | steps excluded from tracking statistics |
//! | `seed` | master seed |
//! | `out` | output directory |
//! | `max_iter`, `gap_tol` | estimator budget and duality-gap tolerance |
//!
//! Command-line flags override file values.

use std::path::{Path, PathBuf};

use lorentz_tomo::protocol::supported_dimensions;
use lorentz_tomo::rng::derive_seed;
use lorentz_tomo::tracker::ExposureReference;
use lorentz_tomo::{EvolutionConfig, MleOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// MUB moved by the Lorentz matrix of the reference state.
    #[default]
    Lorentz,
    /// Plain mutually unbiased bases.
    Mub,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub rank: Option<usize>,
    pub lambda0: f64,
    pub initial_weight: f64,
    pub n: f64,
    pub trials: usize,
    pub steps: usize,
    pub eps: f64,
    pub g: f64,
    pub period: usize,
    pub protocol: ProtocolKind,
    pub exposure_reference: ExposureReference,
    pub warmup: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub max_iter: usize,
    pub gap_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mle = MleOptions::default();
        Self {
            dim: 8,
            rank: None,
            lambda0: 0.9999,
            initial_weight: 0.999999,
            n: 1e4,
            trials: 200,
            steps: 5000,
            eps: 3e-5,
            g: 0.5,
            period: 1000,
            protocol: ProtocolKind::Lorentz,
            exposure_reference: ExposureReference::Estimate,
            warmup: 10,
            seed: 20240601,
            out: PathBuf::from("out"),
            max_iter: mle.max_iter,
            gap_tol: mle.gap_tol,
        }
    }
}

/// Flag values that replace file values when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dim: Option<usize>,
    pub rank: Option<usize>,
    pub n: Option<f64>,
    pub trials: Option<usize>,
    pub steps: Option<usize>,
    pub eps: Option<f64>,
    pub g: Option<f64>,
    pub period: Option<usize>,
    pub lambda0: Option<f64>,
    pub initial_weight: Option<f64>,
    pub protocol: Option<ProtocolKind>,
}

/// Seed labels for independent random streams.
mod label {
    pub const STATIC_STATE: u64 = 1;
    pub const STATIC_NOISE: u64 = 2;
    pub const HAMILTONIAN: u64 = 3;
    pub const TRACK_STATE: u64 = 4;
    pub const TRACK_NOISE: u64 = 5;
    pub const PROTOCOL_STATE: u64 = 6;
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_owned(),
            source,
        })
    }

    /// File (or defaults) with flag overrides applied, then validated.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(o);
        cfg.rank.get_or_insert(cfg.dim);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = o.$f.clone() { self.$f = v; } )*};
        }
        set!(
            seed,
            out,
            dim,
            n,
            trials,
            steps,
            eps,
            g,
            period,
            lambda0,
            initial_weight,
            protocol
        );
        if o.rank.is_some() {
            self.rank = o.rank;
        }
    }

    /// Rank of the static states and fits; full rank unless set.
    pub fn rank(&self) -> usize {
        self.rank.unwrap_or(self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !supported_dimensions().contains(&self.dim) {
            return bad(format!(
                "dim {} not in {:?}",
                self.dim,
                supported_dimensions()
            ));
        }
        if self.rank() == 0 || self.rank() > self.dim {
            return bad(format!("rank {} outside 1..={}", self.rank(), self.dim));
        }
        let lower = 1.0 / self.dim as f64;
        for (name, w) in [
            ("lambda0", self.lambda0),
            ("initial_weight", self.initial_weight),
        ] {
            if !(w > lower && w <= 1.0) {
                return bad(format!("{name} = {w} outside ({lower}, 1]"));
            }
        }
        if !(self.n > 0.0 && self.n.is_finite()) {
            return bad(format!("n = {} must be positive", self.n));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        if !self.g.is_finite() {
            return bad(format!("g = {} must be finite", self.g));
        }
        if self.period == 0 {
            return bad("period must be at least 1".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.gap_tol > 0.0) {
            return bad(format!("gap_tol = {} must be positive", self.gap_tol));
        }
        Ok(())
    }

    pub fn mle_options(&self, seed: u64) -> MleOptions {
        MleOptions {
            max_iter: self.max_iter,
            gap_tol: self.gap_tol,
            seed,
            ..MleOptions::default()
        }
    }

    /// Seed of the random state of static trial `i`.
    pub fn static_state_seed(&self, i: usize) -> u64 {
        derive_seed(derive_seed(self.seed, label::STATIC_STATE), i as u64)
    }

    /// Seed of the counting noise of static trial `i`.
    pub fn static_noise_seed(&self, i: usize) -> u64 {
        derive_seed(derive_seed(self.seed, label::STATIC_NOISE), i as u64)
    }

    pub fn protocol_state_seed(&self) -> u64 {
        derive_seed(self.seed, label::PROTOCOL_STATE)
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            dim: self.dim,
            eps: self.eps,
            modulation: self.g,
            period: self.period,
            total_steps: self.steps,
            sample_size: self.n,
            target_weight: self.lambda0,
            initial_weight: self.initial_weight,
            hamiltonian_seed: derive_seed(self.seed, label::HAMILTONIAN),
            state_seed: derive_seed(self.seed, label::TRACK_STATE),
            noise_seed: derive_seed(self.seed, label::TRACK_NOISE),
            exposure_reference: self.exposure_reference,
            mle: self.mle_options(0),
        }
    }
}
