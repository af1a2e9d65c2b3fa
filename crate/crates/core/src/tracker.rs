//! Closed-loop tracking of an evolving state.
//!
//! Every step evolves the true state under a periodically modulated
//! Hamiltonian, measures it with a protocol tuned to the previous estimate,
//! reconstructs it, and follows one never-detected ("weak") representative
//! whose no-click branch is projected away from every protocol row.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{
    efficiency, mle_reconstruct, sample_counts_with, EstimatorError, MleOptions, MleStart,
};
use crate::linalg::{real, unitary_propagator, CMatrix};
use crate::protocol::{
    apply_lorentz, lorentz_of_state, mub_protocol, normalize_exposure, rates, InstrumentalMatrix,
    ProtocolError,
};
use crate::qmat::{
    fidelity, hermitian_purification, random_hermitian, random_mixed_state, regularize_spectrum,
    DensityMatrix, PurifiedState, StateError, StateGenConfig,
};
use crate::rng::{derive_seed, seeded, Rng64};
use crate::scalar::Real;

const ZERO_SURVIVAL: f64 = 1e-150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("weak representative annihilated (remaining norm {0:e})")]
    ZeroSurvival(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: StepError,
    },
}

/// State against which exposures are normalized to the target sample size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureReference {
    /// The previous reconstruction as estimated.
    #[default]
    Estimate,
    /// The previous reconstruction after spectrum regularization.
    Regularized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dim: usize,
    /// Time step `ε`.
    pub eps: f64,
    /// Modulation depth `g`.
    pub modulation: f64,
    /// Modulation period `T` in steps.
    pub period: usize,
    pub total_steps: usize,
    /// Expected events per step.
    pub sample_size: f64,
    /// Dominant weight imposed on the estimate before building the protocol.
    pub target_weight: f64,
    /// Dominant weight of the true initial state.
    pub initial_weight: f64,
    pub hamiltonian_seed: u64,
    pub state_seed: u64,
    pub noise_seed: u64,
    pub exposure_reference: ExposureReference,
    pub mle: MleOptions,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            eps: 3e-5,
            modulation: 0.5,
            period: 1000,
            total_steps: 5000,
            sample_size: 1e4,
            target_weight: 0.9999,
            initial_weight: 0.999999,
            hamiltonian_seed: 1,
            state_seed: 2,
            noise_seed: 3,
            exposure_reference: ExposureReference::Estimate,
            mle: MleOptions::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let bad = |m: String| Err(TrackerError::InvalidConfig(m));
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.period == 0 {
            return bad("period must be at least 1".into());
        }
        if !(self.sample_size > 0.0) {
            return bad(format!(
                "sample size must be positive, got {}",
                self.sample_size
            ));
        }
        let lower = 1.0 / self.dim as f64;
        for (name, w) in [
            ("target_weight", self.target_weight),
            ("initial_weight", self.initial_weight),
        ] {
            if !(w > lower && w <= 1.0) {
                return bad(format!("{name} {w} outside ({lower}, 1]"));
            }
        }
        mub_protocol::<f64>(self.dim).map_err(|e| TrackerError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingRecord {
    pub step: usize,
    /// Fidelity of the reconstruction to the true state.
    pub recon_fidelity: f64,
    pub loss: f64,
    /// Efficiency against the full-rank bound (`r = s`).
    pub efficiency: f64,
    /// Per-row click probability `⟨φ_j|ρ|φ_j⟩` for the true state.
    pub detection_fractions: Vec<f64>,
    /// `|⟨free|weak⟩|²` between the undisturbed and the never-detected representative.
    pub backaction_fidelity: f64,
    /// Probability that the weak representative passed this step undetected.
    pub survival: f64,
    pub iterations: usize,
}

impl TrackingRecord {
    pub fn max_detection_fraction(&self) -> f64 {
        self.detection_fractions.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn sum_detection_fraction(&self) -> f64 {
        self.detection_fractions.iter().sum()
    }
}

/// `H₀·(1 + g·sin(2π(j mod T)/T))`.
pub fn hamiltonian_at<T: Real>(h0: &CMatrix<T>, g: f64, period: usize, j: usize) -> CMatrix<T> {
    let phase = 2.0 * PI * (j % period.max(1)) as f64 / period.max(1) as f64;
    h0 * real(T::lit(1.0 + g * phase.sin()))
}

/// `UρU⁺` with `U = exp(−iεH)`.
pub fn evolve<T: Real>(rho: &DensityMatrix<T>, h: &CMatrix<T>, eps: f64) -> DensityMatrix<T> {
    rho.conjugate_by(&unitary_propagator(h, T::lit(eps)))
}

/// Protocol for the next step: plain MUB with uniform exposures when there is
/// no previous estimate, otherwise the MUB transformed by the Lorentz matrix
/// of the regularized estimate.
pub fn adapt_protocol<T: Real>(
    previous: Option<&DensityMatrix<T>>,
    base: &InstrumentalMatrix<T>,
    target_weight: f64,
    n: f64,
    reference: ExposureReference,
) -> Result<InstrumentalMatrix<T>, StepError> {
    let n = T::lit(n);
    let Some(prev) = previous else {
        let centre = DensityMatrix::maximally_mixed(base.dim());
        return Ok(normalize_exposure(base, &centre, n)?);
    };
    let prev = prev.normalized();
    let reg = regularize_spectrum(&prev, target_weight)?;
    let l = lorentz_of_state(&hermitian_purification(&reg))?;
    let moved = apply_lorentz(base, &l)?;
    let reference = match reference {
        ExposureReference::Estimate => &prev,
        ExposureReference::Regularized => &reg,
    };
    Ok(normalize_exposure(&moved, reference, n)?)
}

/// Applies `U₀`, then `1 − |φ_j⟩⟨φ_j|` for every row in order, and renormalizes.
///
/// Returns the new representative and the squared norm that survived.
pub fn backaction_step<T: Real>(
    phi: &PurifiedState<T>,
    u0: &CMatrix<T>,
    x: &InstrumentalMatrix<T>,
) -> Result<(PurifiedState<T>, f64), StepError> {
    if phi.rank() != 1 || phi.dim() != x.dim() {
        return Err(ProtocolError::DimensionMismatch {
            expected: x.dim(),
            found: phi.dim(),
        }
        .into());
    }
    let before = phi.matrix().norm_squared();
    let mut psi = u0 * phi.matrix();
    for j in 0..x.len() {
        let bra = x.row(j);
        let amp = (&bra * &psi)[(0, 0)];
        psi -= bra.adjoint() * amp;
    }
    let after = psi.norm_squared();
    let norm = after.sqrt();
    if !(norm.as_f64() >= ZERO_SURVIVAL) {
        return Err(StepError::ZeroSurvival(norm.as_f64()));
    }
    psi /= real(norm);
    Ok((PurifiedState::new(psi)?, (after / before).as_f64()))
}

/// Click probabilities `⟨φ_j|ρ|φ_j⟩` of each (unit-norm) row.
pub fn detection_fractions<T: Real>(
    x: &InstrumentalMatrix<T>,
    rho: &DensityMatrix<T>,
) -> Result<Vec<f64>, StepError> {
    Ok(rates(x, rho)?.into_iter().map(|v| v.as_f64()).collect())
}

fn ket_overlap2<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> f64 {
    (a.adjoint() * b)[(0, 0)].norm_sqr().as_f64()
}

/// Step-by-step tracking run; yields one record per step.
pub struct Tracker<T: Real> {
    cfg: EvolutionConfig,
    base: InstrumentalMatrix<T>,
    h0: CMatrix<T>,
    truth: DensityMatrix<T>,
    free: CMatrix<T>,
    weak: PurifiedState<T>,
    estimate: Option<DensityMatrix<T>>,
    noise: Rng64,
    step: usize,
    failed: bool,
}

impl<T: Real> Tracker<T> {
    pub fn new(cfg: EvolutionConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        let init = |e: StepError| TrackerError::Step { step: 0, source: e };
        let base = mub_protocol::<T>(cfg.dim).map_err(|e| init(e.into()))?;
        let h0 = random_hermitian::<T>(cfg.dim, cfg.hamiltonian_seed);
        let truth = random_mixed_state::<T>(&StateGenConfig {
            dim: cfg.dim,
            rank: cfg.dim,
            dominant_weight: cfg.initial_weight,
            seed: cfg.state_seed,
        })
        .map_err(|e| init(e.into()))?;
        let free = truth.eigen().vectors.columns(0, 1).into_owned();
        let weak = PurifiedState::new(free.clone()).map_err(|e| init(e.into()))?;
        Ok(Self {
            noise: seeded(cfg.noise_seed),
            cfg,
            base,
            h0,
            truth,
            free,
            weak,
            estimate: None,
            step: 0,
            failed: false,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    pub fn true_state(&self) -> &DensityMatrix<T> {
        &self.truth
    }

    pub fn estimate(&self) -> Option<&DensityMatrix<T>> {
        self.estimate.as_ref()
    }

    fn advance(&mut self) -> Result<TrackingRecord, StepError> {
        let cfg = &self.cfg;
        let j = self.step;
        let h = hamiltonian_at(&self.h0, cfg.modulation, cfg.period, j);
        let u = unitary_propagator(&h, T::lit(cfg.eps));
        self.truth = self.truth.conjugate_by(&u);
        self.free = &u * &self.free;

        let protocol = adapt_protocol(
            self.estimate.as_ref(),
            &self.base,
            cfg.target_weight,
            cfg.sample_size,
            cfg.exposure_reference,
        )?;

        // the MUB step measures with complete bases, which would annihilate
        // any representative; only adapted steps act on the weak branch
        let survival = if self.estimate.is_some() {
            let (weak, survival) = backaction_step(&self.weak, &u, &protocol)?;
            self.weak = weak;
            survival
        } else {
            self.weak = PurifiedState::new(&u * self.weak.matrix())?;
            1.0
        };

        let rec = sample_counts_with(&protocol, &self.truth, &mut self.noise)?;
        let opts = MleOptions {
            seed: derive_seed(cfg.noise_seed, j as u64),
            ..cfg.mle
        };
        let start = match &self.estimate {
            Some(prev) => MleStart::Warm(prev),
            None => MleStart::Cold,
        };
        let fit = mle_reconstruct(&rec, cfg.dim, &opts, start)?;

        let f = fidelity(&fit.state, &self.truth.normalized())?.as_f64();
        let loss = (1.0 - f).max(0.0);
        let eff = match efficiency(loss, cfg.dim, cfg.dim, cfg.sample_size) {
            Ok(e) => e,
            Err(EstimatorError::DivisionByZero) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        let record = TrackingRecord {
            step: j,
            recon_fidelity: f,
            loss,
            efficiency: eff,
            detection_fractions: detection_fractions(&protocol, &self.truth.normalized())?,
            backaction_fidelity: ket_overlap2(&self.free, self.weak.matrix()),
            survival,
            iterations: fit.iterations,
        };
        self.estimate = Some(fit.state);
        self.step += 1;
        Ok(record)
    }
}

impl<T: Real> Iterator for Tracker<T> {
    type Item = Result<TrackingRecord, TrackerError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.step >= self.cfg.total_steps {
            return None;
        }
        let step = self.step;
        Some(self.advance().map_err(|source| {
            self.failed = true;
            TrackerError::Step { step, source }
        }))
    }
}

/// Runs the full loop and collects every record.
pub fn run_tracking<T: Real>(cfg: &EvolutionConfig) -> Result<Vec<TrackingRecord>, TrackerError> {
    Tracker::<T>::new(cfg.clone())?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cplx, max_abs};
    use crate::qmat::{density_of, purify};
    use crate::stokes::{pauli, stokes_of};
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> EvolutionConfig {
        EvolutionConfig {
            dim: 4,
            eps: 1e-3,
            period: 20,
            total_steps: 30,
            initial_weight: 0.999,
            target_weight: 0.999,
            ..EvolutionConfig::default()
        }
    }

    #[test]
    fn hamiltonian_modulation() {
        let h0 = random_hermitian::<f64>(3, 1);
        assert_eq!(hamiltonian_at(&h0, 0.0, 7, 5), h0);
        let q = hamiltonian_at(&h0, 0.5, 8, 2);
        assert!(max_abs(&(q - &h0 * cplx(1.5, 0.0))) < 1e-14);
        assert_eq!(
            hamiltonian_at(&h0, 0.5, 8, 0),
            hamiltonian_at(&h0, 0.5, 8, 8)
        );
    }

    #[test]
    fn evolution_preserves_spectrum() {
        let rho = random_mixed_state::<f64>(&StateGenConfig {
            dim: 5,
            rank: 5,
            dominant_weight: 0.7,
            seed: 3,
        })
        .unwrap();
        let h = random_hermitian::<f64>(5, 4);
        let out = evolve(&rho, &h, 0.3);
        for (a, b) in rho.eigen().values.iter().zip(out.eigen().values.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-12);
        let still = evolve(&rho, &CMatrix::zeros(5, 5), 0.3);
        assert!(max_abs(&(still.matrix() - rho.matrix())) < 1e-15);
    }

    #[test]
    fn evolution_rotates_the_bloch_vector() {
        // H = σ₃, ε = π/2 turns the Bloch vector by π about the z axis
        let [_, _, s3] = pauli::<f64>();
        let rho = crate::stokes::density_of_stokes(&crate::stokes::StokesFourVector::new(
            1.0, 0.6, 0.0, 0.0,
        ))
        .unwrap();
        let out = evolve(&rho, &s3, PI / 2.0);
        let p = stokes_of(&out).unwrap();
        assert_abs_diff_eq!(p.p1, -0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn adapt_without_estimate_is_uniform_mub() {
        let base = mub_protocol::<f64>(8).unwrap();
        let x = adapt_protocol(None, &base, 0.9999, 1e4, ExposureReference::Estimate).unwrap();
        assert!(x.weights().iter().all(|&w| (w - 1e4 / 9.0).abs() < 1e-9));
        assert!(max_abs(&(x.rows() - base.rows())) < 1e-15);
    }

    #[test]
    fn adapt_from_centre_is_nearly_untransformed() {
        let base = mub_protocol::<f64>(4).unwrap();
        let centre = DensityMatrix::maximally_mixed(4);
        let x = adapt_protocol(
            Some(&centre),
            &base,
            0.2501,
            100.0,
            ExposureReference::Regularized,
        )
        .unwrap();
        let (lo, hi) = x
            .weights()
            .iter()
            .fold((f64::MAX, 0.0f64), |(a, b), &w| (a.min(w), b.max(w)));
        assert!(hi / lo < 1.01, "{lo} {hi}");
    }

    #[test]
    fn adapted_rates_are_small_and_uniform_at_the_fixed_point() {
        let base = mub_protocol::<f64>(8).unwrap();
        let rho = random_mixed_state::<f64>(&StateGenConfig {
            dim: 8,
            rank: 8,
            dominant_weight: 0.9999,
            seed: 6,
        })
        .unwrap();
        let x = adapt_protocol(
            Some(&rho),
            &base,
            0.9999,
            1e4,
            ExposureReference::Regularized,
        )
        .unwrap();
        let lam = rates(&x, &rho).unwrap();
        let per_rep: Vec<f64> = lam
            .iter()
            .zip(x.weights())
            .map(|(l, t)| l * t / 1e4)
            .collect();
        let (lo, hi) = per_rep
            .iter()
            .fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 10.0, "{lo:e} {hi:e}");
        let fractions = detection_fractions(&x, &rho).unwrap();
        assert!(fractions.iter().all(|&f| f < 1e-3));
    }

    #[test]
    fn backaction_cases() {
        let base = mub_protocol::<f64>(2).unwrap();
        let single =
            InstrumentalMatrix::new(base.rows().rows(0, 1).into_owned(), vec![1.0]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let plus = PurifiedState::new(CMatrix::from_column_slice(
            2,
            1,
            &[cplx(r, 0.0), cplx(r, 0.0)],
        ))
        .unwrap();
        let id = CMatrix::identity(2, 2);
        let (out, surv) = backaction_step(&plus, &id, &single).unwrap();
        assert_abs_diff_eq!(surv, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.matrix()[(1, 0)].norm(), 1.0, epsilon = 1e-15);

        let one = PurifiedState::new(CMatrix::from_column_slice(
            2,
            1,
            &[cplx(0.0, 0.0), cplx(1.0, 0.0)],
        ))
        .unwrap();
        let (out, surv) = backaction_step(&one, &id, &single).unwrap();
        assert_eq!(surv, 1.0);
        assert_eq!(out, one);

        let zero = PurifiedState::new(CMatrix::from_column_slice(
            2,
            1,
            &[cplx(1.0, 0.0), cplx(0.0, 0.0)],
        ))
        .unwrap();
        assert!(matches!(
            backaction_step(&zero, &id, &single),
            Err(StepError::ZeroSurvival(_))
        ));
    }

    #[test]
    fn backaction_loss_telescopes() {
        // 1 − survival equals Σ_j |⟨φ_j|ψ_{j−1}⟩|² over the running state
        let base = mub_protocol::<f64>(4).unwrap();
        let rho = random_mixed_state::<f64>(&StateGenConfig {
            dim: 4,
            rank: 4,
            dominant_weight: 0.999,
            seed: 2,
        })
        .unwrap();
        let x = adapt_protocol(
            Some(&rho),
            &base,
            0.999,
            1.0,
            ExposureReference::Regularized,
        )
        .unwrap();
        let psi = purify(&rho, 4).unwrap().matrix().columns(0, 1).into_owned();
        let psi = &psi / cplx(psi.norm(), 0.0);
        let mut run = psi.clone();
        let mut lost = 0.0;
        for j in 0..x.len() {
            let bra = x.row(j);
            let amp = (&bra * &run)[(0, 0)];
            lost += amp.norm_sqr();
            run -= bra.adjoint() * amp;
        }
        let (_, surv) = backaction_step(
            &PurifiedState::new(psi).unwrap(),
            &CMatrix::identity(4, 4),
            &x,
        )
        .unwrap();
        assert_abs_diff_eq!(1.0 - surv, lost, epsilon = 1e-13);
    }

    #[test]
    fn orthonormal_rows_lose_the_sum_of_fractions() {
        let base = mub_protocol::<f64>(3).unwrap();
        let two =
            InstrumentalMatrix::new(base.rows().rows(0, 2).into_owned(), vec![1.0; 2]).unwrap();
        let ket = CMatrix::from_column_slice(
            3,
            1,
            &[cplx(0.1, 0.0), cplx(0.0, 0.2), cplx(0.974679434, 0.0)],
        );
        let ket = &ket / cplx(ket.norm(), 0.0);
        let rho = DensityMatrix::from_ket(&ket);
        let total: f64 = detection_fractions(&two, &rho).unwrap().iter().sum();
        let (_, surv) = backaction_step(
            &PurifiedState::new(ket).unwrap(),
            &CMatrix::identity(3, 3),
            &two,
        )
        .unwrap();
        assert_abs_diff_eq!(1.0 - surv, total, epsilon = 1e-14);
    }

    #[test]
    fn fractions_of_reference_states() {
        let x = mub_protocol::<f64>(4).unwrap();
        let fr = detection_fractions(&x, &DensityMatrix::maximally_mixed(4)).unwrap();
        assert!(fr.iter().all(|&f| (f - 0.25).abs() < 1e-12));
        let first = DensityMatrix::from_ket(&x.row(0).adjoint());
        assert_abs_diff_eq!(
            detection_fractions(&x, &first).unwrap()[0],
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn static_state_is_tracked_closely() {
        let cfg = EvolutionConfig {
            modulation: 0.0,
            eps: 1.0,
            initial_weight: 1.0,
            total_steps: 25,
            ..small_cfg()
        };
        let mut tracker = Tracker::<f64>::new(cfg).unwrap();
        tracker.h0 = CMatrix::zeros(4, 4);
        let start = tracker.true_state().clone();
        let records: Vec<_> = tracker.by_ref().collect::<Result<_, _>>().unwrap();
        assert!(max_abs(&(tracker.true_state().matrix() - start.matrix())) < 1e-12);
        for r in &records[5..] {
            assert!(
                r.recon_fidelity >= 1.0 - 1e-5,
                "step {} F {}",
                r.step,
                r.recon_fidelity
            );
        }
    }

    #[test]
    fn tracking_is_deterministic_and_well_formed() {
        let a = run_tracking::<f64>(&small_cfg()).unwrap();
        let b = run_tracking::<f64>(&small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert_abs_diff_eq!(a[0].backaction_fidelity, 1.0, epsilon = 1e-12);
        for r in &a {
            assert!((0.0..=1.0 + 1e-12).contains(&r.recon_fidelity));
            assert!((0.0..=1.0 + 1e-12).contains(&r.backaction_fidelity));
            assert!(r.detection_fractions.iter().all(|&f| f >= 0.0));
            assert_eq!(r.detection_fractions.len(), 20);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = EvolutionConfig {
            period: 0,
            ..small_cfg()
        };
        assert!(matches!(
            Tracker::<f64>::new(cfg),
            Err(TrackerError::InvalidConfig(_))
        ));
        let cfg = EvolutionConfig {
            dim: 6,
            ..small_cfg()
        };
        assert!(matches!(
            Tracker::<f64>::new(cfg),
            Err(TrackerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn density_of_weak_representative_is_pure() {
        let mut t = Tracker::<f64>::new(small_cfg()).unwrap();
        for _ in 0..3 {
            t.next().unwrap().unwrap();
        }
        let rho = density_of(&t.weak);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
        assert_eq!(rho.numerical_rank(), 1);
    }
}
