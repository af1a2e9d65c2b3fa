//! Event sampling, likelihood, reconstruction and accuracy metrics.

mod mle;

pub use mle::{mle_reconstruct, MleFit, MleOptions, MleStart};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CMatrix;
use crate::protocol::{row_rates, InstrumentalMatrix, ProtocolError};
use crate::qmat::{DensityMatrix, PurifiedState};
use crate::rng::{poisson, seeded};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error("efficiency undefined for zero loss")]
    DivisionByZero,
    #[error("{counts} counts for a protocol with {rows} rows")]
    CountLength { counts: usize, rows: usize },
    #[error("no events registered")]
    NoCounts,
    #[error("protocol operators do not span the state space; reconstruction is underdetermined")]
    Underdetermined,
    #[error("row {row} registered {count} events but the fitted rate vanishes")]
    RankDeficientData { row: usize, count: f64 },
    #[error("no convergence after {iterations} iterations (duality gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },
    #[error("log-likelihood decreased by {0:e}")]
    LikelihoodDecrease(f64),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

pub type Result<T, E = EstimatorError> = std::result::Result<T, E>;

/// Registered event counts for each protocol row.
///
/// Counts are stored as reals so that expected (noiseless) counts can be fed
/// to the estimator unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct CountRecord<T: Real> {
    pub counts: Vec<T>,
    pub protocol: InstrumentalMatrix<T>,
    /// Expected number of events `Σ_j t_jλ_j` for the state the counts came from.
    pub sample_size: T,
}

impl<T: Real> CountRecord<T> {
    pub fn new(protocol: InstrumentalMatrix<T>, counts: Vec<T>, sample_size: T) -> Result<Self> {
        if counts.len() != protocol.len() {
            return Err(EstimatorError::CountLength {
                counts: counts.len(),
                rows: protocol.len(),
            });
        }
        if let Some(c) = counts.iter().find(|c| !(**c >= T::zero())) {
            return Err(EstimatorError::InvalidArgs(format!(
                "negative count {}",
                c.as_f64()
            )));
        }
        Ok(Self {
            counts,
            protocol,
            sample_size,
        })
    }

    pub fn total(&self) -> T {
        self.counts.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// Expected counts `t_jλ_j(ρ)` per row.
pub fn expected_counts<T: Real>(
    x: &InstrumentalMatrix<T>,
    rho: &DensityMatrix<T>,
) -> Result<Vec<T>> {
    let lam = crate::protocol::rates(x, rho)?;
    Ok(lam.iter().zip(x.weights()).map(|(&l, &t)| l * t).collect())
}

/// Independent Poisson counts `k_j ~ Poisson(t_jλ_j(ρ))`.
pub fn sample_counts<T: Real>(
    x: &InstrumentalMatrix<T>,
    rho: &DensityMatrix<T>,
    seed: u64,
) -> Result<CountRecord<T>> {
    sample_counts_with(x, rho, &mut seeded(seed))
}

pub fn sample_counts_with<T: Real, R: Rng + ?Sized>(
    x: &InstrumentalMatrix<T>,
    rho: &DensityMatrix<T>,
    rng: &mut R,
) -> Result<CountRecord<T>> {
    let mean = expected_counts(x, rho)?;
    let total = mean.iter().fold(T::zero(), |a, &b| a + b);
    let counts = mean
        .iter()
        .map(|m| T::lit(poisson(rng, m.as_f64())))
        .collect();
    CountRecord::new(x.clone(), counts, total)
}

/// Counts equal to their expectations (the infinite-sample limit).
pub fn noiseless_counts<T: Real>(
    x: &InstrumentalMatrix<T>,
    rho: &DensityMatrix<T>,
) -> Result<CountRecord<T>> {
    let mean = expected_counts(x, rho)?;
    let total = mean.iter().fold(T::zero(), |a, &b| a + b);
    CountRecord::new(x.clone(), mean, total)
}

/// Degrees of freedom `ν = (2s−r)r − 1` of a rank-`r` state.
pub fn degrees_of_freedom(s: usize, r: usize) -> Result<usize> {
    if s < 2 || r == 0 || r > s {
        return Err(EstimatorError::InvalidArgs(format!("s = {s}, r = {r}")));
    }
    Ok((2 * s - r) * r - 1)
}

/// Lower bound `ν²/(4n(s−1))` on the mean fidelity loss of POVM protocols.
pub fn min_loss(s: usize, r: usize, n: f64) -> Result<f64> {
    let nu = degrees_of_freedom(s, r)? as f64;
    if !(n > 0.0) {
        return Err(EstimatorError::InvalidArgs(format!("sample size {n}")));
    }
    Ok(nu * nu / (4.0 * n * (s as f64 - 1.0)))
}

/// `min_loss / loss`; above one means the POVM bound is beaten.
pub fn efficiency(loss: f64, s: usize, r: usize, n: f64) -> Result<f64> {
    let bound = min_loss(s, r, n)?;
    if loss == 0.0 {
        return Err(EstimatorError::DivisionByZero);
    }
    if !(loss > 0.0) {
        return Err(EstimatorError::InvalidArgs(format!("loss {loss}")));
    }
    Ok(bound / loss)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub loss: f64,
    pub min_loss: f64,
    pub efficiency: f64,
    pub dof: usize,
}

impl AccuracyReport {
    pub fn new(loss: f64, s: usize, r: usize, n: f64) -> Result<Self> {
        Ok(Self {
            loss,
            min_loss: min_loss(s, r, n)?,
            efficiency: efficiency(loss, s, r, n)?,
            dof: degrees_of_freedom(s, r)?,
        })
    }
}

/// Poisson log-likelihood `Σ_j k_j ln(t_jλ_j) − t_jλ_j` of the purification `Ψ`
/// (whose trace carries the intensity).
pub fn log_likelihood<T: Real>(rec: &CountRecord<T>, psi: &PurifiedState<T>) -> Result<T> {
    check_dims(rec, psi)?;
    let rho = psi.matrix() * psi.matrix().adjoint();
    let lam = row_rates(rec.protocol.rows(), &rho);
    Ok(likelihood_from_rates(
        &rec.counts,
        rec.protocol.weights(),
        &lam,
    ))
}

pub(crate) const RATE_FLOOR: f64 = 1e-300;

pub(crate) fn likelihood_from_rates<T: Real>(counts: &[T], weights: &[T], lam: &[T]) -> T {
    let floor = T::positive_floor(RATE_FLOOR);
    counts
        .iter()
        .zip(weights)
        .zip(lam)
        .fold(T::zero(), |acc, ((&k, &t), &l)| {
            let mu = t * l;
            if k > T::zero() {
                acc + k * mu.max(floor).ln() - mu
            } else {
                acc - mu
            }
        })
}

/// `∂ℓ/∂ReΨ + i·∂ℓ/∂ImΨ = 2(R − I)Ψ` with `I = Σt_jΛ_j`, `R = Σ(k_j/λ_j)Λ_j`.
pub fn log_likelihood_gradient<T: Real>(
    rec: &CountRecord<T>,
    psi: &PurifiedState<T>,
) -> Result<CMatrix<T>> {
    check_dims(rec, psi)?;
    let rho = psi.matrix() * psi.matrix().adjoint();
    let lam = row_rates(rec.protocol.rows(), &rho);
    let r = ratio_operator(rec.protocol.rows(), &rec.counts, &lam);
    let i = rec.protocol.weighted_sum();
    Ok((r - i) * psi.matrix() * crate::linalg::real(T::lit(2.0)))
}

/// `Σ_j (k_j/λ_j)·Y_j⁺Y_j` over rows with `k_j > 0`.
pub(crate) fn ratio_operator<T: Real>(rows: &CMatrix<T>, counts: &[T], lam: &[T]) -> CMatrix<T> {
    let floor = T::positive_floor(RATE_FLOOR);
    let mut scaled = rows.clone();
    for j in 0..rows.nrows() {
        let w = if counts[j] > T::zero() {
            counts[j] / lam[j].max(floor)
        } else {
            T::zero()
        };
        scaled.row_mut(j).scale_mut(w);
    }
    rows.adjoint() * scaled
}

fn check_dims<T: Real>(rec: &CountRecord<T>, psi: &PurifiedState<T>) -> Result<()> {
    if rec.protocol.dim() != psi.dim() {
        return Err(ProtocolError::DimensionMismatch {
            expected: rec.protocol.dim(),
            found: psi.dim(),
        }
        .into());
    }
    Ok(())
}
