//! Density matrices, purifications, fidelity and random state generation.
//!
//! The trace of a [`DensityMatrix`] is an intensity and is not forced to one.
//! Routines that need a normalized state say so and never rescale on their own.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    complex_gaussian_matrix, compose, haar_unitary, hermitian_part, hermitian_sqrt, max_abs,
    nuclear_norm, real, trace_re, CMatrix, HermitianEigen,
};
use crate::rng::seeded;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("trace {0:e} must be positive")]
    NonPositiveTrace(f64),
    #[error("state trace {0} differs from one; normalize first")]
    NotNormalized(f64),
    #[error("rank {requested} is below the numerical rank {rank}")]
    RankTooSmall { requested: usize, rank: usize },
    #[error("rank {rank} invalid for dimension {dim}")]
    InvalidRank { dim: usize, rank: usize },
    #[error("dimension {0} too small, need at least 2")]
    InvalidDimension(usize),
    #[error("dominant weight {weight} outside ({lower}, 1]")]
    InvalidWeight { weight: f64, lower: f64 },
}

pub type Result<T, E = StateError> = std::result::Result<T, E>;

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-12;
const UNIT_TRACE_TOL: f64 = 1e-9;

/// Hermitian positive-semidefinite `s×s` matrix with positive trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates Hermiticity, positivity and trace (all relative to the trace).
    pub fn new(m: CMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(StateError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() < 2 {
            return Err(StateError::InvalidDimension(m.nrows()));
        }
        let tr = trace_re(&m);
        if !(tr > T::zero()) {
            return Err(StateError::NonPositiveTrace(tr.as_f64()));
        }
        let dev = max_abs(&(&m - m.adjoint()));
        if dev > T::scaled_tol(HERMITIAN_TOL) * tr {
            return Err(StateError::NotHermitian(dev.as_f64()));
        }
        let out = Self::from_hermitian(m);
        let low = *out.eigen().values.last().unwrap();
        if low < -T::scaled_tol(PSD_TOL) * tr {
            return Err(StateError::NotPositive(low.as_f64()));
        }
        Ok(out)
    }

    /// Wraps a matrix known to be Hermitian PSD up to rounding, symmetrizing it.
    pub(crate) fn from_hermitian(m: CMatrix<T>) -> Self {
        Self {
            m: hermitian_part(&m),
        }
    }

    /// `I/s`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let w = T::one() / T::lit(dim as f64);
        Self {
            m: CMatrix::identity(dim, dim) * real(w),
        }
    }

    /// Projector `c c⁺` onto a (not necessarily normalized) ket.
    pub fn from_ket(c: &CMatrix<T>) -> Self {
        Self::from_hermitian(c * c.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.m
    }

    pub fn trace(&self) -> T {
        trace_re(&self.m)
    }

    /// The same state scaled to unit trace.
    pub fn normalized(&self) -> Self {
        let tr = self.trace();
        Self {
            m: &self.m * real(T::one() / tr),
        }
    }

    /// Eigenpairs, eigenvalues descending.
    pub fn eigen(&self) -> HermitianEigen<T> {
        HermitianEigen::new(&self.m)
    }

    pub fn determinant(&self) -> T {
        self.m.determinant().re
    }

    /// Number of eigenvalues above `1e-12·Tr ρ`.
    pub fn numerical_rank(&self) -> usize {
        let cut = T::scaled_tol(RANK_TOL) * self.trace();
        self.eigen().values.iter().filter(|&&v| v > cut).count()
    }

    /// `U ρ U⁺`.
    pub fn conjugate_by(&self, u: &CMatrix<T>) -> Self {
        Self::from_hermitian(u * &self.m * u.adjoint())
    }

    fn require_unit_trace(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - T::one()).abs() > T::scaled_tol(UNIT_TRACE_TOL) {
            return Err(StateError::NotNormalized(tr.as_f64()));
        }
        Ok(())
    }
}

/// `s×r` amplitude matrix `Ψ` with `ρ = ΨΨ⁺`.
#[derive(Clone, Debug, PartialEq)]
pub struct PurifiedState<T: Real> {
    psi: CMatrix<T>,
}

impl<T: Real> PurifiedState<T> {
    pub fn new(psi: CMatrix<T>) -> Result<Self> {
        let (s, r) = psi.shape();
        if s < 2 {
            return Err(StateError::InvalidDimension(s));
        }
        if r == 0 || r > s {
            return Err(StateError::InvalidRank { dim: s, rank: r });
        }
        Ok(Self { psi })
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn rank(&self) -> usize {
        self.psi.ncols()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.psi
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.psi
    }

    /// `ΨU` for an `r×r` unitary `U`; describes the same density matrix.
    pub fn regauge(&self, u: &CMatrix<T>) -> Result<Self> {
        if u.nrows() != self.rank() || !u.is_square() {
            return Err(StateError::DimensionMismatch {
                expected: self.rank(),
                found: u.nrows(),
            });
        }
        Ok(Self { psi: &self.psi * u })
    }

    pub fn density(&self) -> DensityMatrix<T> {
        density_of(self)
    }
}

pub fn density_of<T: Real>(psi: &PurifiedState<T>) -> DensityMatrix<T> {
    DensityMatrix::from_hermitian(&psi.psi * psi.psi.adjoint())
}

/// Columns `√λᵢ·vᵢ` for the `r` largest eigenpairs of `ρ`.
pub fn purify<T: Real>(rho: &DensityMatrix<T>, r: usize) -> Result<PurifiedState<T>> {
    let s = rho.dim();
    if r == 0 || r > s {
        return Err(StateError::InvalidRank { dim: s, rank: r });
    }
    let eig = rho.eigen();
    let cut = T::scaled_tol(RANK_TOL) * rho.trace();
    let rank = eig.values.iter().filter(|&&v| v > cut).count();
    if r < rank {
        return Err(StateError::RankTooSmall { requested: r, rank });
    }
    let mut psi = eig.vectors.columns(0, r).into_owned();
    for (j, v) in eig.values.iter().take(r).enumerate() {
        psi.column_mut(j).scale_mut(v.max(T::zero()).sqrt());
    }
    Ok(PurifiedState { psi })
}

/// The Hermitian purification `Ψ = √ρ` (rank `s`).
///
/// Unlike [`purify`], its columns are not aligned with the eigenbasis of `ρ`.
pub fn hermitian_purification<T: Real>(rho: &DensityMatrix<T>) -> PurifiedState<T> {
    PurifiedState {
        psi: hermitian_sqrt(&rho.m),
    }
}

/// Uhlmann fidelity `(Tr √(√ρ·ρ₀·√ρ))²` of two unit-trace states.
///
/// Evaluated as the squared nuclear norm of `√ρ·√ρ₀`, which is the same
/// quantity and is symmetric in its arguments by construction.
pub fn fidelity<T: Real>(rho: &DensityMatrix<T>, rho0: &DensityMatrix<T>) -> Result<T> {
    if rho.dim() != rho0.dim() {
        return Err(StateError::DimensionMismatch {
            expected: rho.dim(),
            found: rho0.dim(),
        });
    }
    rho.require_unit_trace()?;
    rho0.require_unit_trace()?;
    let a = hermitian_sqrt(&rho.m);
    let b = hermitian_sqrt(&rho0.m);
    let f = nuclear_norm(&(a * b));
    Ok((f * f).min(T::one()))
}

/// Parameters of a random state with one dominant eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateGenConfig {
    pub dim: usize,
    pub rank: usize,
    pub dominant_weight: f64,
    pub seed: u64,
}

impl StateGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(StateError::InvalidDimension(self.dim));
        }
        if self.rank == 0 || self.rank > self.dim {
            return Err(StateError::InvalidRank {
                dim: self.dim,
                rank: self.rank,
            });
        }
        check_weight(self.dominant_weight, self.dim)?;
        if self.rank == 1 && self.dominant_weight != 1.0 {
            // a rank-one state has nowhere to put the remaining weight
            return Err(StateError::InvalidWeight {
                weight: self.dominant_weight,
                lower: 1.0 / self.dim as f64,
            });
        }
        Ok(())
    }

    /// `(λ₀, (1−λ₀)/(r−1), …)` padded with zeros to length `s`.
    pub fn spectrum(&self) -> Vec<f64> {
        dominant_spectrum(self.dominant_weight, self.rank, self.dim)
    }
}

fn check_weight(w: f64, dim: usize) -> Result<()> {
    let lower = 1.0 / dim as f64;
    if !(w > lower && w <= 1.0) {
        return Err(StateError::InvalidWeight { weight: w, lower });
    }
    Ok(())
}

fn dominant_spectrum(w: f64, rank: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    out[0] = w;
    if rank > 1 {
        let rest = (1.0 - w) / (rank - 1) as f64;
        out[1..rank].iter_mut().for_each(|v| *v = rest);
    }
    out
}

/// Unit-trace state with the configured spectrum and Haar-random eigenvectors.
pub fn random_mixed_state<T: Real>(cfg: &StateGenConfig) -> Result<DensityMatrix<T>> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let u = haar_unitary::<T, _>(cfg.dim, &mut rng);
    let spectrum: Vec<T> = cfg.spectrum().into_iter().map(T::lit).collect();
    Ok(DensityMatrix::from_hermitian(compose(&u, &spectrum)))
}

/// Keeps the eigenvectors of `ρ` and imposes the spectrum
/// `(λ₀, (1−λ₀)/(s−1), …)` in descending order.
pub fn regularize_spectrum<T: Real>(
    rho: &DensityMatrix<T>,
    weight: f64,
) -> Result<DensityMatrix<T>> {
    let s = rho.dim();
    check_weight(weight, s)?;
    let eig = rho.eigen();
    let spectrum: Vec<T> = dominant_spectrum(weight, s, s)
        .into_iter()
        .map(T::lit)
        .collect();
    Ok(DensityMatrix::from_hermitian(compose(
        &eig.vectors,
        &spectrum,
    )))
}

/// `(A + A⁺)/2` with i.i.d. standard complex Gaussian `A` (`E|aᵢⱼ|² = 1`).
pub fn random_hermitian<T: Real>(dim: usize, seed: u64) -> CMatrix<T> {
    let mut rng = seeded(seed);
    let a = complex_gaussian_matrix::<T, _>(dim, dim, &mut rng);
    let mut h = hermitian_part(&a);
    for i in 0..dim {
        h[(i, i)] = Complex::new(h[(i, i)].re, T::zero());
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cplx;
    use approx::assert_abs_diff_eq;

    fn diag(v: &[f64]) -> CMatrix<f64> {
        CMatrix::from_fn(v.len(), v.len(), |i, j| {
            if i == j {
                cplx(v[i], 0.0)
            } else {
                cplx(0.0, 0.0)
            }
        })
    }

    fn random_state(dim: usize, rank: usize, w: f64, seed: u64) -> DensityMatrix<f64> {
        random_mixed_state(&StateGenConfig {
            dim,
            rank,
            dominant_weight: w,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn density_of_basis_column() {
        let psi = PurifiedState::new(CMatrix::from_column_slice(
            2,
            1,
            &[cplx(1.0, 0.0), cplx(0.0, 0.0)],
        ))
        .unwrap();
        let rho = density_of(&psi);
        assert!(max_abs(&(rho.matrix() - diag(&[1.0, 0.0]))) < 1e-15);
    }

    #[test]
    fn density_of_scaled_identity() {
        let psi =
            PurifiedState::new(CMatrix::<f64>::identity(2, 2) * cplx(0.5f64.sqrt(), 0.0)).unwrap();
        let rho = density_of(&psi);
        assert!(max_abs(&(rho.matrix() - diag(&[0.5, 0.5]))) < 1e-15);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gauge_freedom() {
        let mut rng = seeded(5);
        let psi = PurifiedState::new(complex_gaussian_matrix::<f64, _>(3, 2, &mut rng)).unwrap();
        let u = haar_unitary::<f64, _>(2, &mut rng);
        let a = density_of(&psi);
        let b = density_of(&psi.regauge(&u).unwrap());
        assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-12);
    }

    #[test]
    fn purify_pure_projector() {
        let rho = DensityMatrix::new(diag(&[1.0, 0.0])).unwrap();
        let psi = purify(&rho, 1).unwrap();
        assert_abs_diff_eq!(psi.matrix()[(0, 0)].norm(), 1.0, epsilon = 1e-15);
        assert!(psi.matrix()[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn purify_round_trips() {
        let rho = DensityMatrix::new(diag(&[0.5, 0.5])).unwrap();
        let back = density_of(&purify(&rho, 2).unwrap());
        assert!(max_abs(&(back.matrix() - rho.matrix())) < 1e-12);

        let rho = random_state(4, 4, 0.7, 13);
        let back = density_of(&purify(&rho, 4).unwrap());
        assert!(max_abs(&(back.matrix() - rho.matrix())) < 1e-10);
    }

    #[test]
    fn purify_rejects_lossy_rank() {
        let rho = random_state(4, 3, 0.7, 2);
        assert_eq!(
            purify(&rho, 2).unwrap_err(),
            StateError::RankTooSmall {
                requested: 2,
                rank: 3
            }
        );
        assert!(purify(&rho, 3).is_ok());
    }

    #[test]
    fn hermitian_purification_reproduces_state() {
        let rho = random_state(5, 5, 0.9, 4);
        let psi = hermitian_purification(&rho);
        assert!(max_abs(&(density_of(&psi).matrix() - rho.matrix())) < 1e-12);
        assert!(max_abs(&(psi.matrix() - psi.matrix().adjoint())) < 1e-14);
    }

    #[test]
    fn fidelity_cases() {
        let rho = random_state(3, 3, 0.6, 1);
        assert_abs_diff_eq!(fidelity(&rho, &rho).unwrap(), 1.0, epsilon = 1e-12);

        let a = DensityMatrix::new(diag(&[1.0, 0.0])).unwrap();
        let b = DensityMatrix::new(diag(&[0.0, 1.0])).unwrap();
        assert!(fidelity(&a, &b).unwrap() < 1e-15);

        let mut rng = seeded(9);
        let u = haar_unitary::<f64, _>(2, &mut rng);
        let v = haar_unitary::<f64, _>(2, &mut rng);
        let (ka, kb) = (u.columns(0, 1).into_owned(), v.columns(0, 1).into_owned());
        let overlap = (ka.adjoint() * &kb)[(0, 0)].norm_sqr();
        let f = fidelity(&DensityMatrix::from_ket(&ka), &DensityMatrix::from_ket(&kb)).unwrap();
        assert_abs_diff_eq!(f, overlap, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_matches_eigen_oracle_and_is_symmetric() {
        for seed in 0..10 {
            let a = random_state(4, 4, 0.8, seed);
            // full rank: the eigen oracle loses accuracy on zero eigenvalues (√1e-17 ≈ 3e-9)
            let b = random_state(4, 4, 0.6, 100 + seed);
            let sa = hermitian_sqrt(a.matrix());
            let inner = HermitianEigen::new(&(&sa * b.matrix() * &sa));
            let tr: f64 = inner.values.iter().map(|v| v.max(0.0).sqrt()).sum();
            let fab = fidelity(&a, &b).unwrap();
            assert_abs_diff_eq!(fab, tr * tr, epsilon = 1e-10);
            assert_abs_diff_eq!(fab, fidelity(&b, &a).unwrap(), epsilon = 1e-10);
            assert!((0.0..=1.0 + 1e-10).contains(&fab));
        }
    }

    #[test]
    fn fidelity_requires_normalized_inputs() {
        let a = DensityMatrix::new(diag(&[2.0, 0.0])).unwrap();
        let b = DensityMatrix::new(diag(&[1.0, 0.0])).unwrap();
        assert!(matches!(
            fidelity(&a, &b),
            Err(StateError::NotNormalized(_))
        ));
    }

    #[test]
    fn random_mixed_state_spectrum() {
        let rho = random_state(8, 8, 0.9999, 21);
        let eig = rho.eigen();
        assert_abs_diff_eq!(eig.values[0], 0.9999, epsilon = 1e-12);
        for v in &eig.values[1..] {
            assert_abs_diff_eq!(*v, 0.0001 / 7.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);

        let pure = random_state(2, 1, 1.0, 3);
        assert_abs_diff_eq!(pure.trace(), 1.0, epsilon = 1e-14);
        assert_eq!(pure.numerical_rank(), 1);
    }

    #[test]
    fn random_mixed_state_is_deterministic() {
        let a = random_state(8, 8, 0.9999, 77);
        let b = random_state(8, 8, 0.9999, 77);
        assert_eq!(a, b);
    }

    #[test]
    fn random_mixed_state_rejects_bad_weight() {
        let cfg = StateGenConfig {
            dim: 4,
            rank: 4,
            dominant_weight: 0.2,
            seed: 0,
        };
        assert!(matches!(
            random_mixed_state::<f64>(&cfg),
            Err(StateError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn regularize_pure_qubit() {
        let rho = DensityMatrix::new(diag(&[0.0, 1.0])).unwrap();
        let out = regularize_spectrum(&rho, 0.9999).unwrap();
        let eig = out.eigen();
        assert_abs_diff_eq!(eig.values[0], 0.9999, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 0.0001, epsilon = 1e-12);
        // dominant weight lands on the dominant eigenvector of the input
        assert_abs_diff_eq!(out.matrix()[(1, 1)].re, 0.9999, epsilon = 1e-12);
    }

    #[test]
    fn regularize_degenerate_input_uses_index_order() {
        let rho = DensityMatrix::<f64>::maximally_mixed(8);
        let out = regularize_spectrum(&rho, 0.9999).unwrap();
        let eig = out.eigen();
        assert_abs_diff_eq!(eig.values[0], 0.9999, epsilon = 1e-12);
        for v in &eig.values[1..] {
            assert_abs_diff_eq!(*v, 0.0001 / 7.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(out.matrix()[(0, 0)].re, 0.9999, epsilon = 1e-12);
    }

    #[test]
    fn regularize_commutes_with_input() {
        let rho = random_state(6, 4, 0.8, 8);
        let out = regularize_spectrum(&rho, 0.9999).unwrap();
        let c = rho.matrix() * out.matrix() - out.matrix() * rho.matrix();
        assert!(max_abs(&c) < 1e-10);
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn random_hermitian_properties() {
        let h = random_hermitian::<f64>(5, 3);
        assert!(max_abs(&(&h - h.adjoint())) <= 1e-15);
        assert_eq!(h, random_hermitian::<f64>(5, 3));
    }

    #[test]
    fn random_hermitian_entry_variance() {
        // off-diagonal E|h|² = 1/2, diagonal E h² = 1/2
        let draws = 10_000;
        let (mut off, mut dia) = (0.0, 0.0);
        for seed in 0..draws {
            let h = random_hermitian::<f64>(2, seed);
            off += h[(0, 1)].norm_sqr();
            dia += h[(0, 0)].re * h[(0, 0)].re;
        }
        let (off, dia) = (off / draws as f64, dia / draws as f64);
        assert!((off - 0.5).abs() < 0.025, "{off}");
        assert!((dia - 0.5).abs() < 0.025, "{dia}");
    }

    #[test]
    fn new_rejects_invalid_matrices() {
        assert!(matches!(
            DensityMatrix::new(diag(&[1.0, -0.5])),
            Err(StateError::NotPositive(_))
        ));
        let mut m = diag(&[0.5, 0.5]);
        m[(0, 1)] = cplx(0.1, 0.0);
        assert!(matches!(
            DensityMatrix::new(m),
            Err(StateError::NotHermitian(_))
        ));
        assert!(matches!(
            DensityMatrix::new(diag(&[0.0, 0.0])),
            Err(StateError::NonPositiveTrace(_))
        ));
    }

    #[test]
    fn single_precision_state_algebra() {
        let cfg = StateGenConfig {
            dim: 4,
            rank: 4,
            dominant_weight: 0.9,
            seed: 1,
        };
        let rho = random_mixed_state::<f32>(&cfg).unwrap();
        let f = fidelity(&rho, &rho).unwrap();
        assert!((f - 1.0).abs() < 1e-4);
    }
}
