//! Measurement protocols: instrumental matrices, their operators and their
//! Lorentz transformation.
//!
//! A protocol row `X_j` is a bra; it measures the rank-one operator
//! `Λ_j = X_j⁺X_j` with rate `λ_j = X_j ρ X_j⁺` over an exposure time `t_j`.
//! Rows are always stored with unit norm, so any norm change caused by a
//! transformation lives in the weights.

mod mub;

use nalgebra::ComplexField;
use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{condition_number, real, CMatrix};
use crate::qmat::{DensityMatrix, PurifiedState};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("no mutually unbiased bases implemented for dimension {0}")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {weights} weights")]
    WeightCount { rows: usize, weights: usize },
    #[error("weight {value} at row {row} is negative or not finite")]
    InvalidWeight { row: usize, value: f64 },
    #[error("row {0} has zero norm")]
    ZeroRow(usize),
    #[error("purification must be square and full rank, got {dim}x{rank}")]
    NotSquare { dim: usize, rank: usize },
    #[error("state is singular (condition number {0:e}); regularize its spectrum first")]
    SingularState(f64),
    #[error("total expected rate is zero for the reference state")]
    ZeroRate,
}

pub type Result<T, E = ProtocolError> = std::result::Result<T, E>;

const CONDITION_CUTOFF: f64 = 1e12;

/// `m` unit-norm bra rows with per-row exposure weights.
#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentalMatrix<T: Real> {
    rows: CMatrix<T>,
    weights: Vec<T>,
}

impl<T: Real> InstrumentalMatrix<T> {
    /// Rows are rescaled to unit norm; their squared norms multiply the weights.
    pub fn new(rows: CMatrix<T>, weights: Vec<T>) -> Result<Self> {
        if rows.nrows() != weights.len() {
            return Err(ProtocolError::WeightCount {
                rows: rows.nrows(),
                weights: weights.len(),
            });
        }
        for (row, w) in weights.iter().enumerate() {
            if !(*w >= T::zero()) || !w.as_f64().is_finite() {
                return Err(ProtocolError::InvalidWeight {
                    row,
                    value: w.as_f64(),
                });
            }
        }
        let mut out = Self { rows, weights };
        out.fold_norms_into_weights()?;
        Ok(out)
    }

    fn fold_norms_into_weights(&mut self) -> Result<()> {
        for j in 0..self.rows.nrows() {
            let n2 = self.rows.row(j).norm_squared();
            if !(n2 > T::zero()) {
                return Err(ProtocolError::ZeroRow(j));
            }
            self.rows.row_mut(j).scale_mut(T::one() / n2.sqrt());
            self.weights[j] *= n2;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Number of rows `m`.
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    /// The `m×s` matrix of unit-norm bras.
    pub fn rows(&self) -> &CMatrix<T> {
        &self.rows
    }

    /// Row `j` as a `1×s` bra.
    pub fn row(&self, j: usize) -> CMatrix<T> {
        self.rows.rows(j, 1).into_owned()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Same rows, every weight multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            rows: self.rows.clone(),
            weights: self.weights.iter().map(|&w| w * factor).collect(),
        }
    }

    /// Same rows with the given weights.
    pub fn with_weights(&self, weights: Vec<T>) -> Result<Self> {
        Self::new(self.rows.clone(), weights)
    }

    /// `Σ_j t_jΛ_j = X⁺·diag(t)·X`.
    pub fn weighted_sum(&self) -> CMatrix<T> {
        let mut scaled = self.rows.clone();
        for (j, &w) in self.weights.iter().enumerate() {
            scaled.row_mut(j).scale_mut(w);
        }
        self.rows.adjoint() * scaled
    }
}

/// Rank-one operator `Λ_j = X_j⁺X_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementOperator<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> MeasurementOperator<T> {
    pub fn from_bra(bra: &CMatrix<T>) -> Self {
        Self {
            matrix: bra.adjoint() * bra,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    /// `Tr(Λρ)`.
    pub fn expectation(&self, rho: &DensityMatrix<T>) -> T {
        (&self.matrix * rho.matrix()).trace().re
    }
}

/// Unimodular `s×s` matrix acting as `ρ → LρL⁺` and `X → XL`.
#[derive(Clone, Debug, PartialEq)]
pub struct LorentzTransform<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> LorentzTransform<T> {
    /// Rescales any invertible matrix to unit determinant.
    pub fn unimodular(m: CMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(ProtocolError::NotSquare {
                dim: m.nrows(),
                rank: m.ncols(),
            });
        }
        let s = m.nrows();
        let det = m.determinant();
        if !(det.modulus() > T::zero()) {
            return Err(ProtocolError::SingularState(f64::INFINITY));
        }
        let root = principal_root(det, s);
        Ok(Self {
            matrix: m * (Complex::new(T::one(), T::zero()) / root),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn determinant(&self) -> Complex<T> {
        self.matrix.determinant()
    }

    /// `LρL⁺`.
    pub fn transform_state(&self, rho: &DensityMatrix<T>) -> DensityMatrix<T> {
        rho.conjugate_by(&self.matrix)
    }
}

fn principal_root<T: Real>(z: Complex<T>, s: usize) -> Complex<T> {
    let inv = T::one() / T::lit(s as f64);
    let r = z.modulus().powf(inv);
    let phi = z.argument() * inv;
    Complex::new(r * phi.cos(), r * phi.sin())
}

/// `s(s+1)` rows forming `s+1` mutually unbiased bases, unit weights.
///
/// Row order is basis-major. The computational basis is first.
pub fn mub_protocol<T: Real>(s: usize) -> Result<InstrumentalMatrix<T>> {
    let kets = mub::kets(s).ok_or(ProtocolError::UnsupportedDimension(s))?;
    let m = kets.len();
    let rows = CMatrix::from_fn(m, s, |j, x| {
        let z = kets[j][x].conj();
        Complex::new(T::lit(z.re), T::lit(z.im))
    });
    Ok(InstrumentalMatrix {
        rows,
        weights: vec![T::one(); m],
    })
}

/// Dimensions accepted by [`mub_protocol`].
pub fn supported_dimensions() -> &'static [usize] {
    &mub::SUPPORTED
}

pub fn measurement_operators<T: Real>(x: &InstrumentalMatrix<T>) -> Vec<MeasurementOperator<T>> {
    (0..x.len())
        .map(|j| MeasurementOperator::from_bra(&x.row(j)))
        .collect()
}

/// Largest entry of `Σ_j t_jΛ_j − c·I` with `c = Tr(Σ_j t_jΛ_j)/s`.
///
/// Zero exactly when the weighted operators resolve a multiple of the identity.
pub fn povm_defect<T: Real>(x: &InstrumentalMatrix<T>) -> T {
    let sum = x.weighted_sum();
    let s = x.dim();
    let c = sum.trace() / real(T::lit(s as f64));
    let diff = sum - CMatrix::identity(s, s) * c;
    crate::linalg::max_abs(&diff)
}

/// `L = Ψ⁻¹/√s` rescaled to unit determinant, which maps `ΨΨ⁺` to a multiple
/// of the identity.
pub fn lorentz_of_state<T: Real>(psi: &PurifiedState<T>) -> Result<LorentzTransform<T>> {
    let (s, r) = (psi.dim(), psi.rank());
    if s != r {
        return Err(ProtocolError::NotSquare { dim: s, rank: r });
    }
    let cond = condition_number(psi.matrix());
    if !(cond < T::lit(CONDITION_CUTOFF)) {
        return Err(ProtocolError::SingularState(cond.as_f64()));
    }
    let inv = psi
        .matrix()
        .clone()
        .try_inverse()
        .ok_or(ProtocolError::SingularState(cond.as_f64()))?;
    LorentzTransform::unimodular(inv * real(T::one() / T::lit(s as f64).sqrt()))
}

/// Rows `X_jL`, renormalized, with each weight multiplied by `‖X_jL‖²`.
pub fn apply_lorentz<T: Real>(
    x: &InstrumentalMatrix<T>,
    l: &LorentzTransform<T>,
) -> Result<InstrumentalMatrix<T>> {
    if x.dim() != l.dim() {
        return Err(ProtocolError::DimensionMismatch {
            expected: x.dim(),
            found: l.dim(),
        });
    }
    InstrumentalMatrix::new(&x.rows * &l.matrix, x.weights.clone())
}

/// `λ_j = X_j ρ X_j⁺`, clamped at zero.
pub fn rates<T: Real>(x: &InstrumentalMatrix<T>, rho: &DensityMatrix<T>) -> Result<Vec<T>> {
    if x.dim() != rho.dim() {
        return Err(ProtocolError::DimensionMismatch {
            expected: x.dim(),
            found: rho.dim(),
        });
    }
    Ok(row_rates(&x.rows, rho.matrix()))
}

pub(crate) fn row_rates<T: Real>(rows: &CMatrix<T>, rho: &CMatrix<T>) -> Vec<T> {
    let xr = rows * rho;
    (0..rows.nrows())
        .map(|j| {
            let v = xr
                .row(j)
                .iter()
                .zip(rows.row(j).iter())
                .fold(T::zero(), |acc, (a, b)| acc + (a * b.conj()).re);
            v.max(T::zero())
        })
        .collect()
}

/// One common rescaling of all weights such that `Σ_j t_jλ_j(ρ_ref) = n`.
pub fn normalize_exposure<T: Real>(
    x: &InstrumentalMatrix<T>,
    rho_ref: &DensityMatrix<T>,
    n: T,
) -> Result<InstrumentalMatrix<T>> {
    let lam = rates(x, rho_ref)?;
    let total = lam
        .iter()
        .zip(&x.weights)
        .fold(T::zero(), |acc, (&l, &t)| acc + l * t);
    if !(total > T::zero()) {
        return Err(ProtocolError::ZeroRate);
    }
    Ok(x.scaled(n / total))
}
