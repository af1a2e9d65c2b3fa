//! Qubit specialization: Stokes four-vectors, spinor boosts and the polarimeter.
//!
//! Conventions: `|V⟩ = (1,0)ᵀ`, `|H⟩ = (0,1)ᵀ`, standard Pauli matrices, and
//! `ρ = ½(P₀·I + P⃗·σ⃗)`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cplx, real, trace_re, CMatrix};
use crate::qmat::DensityMatrix;
use crate::rng::{poisson, seeded};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StokesError {
    #[error("expected a qubit (dimension 2), found dimension {0}")]
    DimensionMismatch(usize),
    #[error("Stokes vector length {length:e} exceeds intensity {intensity:e}")]
    UnphysicalVector { intensity: f64, length: f64 },
    #[error("pure state has no rest frame")]
    PureStateNoRestFrame,
    #[error("boost direction has norm {0}, expected 1")]
    InvalidDirection(f64),
}

const PHYSICAL_TOL: f64 = 1e-12;
const PURITY_TOL: f64 = 1e-14;

/// `(P₀, P₁, P₂, P₃)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesFourVector<T> {
    pub p0: T,
    pub p1: T,
    pub p2: T,
    pub p3: T,
}

impl<T: Real> StokesFourVector<T> {
    pub fn new(p0: T, p1: T, p2: T, p3: T) -> Self {
        Self { p0, p1, p2, p3 }
    }

    /// `|P⃗|`.
    pub fn spatial_norm(&self) -> T {
        (self.p1 * self.p1 + self.p2 * self.p2 + self.p3 * self.p3).sqrt()
    }

    /// Squared interval `P₀² − P⃗²`.
    pub fn interval2(&self) -> T {
        self.p0 * self.p0 - (self.p1 * self.p1 + self.p2 * self.p2 + self.p3 * self.p3)
    }

    pub fn is_physical(&self) -> bool {
        self.p0 >= self.spatial_norm() - T::scaled_tol(PHYSICAL_TOL) * self.p0.abs()
    }
}

/// Boost along unit direction `n⃗` with rapidity `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams<T> {
    pub direction: [T; 3],
    pub rapidity: T,
}

impl<T: Real> BoostParams<T> {
    pub fn new(direction: [T; 3], rapidity: T) -> Result<Self, StokesError> {
        let n = direction.iter().fold(T::zero(), |a, &d| a + d * d).sqrt();
        if (n - T::one()).abs() > T::scaled_tol(PHYSICAL_TOL) {
            return Err(StokesError::InvalidDirection(n.as_f64()));
        }
        Ok(Self {
            direction,
            rapidity,
        })
    }

    /// `v = tanh θ`.
    pub fn speed(&self) -> T {
        self.rapidity.tanh()
    }
}

/// `σ₁, σ₂, σ₃`.
pub fn pauli<T: Real>() -> [CMatrix<T>; 3] {
    let m =
        |a: [(f64, f64); 4]| CMatrix::from_row_slice(2, 2, &a.map(|(re, im)| cplx::<T>(re, im)));
    [
        m([(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]),
        m([(0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (0.0, 0.0)]),
        m([(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)]),
    ]
}

fn require_qubit<T: Real>(rho: &DensityMatrix<T>) -> Result<(), StokesError> {
    if rho.dim() != 2 {
        return Err(StokesError::DimensionMismatch(rho.dim()));
    }
    Ok(())
}

pub fn stokes_of<T: Real>(rho: &DensityMatrix<T>) -> Result<StokesFourVector<T>, StokesError> {
    require_qubit(rho)?;
    let m = rho.matrix();
    let [s1, s2, s3] = pauli::<T>();
    Ok(StokesFourVector {
        p0: rho.trace(),
        p1: trace_re(&(m * s1)),
        p2: trace_re(&(m * s2)),
        p3: trace_re(&(m * s3)),
    })
}

pub fn density_of_stokes<T: Real>(
    p: &StokesFourVector<T>,
) -> Result<DensityMatrix<T>, StokesError> {
    if !p.is_physical() {
        return Err(StokesError::UnphysicalVector {
            intensity: p.p0.as_f64(),
            length: p.spatial_norm().as_f64(),
        });
    }
    let h = T::lit(0.5);
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            real(h * (p.p0 + p.p3)),
            Complex::new(h * p.p1, -h * p.p2),
            Complex::new(h * p.p1, h * p.p2),
            real(h * (p.p0 - p.p3)),
        ],
    );
    DensityMatrix::new(m).map_err(|_| StokesError::UnphysicalVector {
        intensity: p.p0.as_f64(),
        length: p.spatial_norm().as_f64(),
    })
}

/// `L = cosh(θ/2)·I − sinh(θ/2)·(σ⃗·n⃗)`; Hermitian with unit determinant.
pub fn boost<T: Real>(b: &BoostParams<T>) -> CMatrix<T> {
    let half = b.rapidity * T::lit(0.5);
    let (c, s) = (half.cosh(), half.sinh());
    let sig = pauli::<T>();
    let mut l = CMatrix::identity(2, 2) * real(c);
    for (k, sk) in sig.iter().enumerate() {
        l -= sk * real(s * b.direction[k]);
    }
    l
}

/// Boost taking `ρ` to its rest frame, where the Stokes vector vanishes.
pub fn rest_frame_boost<T: Real>(rho: &DensityMatrix<T>) -> Result<BoostParams<T>, StokesError> {
    require_qubit(rho)?;
    let tr = rho.trace();
    if !(rho.determinant() > T::lit(PURITY_TOL) * tr * tr) {
        return Err(StokesError::PureStateNoRestFrame);
    }
    let p = stokes_of(rho)?;
    let len = p.spatial_norm();
    if len == T::zero() {
        return Ok(BoostParams {
            direction: [T::zero(), T::zero(), T::one()],
            rapidity: T::zero(),
        });
    }
    let v = len / p.p0;
    Ok(BoostParams {
        direction: [p.p1 / len, p.p2 / len, p.p3 / len],
        rapidity: v.atanh(),
    })
}

/// `P₀² − P⃗²`, equal to `4·det ρ`.
pub fn interval2<T: Real>(rho: &DensityMatrix<T>) -> Result<T, StokesError> {
    Ok(stokes_of(rho)?.interval2())
}

/// Wave-plate setting in front of the polarizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolarimeterBasis {
    /// Measures `P₁`.
    U1,
    /// Measures `P₂`.
    U2,
    /// Identity; measures `P₃`.
    U3,
}

impl PolarimeterBasis {
    pub const ALL: [Self; 3] = [Self::U1, Self::U2, Self::U3];

    pub fn unitary<T: Real>(self) -> CMatrix<T> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let e = match self {
            Self::U1 => [(r, 0.0), (r, 0.0), (r, 0.0), (-r, 0.0)],
            Self::U2 => [(r, 0.0), (0.0, -r), (r, 0.0), (0.0, r)],
            Self::U3 => [(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
        };
        CMatrix::from_row_slice(2, 2, &e.map(|(re, im)| cplx::<T>(re, im)))
    }
}

/// Expected `(N_V, N_H)` for a given exposure duration.
pub fn polarimeter_expected<T: Real>(
    rho: &DensityMatrix<T>,
    basis: PolarimeterBasis,
    duration: f64,
) -> Result<(f64, f64), StokesError> {
    require_qubit(rho)?;
    let rotated = rho.conjugate_by(&basis.unitary());
    let m = rotated.matrix();
    let v = m[(0, 0)].re.as_f64().max(0.0);
    let h = m[(1, 1)].re.as_f64().max(0.0);
    Ok((duration * v, duration * h))
}

/// Poisson photon counts `(N_V, N_H)` behind the polarizer.
pub fn polarimeter_counts<T: Real>(
    rho: &DensityMatrix<T>,
    basis: PolarimeterBasis,
    duration: f64,
    seed: u64,
) -> Result<(u64, u64), StokesError> {
    let (ev, eh) = polarimeter_expected(rho, basis, duration)?;
    let mut rng = seeded(seed);
    let nv = poisson(&mut rng, ev);
    let nh = poisson(&mut rng, eh);
    Ok((nv as u64, nh as u64))
}

/// `((N_V+N_H)/τ, (N_V−N_H)/τ)`: estimates of `P₀` and the probed component.
pub fn estimate_components(nv: u64, nh: u64, duration: f64) -> (f64, f64) {
    (
        (nv + nh) as f64 / duration,
        (nv as f64 - nh as f64) / duration,
    )
}
