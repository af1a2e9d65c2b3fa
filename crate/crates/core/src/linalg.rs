//! Dense complex linear-algebra helpers on top of `nalgebra`.
//!
//! Every matrix in the crate is small (dimension ≤ a few dozen), so everything
//! is heap-allocated `DMatrix` and favours clarity over blocking.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

#[inline]
pub fn cplx<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::lit(re), T::lit(im))
}

#[inline]
pub fn real<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// Largest entry modulus.
pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(z.modulus()))
}

pub fn trace_re<T: Real>(m: &CMatrix<T>) -> T {
    m.diagonal().iter().fold(T::zero(), |acc, z| acc + z.re)
}

/// Hermitian part `(m + m⁺)/2`.
pub fn hermitian_part<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    (m + m.adjoint()) * real(T::lit(0.5))
}

pub fn commutator<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a * b - b * a
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
///
/// Equal eigenvalues keep the order in which the solver produced them.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T: Real> {
    pub values: Vec<T>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: CMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn new(m: &CMatrix<T>) -> Self {
        let eig = hermitian_part(m).symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        // stable: ties resolved by solver index
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    /// Rebuilds `V · diag(f(λ)) · V⁺`.
    pub fn map(&self, f: impl Fn(T) -> T) -> CMatrix<T> {
        let scaled: Vec<T> = self.values.iter().map(|&v| f(v)).collect();
        compose(&self.vectors, &scaled)
    }
}

/// `V · diag(values) · V⁺` for a column-eigenvector matrix `V`.
pub fn compose<T: Real>(vectors: &CMatrix<T>, values: &[T]) -> CMatrix<T> {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * vectors.adjoint()
}

/// Principal square root of a Hermitian PSD matrix; eigenvalues below zero are
/// clamped to zero.
pub fn hermitian_sqrt<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    HermitianEigen::new(m).map(|v| v.max(T::zero()).sqrt())
}

/// `exp(−i·t·H)` for Hermitian `H`, through its eigen-decomposition.
pub fn unitary_propagator<T: Real>(h: &CMatrix<T>, t: T) -> CMatrix<T> {
    let eig = HermitianEigen::new(h);
    let mut scaled = eig.vectors.clone();
    for (j, &e) in eig.values.iter().enumerate() {
        let phase = ComplexField::exp(Complex::new(T::zero(), -(t * e)));
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= phase);
    }
    scaled * eig.vectors.adjoint()
}

/// Sum of singular values.
pub fn nuclear_norm<T: Real>(m: &CMatrix<T>) -> T {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(T::zero(), |a, &b| a + b)
}

/// Ratio of extreme singular values (infinite for singular input).
pub fn condition_number<T: Real>(m: &CMatrix<T>) -> T {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    let min = sv.iter().fold(max, |a, &b| a.min(b));
    if min <= T::zero() {
        T::lit(f64::INFINITY)
    } else {
        max / min
    }
}

/// Standard complex Gaussian sample, `E|z|² = 1`.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    cplx(a * s, b * s)
}

pub fn complex_gaussian_matrix<T: Real, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> CMatrix<T> {
    // column-major fill order keeps draws reproducible across nalgebra versions
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_gaussian(rng);
        }
    }
    m
}

/// Haar-distributed unitary from the phase-corrected QR of a Gaussian matrix.
pub fn haar_unitary<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix<T> {
    let z = complex_gaussian_matrix::<T, R>(dim, dim, rng);
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = r[(j, j)];
        let n = d.modulus();
        if n > T::zero() {
            let phase = d / real(n);
            for i in 0..dim {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}
