//! Maximum-likelihood reconstruction by an accelerated damped fixed-point map.
//!
//! With `I = Σ_j t_jΛ_j` and `R(Ψ) = Σ_j (k_j/λ_j)Λ_j` the likelihood equation
//! reads `IΨ = RΨ`. The iteration runs in whitened coordinates `Φ = I^{1/2}Ψ`,
//! where the equation becomes `Φ = R'Φ` with `R' = I^{-1/2} R I^{-1/2}`:
//!
//! * the damped map `Φ ← Φ + β(R'Φ − Φ)` starts at `β = 0.5` and halves `β`
//!   until the likelihood does not decrease;
//! * two damped steps are combined by squared extrapolation (SQUAREM), and the
//!   extrapolated point is kept only when it beats the plain double step;
//! * after `newton_after` cycles each iteration first tries a
//!   Levenberg–Marquardt Newton step on the real coordinates of `Φ`, using the
//!   exact Hessian; the accelerated cycle is the fallback whenever no damped
//!   Newton step raises the likelihood. This removes the slow tail of the
//!   fixed-point map on states with very small eigenvalues;
//! * iteration stops once the duality gap
//!   `K(λ_max(R') − 1) − Tr((R' − 1)ΦΦ⁺)`, an upper bound on the remaining
//!   likelihood gain when `r = s`, falls below tolerance. For `r < s` the
//!   relative stationarity residual is used instead.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{
    likelihood_from_rates, ratio_operator, CountRecord, EstimatorError, Result, RATE_FLOOR,
};
use crate::linalg::{complex_gaussian_matrix, real, CMatrix, HermitianEigen};
use crate::protocol::row_rates;
use crate::qmat::{DensityMatrix, PurifiedState};
use crate::rng::seeded;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    /// Maximum number of iterations (accelerated cycles or Newton steps).
    pub max_iter: usize,
    /// Initial damping `β` of each fixed-point step.
    pub damping: f64,
    /// Stop when the duality gap (log-likelihood units) drops below this.
    pub gap_tol: f64,
    /// Stop (rank-deficient fits only) when `‖(I−R)Ψ‖ ≤ tol·‖I‖‖Ψ‖`.
    pub residual_tol: f64,
    /// Weight of `I/s` blended into a warm start so no direction starts at zero.
    pub warm_start_mix: f64,
    /// Size of the random perturbation of the cold start.
    pub perturbation: f64,
    /// Seed of the cold-start perturbation.
    pub seed: u64,
    /// Accelerated cycles before Newton steps are attempted.
    pub newton_after: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            damping: 0.5,
            gap_tol: 1e-6,
            residual_tol: 1e-8,
            warm_start_mix: 1e-3,
            perturbation: 1e-3,
            seed: 0,
            newton_after: 30,
        }
    }
}

/// Where the iteration begins.
#[derive(Clone, Debug)]
pub enum MleStart<'a, T: Real> {
    /// `I/√s` plus a small random perturbation.
    Cold,
    /// A previous estimate (any trace).
    Warm(&'a DensityMatrix<T>),
}

#[derive(Clone, Debug)]
pub struct MleFit<T: Real> {
    /// Unit-trace estimate.
    pub state: DensityMatrix<T>,
    /// Fitted purification; `Tr ΨΨ⁺` is the fitted intensity.
    pub purification: PurifiedState<T>,
    pub iterations: usize,
    pub log_likelihood: T,
    /// Final duality gap (meaningful for full-rank fits).
    pub gap: T,
    /// `‖(I−R)Ψ‖ / (‖I‖·‖Ψ‖)`.
    pub residual: T,
    /// Whether the measured operators span all Hermitian matrices.
    pub informationally_complete: bool,
}

struct Whitened<T: Real> {
    rows: CMatrix<T>,
    w: CMatrix<T>,
    w_inv: CMatrix<T>,
    i_norm: T,
}

fn whiten<T: Real>(rec: &CountRecord<T>) -> Result<Whitened<T>> {
    let i = rec.protocol.weighted_sum();
    let eig = HermitianEigen::new(&i);
    let top = eig.values[0];
    let low = *eig.values.last().unwrap();
    if !(top > T::zero()) || !(low > T::scaled_tol(1e-12) * top) {
        return Err(EstimatorError::Underdetermined);
    }
    let w = eig.map(|v| v.sqrt());
    let w_inv = eig.map(|v| T::one() / v.sqrt());
    Ok(Whitened {
        rows: rec.protocol.rows() * &w_inv,
        w,
        w_inv,
        i_norm: top,
    })
}

/// Whether the rank-one operators `Λ_j` span the `s²`-dimensional real space
/// of Hermitian matrices.
fn spans_operator_space<T: Real>(rows: &CMatrix<T>) -> bool {
    let m = rows.nrows();
    let s = rows.ncols();
    let gram = DMatrix::<T>::from_fn(m, m, |a, b| {
        let z = rows
            .row(a)
            .iter()
            .zip(rows.row(b).iter())
            .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| {
                acc + x * y.conj()
            });
        z.norm_sqr()
    });
    let vals = gram.symmetric_eigen().eigenvalues;
    let top = vals.iter().fold(T::zero(), |a, &b| a.max(b));
    let cut = top * T::scaled_tol(1e-10);
    vals.iter().filter(|&&v| v > cut).count() >= s * s
}

struct Point<T: Real> {
    phi: CMatrix<T>,
    ll: T,
    lam: Vec<T>,
}

struct Problem<'a, T: Real> {
    rows: &'a CMatrix<T>,
    counts: &'a [T],
    weights: &'a [T],
    total: T,
}

impl<T: Real> Problem<'_, T> {
    /// Rates `λ_j = ‖Y_jΦ‖²` per unit exposure.
    fn evaluate(&self, phi: CMatrix<T>) -> Point<T> {
        let lam = row_rates(self.rows, &(&phi * phi.adjoint()));
        let ll = likelihood_from_rates(self.counts, self.weights, &lam);
        Point { phi, ll, lam }
    }

    fn r_prime(&self, p: &Point<T>) -> CMatrix<T> {
        ratio_operator(self.rows, self.counts, &p.lam)
    }

    fn slack(&self, ll: T) -> T {
        T::scaled_tol(1e-12) * ll.abs().max(T::one())
    }

    /// One damped step with backtracking; never lowers the likelihood.
    fn step(&self, p: Point<T>, damping: T) -> Point<T> {
        let dir = self.r_prime(&p) * &p.phi - &p.phi;
        let mut beta = damping;
        let floor = T::lit(1e-12);
        while beta > floor {
            let cand = self.evaluate(&p.phi + &dir * real(beta));
            if cand.ll >= p.ll - self.slack(p.ll) {
                return cand;
            }
            beta *= T::lit(0.5);
        }
        p
    }

    fn gap(&self, p: &Point<T>) -> T {
        let r = self.r_prime(p);
        let lmax = HermitianEigen::new(&r).values[0];
        let sigma = &p.phi * p.phi.adjoint();
        let tr_r_sigma = (&r * &sigma).trace().re;
        let tr_sigma = sigma.trace().re;
        (self.total * (lmax - T::one()) - (tr_r_sigma - tr_sigma)).max(T::zero())
    }

    /// Two damped steps plus a squared extrapolation, keeping the better of the
    /// extrapolated and the plain point.
    fn squarem_cycle(&self, cur: Point<T>, damping: T) -> Point<T> {
        let origin = cur.phi.clone();
        let p1 = self.step(cur, damping);
        let p1_phi = p1.phi.clone();
        let p2 = self.step(p1, damping);
        let rr = &p1_phi - &origin;
        let v = &p2.phi - &p1_phi * real(T::lit(2.0)) + &origin;
        let nv = v.norm();
        let alpha = if nv > T::zero() {
            (-(rr.norm() / nv)).min(-T::one())
        } else {
            -T::one()
        };
        if alpha < -T::one() {
            let x = &origin - &rr * real(T::lit(2.0) * alpha) + &v * real(alpha * alpha);
            let cand = self.step(self.evaluate(x), damping);
            if cand.ll >= p2.ll {
                return cand;
            }
        }
        p2
    }

    /// Negative Hessian and gradient of `ℓ` in the real coordinates
    /// `(Re vec Φ, Im vec Φ)`, column-major.
    ///
    /// With `a_j = Y_jΦ` and `g_j = 2Y_j⁺a_j`, the gradient is `2(R' − 1)Φ` and
    /// `−∇²ℓ = 2(1 − R')⊗1_r + Σ_j (k_j/λ_j²) g_j g_jᵀ`.
    fn curvature(&self, p: &Point<T>) -> (DMatrix<T>, DVector<T>) {
        let (s, r) = p.phi.shape();
        let n = s * r;
        let rp = self.r_prime(p);
        let mut a = DMatrix::<T>::zeros(2 * n, 2 * n);
        let two = T::lit(2.0);
        for c in 0..r {
            for i in 0..s {
                for k in 0..s {
                    let delta = if i == k { T::one() } else { T::zero() };
                    let re = two * (delta - rp[(i, k)].re);
                    let im = -two * rp[(i, k)].im;
                    let (row, col) = (c * s + i, c * s + k);
                    a[(row, col)] = re;
                    a[(row + n, col + n)] = re;
                    a[(row + n, col)] = im;
                    a[(row, col + n)] = -im;
                }
            }
        }
        let amps = self.rows * &p.phi;
        let floor = T::positive_floor(RATE_FLOOR);
        let active: Vec<usize> = (0..self.rows.nrows())
            .filter(|&j| self.counts[j] > T::zero())
            .collect();
        let mut g = DMatrix::<T>::zeros(active.len(), 2 * n);
        for (q, &j) in active.iter().enumerate() {
            let scale = self.counts[j].sqrt() / p.lam[j].max(floor) * two;
            for c in 0..r {
                for i in 0..s {
                    let z = self.rows[(j, i)].conj() * amps[(j, c)];
                    g[(q, c * s + i)] = z.re * scale;
                    g[(q, c * s + i + n)] = z.im * scale;
                }
            }
        }
        a += g.transpose() * &g;
        let grad_c = (rp * &p.phi - &p.phi) * real(two);
        let mut grad = DVector::<T>::zeros(2 * n);
        for c in 0..r {
            for i in 0..s {
                grad[c * s + i] = grad_c[(i, c)].re;
                grad[c * s + i + n] = grad_c[(i, c)].im;
            }
        }
        (a, grad)
    }

    /// Levenberg–Marquardt step; `None` when no tried damping raised `ℓ`.
    fn newton_step(&self, p: &Point<T>, mu: &mut T) -> Option<Point<T>> {
        let (s, r) = p.phi.shape();
        let n = s * r;
        let (a, grad) = self.curvature(p);
        let scale = (0..2 * n)
            .fold(T::zero(), |m, i| m.max(a[(i, i)].abs()))
            .max(T::one());
        for _ in 0..16 {
            let mut damped = a.clone();
            for i in 0..2 * n {
                damped[(i, i)] += *mu * scale;
            }
            let Some(chol) = damped.cholesky() else {
                *mu *= T::lit(10.0);
                continue;
            };
            let d = chol.solve(&grad);
            let step =
                CMatrix::<T>::from_fn(s, r, |i, c| Complex::new(d[c * s + i], d[c * s + i + n]));
            let cand = self.evaluate(&p.phi + step);
            if cand.ll > p.ll {
                *mu = (*mu / T::lit(3.0)).max(T::lit(1e-12));
                return Some(cand);
            }
            *mu *= T::lit(10.0);
        }
        None
    }

    /// `‖(R' − 1)Φ‖`, the whitened stationarity residual.
    fn whitened_residual(&self, p: &Point<T>) -> CMatrix<T> {
        self.r_prime(p) * &p.phi - &p.phi
    }
}

fn starting_purification<T: Real>(
    s: usize,
    r: usize,
    start: &MleStart<'_, T>,
    opts: &MleOptions,
) -> CMatrix<T> {
    match start {
        MleStart::Cold => {
            let mut rng = seeded(opts.seed);
            let noise = complex_gaussian_matrix::<T, _>(s, r, &mut rng);
            let base = CMatrix::<T>::identity(s, r) * real(T::one() / T::lit(s as f64).sqrt());
            base + noise * real(T::lit(opts.perturbation))
        }
        MleStart::Warm(rho) => {
            let rho = rho.normalized();
            let eta = T::lit(opts.warm_start_mix);
            let lifted = rho.matrix() * real(T::one() - eta)
                + CMatrix::identity(s, s) * real(eta / T::lit(s as f64));
            let eig = HermitianEigen::new(&lifted);
            let mut psi = eig.vectors.columns(0, r).into_owned();
            for j in 0..r {
                psi.column_mut(j)
                    .scale_mut(eig.values[j].max(T::zero()).sqrt());
            }
            psi
        }
    }
}

/// Rank-`r` maximum-likelihood estimate from Poisson counts.
pub fn mle_reconstruct<T: Real>(
    rec: &CountRecord<T>,
    r: usize,
    opts: &MleOptions,
    start: MleStart<'_, T>,
) -> Result<MleFit<T>> {
    let s = rec.protocol.dim();
    if r == 0 || r > s {
        return Err(EstimatorError::InvalidArgs(format!(
            "rank {r} for dimension {s}"
        )));
    }
    if let MleStart::Warm(rho) = &start {
        if rho.dim() != s {
            return Err(EstimatorError::InvalidArgs(format!(
                "warm start of dimension {} for protocol of dimension {s}",
                rho.dim()
            )));
        }
    }
    let total = rec.total();
    if !(total > T::zero()) {
        return Err(EstimatorError::NoCounts);
    }
    let wh = whiten(rec)?;
    let problem = Problem {
        rows: &wh.rows,
        counts: &rec.counts,
        weights: rec.protocol.weights(),
        total,
    };

    // Φ₀ = WΨ₀ scaled so the expected total Tr ΦΦ⁺ matches the observed one
    let mut phi = &wh.w * starting_purification(s, r, &start, opts);
    let norm2 = phi.norm_squared();
    phi *= real((total / norm2).sqrt());

    let damping = T::lit(opts.damping);
    let gap_tol = T::lit(opts.gap_tol).max(total * T::lit(T::EPSILON * 1e3));
    let res_tol = T::lit(opts.residual_tol).max(T::scaled_tol(1e-14));
    let full_rank = r == s;
    let converged = |p: &Point<T>| -> (bool, T) {
        let gap = problem.gap(p);
        if full_rank {
            (gap <= gap_tol, gap)
        } else {
            let res =
                problem.whitened_residual(p).norm() / p.phi.norm().max(T::positive_floor(0.0));
            (res <= res_tol, gap)
        }
    };

    let mut cur = problem.evaluate(phi);
    let mut iterations = 0;
    let mut mu = T::lit(1e-3);
    let (mut done, mut gap) = converged(&cur);
    while !done {
        if iterations >= opts.max_iter {
            return Err(EstimatorError::NoConvergence {
                iterations,
                gap: gap.as_f64(),
            });
        }
        iterations += 1;
        let before = cur.ll;
        let newton = if iterations > opts.newton_after {
            problem.newton_step(&cur, &mut mu)
        } else {
            None
        };
        cur = match newton {
            Some(next) => next,
            None => {
                mu = T::lit(1e-3);
                problem.squarem_cycle(cur, damping)
            }
        };
        if cur.ll < before - problem.slack(before) {
            return Err(EstimatorError::LikelihoodDecrease(
                (before - cur.ll).as_f64(),
            ));
        }
        (done, gap) = converged(&cur);
    }

    // rows with events must keep a resolvable rate
    let floor = T::positive_floor(RATE_FLOOR);
    for (j, (&k, (&l, &t))) in rec
        .counts
        .iter()
        .zip(cur.lam.iter().zip(rec.protocol.weights()))
        .enumerate()
    {
        if k > T::zero() && !(l * t > floor) {
            return Err(EstimatorError::RankDeficientData {
                row: j,
                count: k.as_f64(),
            });
        }
    }

    let psi = &wh.w_inv * &cur.phi;
    let residual_vec = &wh.w * problem.whitened_residual(&cur);
    let residual = residual_vec.norm() / (wh.i_norm * psi.norm());
    let purification =
        PurifiedState::new(psi).map_err(|e| EstimatorError::InvalidArgs(e.to_string()))?;
    let state = purification.density().normalized();
    Ok(MleFit {
        state,
        purification,
        iterations,
        log_likelihood: cur.ll,
        gap,
        residual,
        informationally_complete: spans_operator_space(rec.protocol.rows()),
    })
}
