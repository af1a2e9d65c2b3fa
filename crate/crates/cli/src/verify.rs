//! Cross-module invariant checks at small dimensions.

use lorentz_tomo::estimator::{
    log_likelihood, log_likelihood_gradient, noiseless_counts, sample_counts,
};
use lorentz_tomo::linalg::{
    complex_gaussian_matrix, cplx, haar_unitary, max_abs, real, unitary_propagator, CMatrix,
};
use lorentz_tomo::protocol::{povm_defect, rates};
use lorentz_tomo::qmat::{
    density_of, hermitian_purification, random_hermitian, random_mixed_state, regularize_spectrum,
};
use lorentz_tomo::rng::{derive_seed, seeded};
use lorentz_tomo::stokes::{boost, interval2, BoostParams};
use lorentz_tomo::tracker::{backaction_step, hamiltonian_at};
use lorentz_tomo::{
    apply_lorentz, fidelity, lorentz_of_state, mle_reconstruct, mub_protocol, normalize_exposure,
    purify, DensityMatrix64, InstrumentalMatrix64, MleOptions, MleStart, PurifiedState,
    StateGenConfig,
};
use rand::Rng;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const DEFAULT_DIMS: [usize; 4] = [2, 3, 4, 8];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub dim: usize,
    pub passed: bool,
    pub detail: String,
}

struct Ctx {
    s: usize,
    mub: InstrumentalMatrix64,
    seed: u64,
}

impl Ctx {
    fn state(&self, rank: usize, weight: f64, k: u64) -> DensityMatrix64 {
        random_mixed_state(&StateGenConfig {
            dim: self.s,
            rank,
            dominant_weight: weight,
            seed: derive_seed(self.seed, k),
        })
        .expect("valid generated spectrum")
    }

    /// A full-rank dominant weight in `(1/s, 1)` that varies with `k`.
    fn weight(&self, k: u64) -> f64 {
        let lo = 1.0 / self.s as f64 + 0.01;
        let ws: [f64; 4] = [0.5, 0.9, 0.99, 0.9999];
        ws[k as usize % ws.len()].max(lo)
    }
}

type Check = fn(&Ctx) -> (bool, String);

const CHECKS: [(&str, Check); 12] = [
    ("mub_overlaps", mub_overlaps),
    ("povm_completeness", povm_completeness),
    ("lorentz_maps_state_to_identity", lorentz_to_identity),
    ("interval_invariance", interval_invariance),
    ("purify_round_trip", purify_round_trip),
    ("gauge_invariance", gauge_invariance),
    ("fidelity_bounds", fidelity_bounds),
    ("likelihood_gradient", likelihood_gradient),
    ("noiseless_mle_recovery", noiseless_mle),
    ("evolution_preserves_spectrum", evolution_spectrum),
    ("adapted_rates_uniform", adapted_rates_uniform),
    ("backaction_telescoping", backaction_telescoping),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check for every dimension in `dims`. A protocol in `replace`
/// stands in for the MUB table of its dimension.
pub fn run_checks(
    dims: &[usize],
    replace: Option<&InstrumentalMatrix64>,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    if let Some(x) = replace {
        if !dims.contains(&x.dim()) {
            return Err(CliError::Config(format!(
                "protocol file has dimension {}, not among the verified {dims:?}",
                x.dim()
            )));
        }
    }
    let mut out = Vec::new();
    for &s in dims {
        let mub = match replace {
            Some(x) if x.dim() == s => x.clone(),
            _ => mub_protocol(s).map_err(|e| CliError::Config(e.to_string()))?,
        };
        let ctx = Ctx {
            s,
            mub,
            seed: derive_seed(seed, s as u64),
        };
        for (name, check) in CHECKS {
            let (passed, detail) = check(&ctx);
            out.push(CheckOutcome {
                name,
                dim: s,
                passed,
                detail,
            });
        }
    }
    Ok(out)
}

pub fn format_table(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    let mut text = String::new();
    for o in outcomes {
        text.push_str(&format!(
            "{:<width$}  s={:<2} {}  {}\n",
            o.name,
            o.dim,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        ));
    }
    text
}

fn verdict(worst: f64, tol: f64, what: &str) -> (bool, String) {
    (worst <= tol, format!("{what} {worst:.3e} (tol {tol:.0e})"))
}

fn mub_overlaps(c: &Ctx) -> (bool, String) {
    let s = c.s;
    if c.mub.len() != s * (s + 1) {
        return (
            false,
            format!("{} rows, expected {}", c.mub.len(), s * (s + 1)),
        );
    }
    let g = c.mub.rows() * c.mub.rows().adjoint();
    let mut worst: f64 = 0.0;
    let mut at = (0, 0);
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let want = match (i == j, i / s == j / s) {
                (true, _) => 1.0,
                (false, true) => 0.0,
                (false, false) => 1.0 / s as f64,
            };
            let d = (g[(i, j)].norm_sqr() - want).abs();
            if d > worst {
                worst = d;
                at = (i, j);
            }
        }
    }
    let (ok, detail) = verdict(worst, 1e-12, "max overlap error");
    (ok, format!("{detail} at rows {at:?}"))
}

fn povm_completeness(c: &Ctx) -> (bool, String) {
    let scale = c.mub.weighted_sum().trace().re / c.s as f64;
    verdict(
        povm_defect(&c.mub) / scale,
        1e-12,
        "‖Σ_j t_jΛ_j − c·1‖/c with c = Tr(Σ_j t_jΛ_j)/s:",
    )
}

fn lorentz_to_identity(c: &Ctx) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let rho = c.state(c.s, c.weight(k), 100 + k);
        let Ok(l) = lorentz_of_state(&hermitian_purification(&rho)) else {
            return (false, format!("singular state {k}"));
        };
        let scale = rho.determinant().powf(1.0 / c.s as f64);
        let out = l.transform_state(&rho);
        let err = max_abs(&(out.matrix() - CMatrix::identity(c.s, c.s) * cplx(scale, 0.0)))
            / scale.max(1.0);
        worst = worst
            .max(err)
            .max((l.determinant() - cplx(1.0, 0.0)).norm());
    }
    verdict(worst, 1e-10, "max deviation from (det ρ)^(1/s)·1")
}

fn interval_invariance(c: &Ctx) -> (bool, String) {
    if c.s != 2 {
        return (true, "qubit only; skipped".into());
    }
    let mut rng = seeded(c.seed);
    let rho =
        DensityMatrix64::new(c.state(2, 0.8, 7).matrix() * cplx(2.0, 0.0)).expect("scaled state");
    let reference = interval2(&rho).expect("qubit");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>() - 0.5);
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let b = BoostParams::new(v.map(|x| x / len), rng.random_range(0.0..=3.0))
            .expect("unit direction");
        let u = haar_unitary::<f64, _>(2, &mut rng);
        let m = boost(&b) * (&u / u.determinant().sqrt());
        let moved = rho.conjugate_by(&m);
        worst = worst.max((interval2(&moved).expect("qubit") - reference).abs());
    }
    verdict(worst, 1e-10, "max interval drift over 1000 transforms")
}

fn purify_round_trip(c: &Ctx) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for r in 1..=c.s {
        let w = if r == 1 {
            1.0
        } else {
            0.6f64.max(1.0 / r as f64 + 0.01)
        };
        let rho = c.state(r, w, 200 + r as u64);
        match purify(&rho, r) {
            Ok(psi) => worst = worst.max(max_abs(&(density_of(&psi).matrix() - rho.matrix()))),
            Err(e) => return (false, format!("rank {r}: {e}")),
        }
    }
    verdict(worst, 1e-10, "max |ΨΨ⁺ − ρ|")
}

fn gauge_invariance(c: &Ctx) -> (bool, String) {
    let rho = c.state(c.s, c.weight(1), 300);
    let psi = purify(&rho, c.s).expect("full rank");
    let u = haar_unitary::<f64, _>(c.s, &mut seeded(c.seed ^ 3));
    let moved = psi.regauge(&u).expect("square gauge");
    verdict(
        max_abs(&(density_of(&moved).matrix() - rho.matrix())),
        1e-10,
        "max |ΨUU⁺Ψ⁺ − ρ|",
    )
}

fn fidelity_bounds(c: &Ctx) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let p = c.state(c.s, c.weight(k), 400 + k);
        let q = c.state(c.s, c.weight(k + 1), 500 + k);
        let (Ok(f), Ok(g), Ok(one)) = (fidelity(&p, &q), fidelity(&q, &p), fidelity(&p, &p)) else {
            return (false, "fidelity failed".into());
        };
        let outside = (-f).max(f - 1.0).max(0.0);
        worst = worst.max(outside).max((f - g).abs()).max((one - 1.0).abs());
    }
    verdict(worst, 1e-9, "max bound/symmetry violation")
}

fn likelihood_gradient(c: &Ctx) -> (bool, String) {
    let rho = c.state(c.s, c.weight(0), 600);
    let Ok(x) = normalize_exposure(&c.mub, &rho, 1e3) else {
        return (false, "exposure normalization failed".into());
    };
    let Ok(rec) = sample_counts(&x, &rho, c.seed ^ 5) else {
        return (false, "sampling failed".into());
    };
    let psi = purify(&rho, c.s).expect("full rank");
    let grad = log_likelihood_gradient(&rec, &psi).expect("dimensions match");
    let mut worst: f64 = 0.0;
    let mut rng = seeded(c.seed ^ 6);
    for _ in 0..5 {
        let dir = complex_gaussian_matrix::<f64, _>(c.s, c.s, &mut rng);
        let h = 1e-6;
        let plus = PurifiedState::new(psi.matrix() + &dir * real(h)).expect("square");
        let minus = PurifiedState::new(psi.matrix() - &dir * real(h)).expect("square");
        let fd = (log_likelihood(&rec, &plus).expect("ok")
            - log_likelihood(&rec, &minus).expect("ok"))
            / (2.0 * h);
        let analytic = (grad.adjoint() * &dir).trace().re;
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1.0));
    }
    verdict(worst, 1e-5, "max relative gradient error")
}

fn noiseless_mle(c: &Ctx) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for (rank, w) in [(1, 1.0), (c.s, c.weight(2))] {
        let rho = c.state(rank, w, 700 + rank as u64);
        let Ok(x) = normalize_exposure(&c.mub, &rho, 1e4) else {
            return (false, "exposure normalization failed".into());
        };
        let rec = noiseless_counts(&x, &rho).expect("dimensions match");
        match mle_reconstruct(&rec, rank, &MleOptions::default(), MleStart::Cold) {
            Ok(fit) => worst = worst.max(1.0 - fidelity(&fit.state, &rho).unwrap_or(0.0)),
            Err(e) => return (false, format!("rank {rank}: {e}")),
        }
    }
    verdict(worst, 1e-9, "max loss")
}

fn evolution_spectrum(c: &Ctx) -> (bool, String) {
    let rho0 = c.state(c.s, c.weight(1), 800);
    let h0 = random_hermitian::<f64>(c.s, c.seed ^ 8);
    let spectrum = |r: &DensityMatrix64| r.eigen().values;
    let reference = spectrum(&rho0);
    let drift = |r: &DensityMatrix64| {
        spectrum(r)
            .iter()
            .zip(&reference)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let mut rho = rho0.clone();
    let mut step_worst: f64 = 0.0;
    for j in 0..5000 {
        let u = unitary_propagator(&hamiltonian_at(&h0, 0.5, 1000, j), 3e-5);
        let next = rho.conjugate_by(&u);
        if j < 10 {
            step_worst = step_worst.max(drift(&next));
        }
        rho = next;
    }
    let total = drift(&rho);
    (
        step_worst <= 1e-12 && total <= 1e-9,
        format!(
            "one-step drift {step_worst:.3e} (tol 1e-12), 5000-step drift {total:.3e} (tol 1e-9)"
        ),
    )
}

fn adapted_rates_uniform(c: &Ctx) -> (bool, String) {
    let w = c.weight(3);
    let Ok(rho) = regularize_spectrum(&c.state(c.s, w, 900), w) else {
        return (false, "regularization failed".into());
    };
    let Ok(l) = lorentz_of_state(&hermitian_purification(&rho)) else {
        return (false, "singular state".into());
    };
    let Ok(x) = apply_lorentz(&c.mub, &l) else {
        return (false, "apply failed".into());
    };
    let lam = rates(&x, &rho).expect("dimensions match");
    let mu: Vec<f64> = lam.iter().zip(x.weights()).map(|(a, t)| a * t).collect();
    let lo = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mu.iter().copied().fold(0.0, f64::max);
    let ratio = hi / lo;
    (
        ratio <= 10.0,
        format!("max/min expected counts {ratio:.6} (tol 10)"),
    )
}

fn backaction_telescoping(c: &Ctx) -> (bool, String) {
    let rho = c.state(c.s, c.weight(2), 1000);
    let Ok(reg) = regularize_spectrum(&rho, c.weight(2)) else {
        return (false, "regularization failed".into());
    };
    let Ok(l) = lorentz_of_state(&hermitian_purification(&reg)) else {
        return (false, "singular state".into());
    };
    let Ok(x) = apply_lorentz(&c.mub, &l) else {
        return (false, "apply failed".into());
    };
    let ket = rho.eigen().vectors.columns(0, 1).into_owned();
    let mut run = ket.clone();
    let mut lost = 0.0;
    for j in 0..x.len() {
        let bra = x.row(j);
        let amp = (&bra * &run)[(0, 0)];
        lost += amp.norm_sqr();
        run -= bra.adjoint() * amp;
    }
    let phi = PurifiedState::new(ket).expect("column");
    match backaction_step(&phi, &CMatrix::identity(c.s, c.s), &x) {
        Ok((_, survival)) => verdict(
            (1.0 - survival - lost).abs(),
            1e-12,
            "|1 − survival − Σ overlaps|",
        ),
        Err(e) => (false, e.to_string()),
    }
}
