//! Full-scale acceptance run: one PASS/FAIL line per criterion, then the
//! tracking invariants. Exits with status 1 if any line fails.

use std::process::ExitCode;
use std::time::Instant;

use lorentz_tomo::{DensityMatrix64, Tracker, TrackingRecord};
use lorentz_tomo_cli::experiments::{self, HIGH_FIDELITY};
use lorentz_tomo_cli::stats::mean;
use lorentz_tomo_cli::verify::{self, CheckOutcome};
use lorentz_tomo_cli::{ExperimentConfig, ProtocolKind};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const REFERENCE_STATIC_LOSS: f64 = 2.15997e-6;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, label: &str, passed: bool, detail: String) {
        if !passed {
            self.failures += 1;
        }
        println!("{} {label}: {detail}", if passed { "PASS" } else { "FAIL" });
    }
}

fn static_criteria(report: &mut Report, cfg: &ExperimentConfig) {
    let t = Instant::now();
    let summary = experiments::run_static(cfg, ProtocolKind::Lorentz)
        .map(|trials| experiments::summarize_static(cfg, ProtocolKind::Lorentz, &trials));
    match summary {
        Ok(s) => {
            let ratio = s.mean_loss / REFERENCE_STATIC_LOSS;
            let ok = (1.0 / 2.5..=2.5).contains(&ratio)
                && (3000.0..=10000.0).contains(&s.mean_efficiency);
            report.line(
                "criterion 1 (static Lorentz, s=8 r=8 n=1e4, 200 trials)",
                ok,
                format!(
                    "mean loss {:.5e} (x{ratio:.3} of {REFERENCE_STATIC_LOSS:e}), efficiency {:.1}, {:.1?}",
                    s.mean_loss,
                    s.mean_efficiency,
                    t.elapsed()
                ),
            );
        }
        Err(e) => report.line("criterion 1 (static Lorentz)", false, e.to_string()),
    }

    let t = Instant::now();
    let summary = experiments::run_static(cfg, ProtocolKind::Mub)
        .map(|trials| experiments::summarize_static(cfg, ProtocolKind::Mub, &trials));
    match summary {
        Ok(s) => report.line(
            "criterion 2 (untransformed MUB control)",
            s.mean_efficiency <= 1.1,
            format!(
                "mean loss {:.5e}, efficiency {:.4}, {:.1?}",
                s.mean_loss,
                s.mean_efficiency,
                t.elapsed()
            ),
        ),
        Err(e) => report.line(
            "criterion 2 (untransformed MUB control)",
            false,
            e.to_string(),
        ),
    }
}

/// Largest eigenvalue change between two spectra.
fn spectrum_shift(a: &DensityMatrix64, b: &DensityMatrix64) -> f64 {
    a.eigen()
        .values
        .iter()
        .zip(b.eigen().values)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

struct TrackRun {
    records: Vec<TrackingRecord>,
    worst_step_shift: f64,
    total_shift: f64,
}

fn run_tracking(cfg: &ExperimentConfig) -> Result<TrackRun, String> {
    let mut tracker = Tracker::<f64>::new(cfg.evolution()).map_err(|e| e.to_string())?;
    let initial = tracker.true_state().clone();
    let mut previous = initial.clone();
    let mut worst_step_shift: f64 = 0.0;
    let mut records = Vec::with_capacity(cfg.steps);
    while let Some(r) = tracker.next() {
        records.push(r.map_err(|e| e.to_string())?);
        let now = tracker.true_state();
        worst_step_shift = worst_step_shift.max(spectrum_shift(&previous, now));
        previous = now.clone();
    }
    Ok(TrackRun {
        records,
        worst_step_shift,
        total_shift: spectrum_shift(&initial, &previous),
    })
}

fn tracking_criteria(report: &mut Report, cfg: &ExperimentConfig, run: &TrackRun) {
    let recs = &run.records;
    let post = &recs[cfg.warmup.min(recs.len())..];
    let losses: Vec<f64> = post.iter().map(|r| r.loss).collect();
    let mean_loss = mean(&losses);
    let good = post
        .iter()
        .filter(|r| r.recon_fidelity > HIGH_FIDELITY)
        .count() as f64
        / post.len() as f64;
    report.line(
        "criterion 3 (tracking loss and fidelity)",
        (1e-7..=1e-6).contains(&mean_loss) && good >= 0.9,
        format!(
            "mean loss {mean_loss:.5e} over steps {}..{}, F > 1 - 1e-6 on {:.2}% of them",
            cfg.warmup,
            recs.len(),
            100.0 * good
        ),
    );

    let bf1 = recs[1].backaction_fidelity;
    let min_bf = recs
        .iter()
        .fold(1.0_f64, |m, r| m.min(r.backaction_fidelity));
    report.line(
        "criterion 4 (back-action fidelity)",
        (bf1 - 0.99998).abs() <= 5e-6 && min_bf >= 0.9999,
        format!("step 1 {bf1:.8} (target 0.99998 +- 5e-6), minimum {min_bf:.8}"),
    );

    // step 0 measures with complete MUB bases, whose click fractions are
    // O(1/s) by construction; the bound concerns the adapted steps
    let adapted = &recs[1..];
    let per_step: Vec<f64> = adapted
        .iter()
        .map(TrackingRecord::max_detection_fraction)
        .collect();
    let (worst_step, worst) =
        per_step.iter().enumerate().fold(
            (0, 0.0),
            |acc, (i, &v)| if v > acc.1 { (i + 1, v) } else { acc },
        );
    let bulk = per_step.iter().filter(|&&v| v <= 3e-5).count() as f64 / per_step.len() as f64;
    report.line(
        "criterion 5 (detection fractions, steps >= 1)",
        worst <= 1e-4 && bulk >= 0.9,
        format!(
            "max {worst:.3e} at step {worst_step} (bound 1e-4), {:.2}% of steps with every row <= 3e-5",
            100.0 * bulk
        ),
    );
}

fn verify_criterion(report: &mut Report, cfg: &ExperimentConfig) -> Vec<CheckOutcome> {
    let t = Instant::now();
    let outcomes = match verify::run_checks(&verify::DEFAULT_DIMS, None, cfg.seed) {
        Ok(o) => o,
        Err(e) => {
            report.line("criterion 6 (property suites)", false, e.to_string());
            return Vec::new();
        }
    };
    let elapsed = t.elapsed();
    let odd = verify::run_checks(&[5, 7], None, cfg.seed).unwrap_or_default();
    let odd_overlaps: Vec<_> = odd.iter().filter(|o| o.name == "mub_overlaps").collect();
    let failed: Vec<String> = outcomes
        .iter()
        .chain(odd_overlaps.iter().copied())
        .filter(|o| !o.passed)
        .map(|o| format!("{} s={}", o.name, o.dim))
        .collect();
    let ok = failed.is_empty() && odd_overlaps.len() == 2 && elapsed.as_secs_f64() < 60.0;
    report.line(
        "criterion 6 (property suites)",
        ok,
        format!(
            "{} checks for s in {:?} in {elapsed:.1?}, MUB overlaps for s in [5, 7]{}",
            outcomes.len(),
            verify::DEFAULT_DIMS,
            if failed.is_empty() {
                String::new()
            } else {
                format!(", failing: {}", failed.join(", "))
            }
        ),
    );
    outcomes
}

/// Dominant nonzero frequency bin of a mean-removed series.
fn dominant_bin(series: &[f64]) -> usize {
    let m = mean(series);
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x - m, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    (1..buf.len() / 2)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .unwrap_or(0)
}

/// Mann–Kendall statistic normalized to a standard normal under "no trend".
fn mann_kendall_z(xs: &[f64]) -> f64 {
    let n = xs.len();
    let mut s: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += match xs[j].partial_cmp(&xs[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let corrected = s as f64 - (s.signum() as f64);
    corrected / var.sqrt()
}

fn invariants(
    report: &mut Report,
    cfg: &ExperimentConfig,
    run: &TrackRun,
    checks: &[CheckOutcome],
) {
    let recs = &run.records;
    report.line(
        "invariant: evolution preserves the spectrum",
        run.worst_step_shift <= 1e-12 && run.total_shift <= 1e-9,
        format!(
            "worst single step {:.2e}, over {} steps {:.2e}",
            run.worst_step_shift,
            recs.len(),
            run.total_shift
        ),
    );

    // the warm-up steps are replaced by the post-warm-up mean so the
    // transient at step 0 does not leak into every bin
    let post_mean = mean(
        &recs[cfg.warmup..]
            .iter()
            .map(|r| r.efficiency)
            .collect::<Vec<_>>(),
    );
    let eff: Vec<f64> = recs
        .iter()
        .map(|r| {
            if r.step < cfg.warmup {
                post_mean
            } else {
                r.efficiency
            }
        })
        .collect();
    let expected = recs.len() / cfg.period;
    let bin = dominant_bin(&eff);
    report.line(
        "invariant: efficiency follows the Hamiltonian period",
        bin == expected,
        format!(
            "dominant bin {bin} of {}, expected {expected} (period {})",
            eff.len(),
            cfg.period
        ),
    );

    let losses: Vec<f64> = recs[cfg.warmup..].iter().map(|r| r.loss).collect();
    let z = mann_kendall_z(&losses);
    report.line(
        "invariant: no trend in loss after warm-up (Mann-Kendall, 5%)",
        z.abs() < 1.959964,
        format!("z = {z:.3} over {} steps", losses.len()),
    );

    let removed = 1.0 - recs[1].backaction_fidelity;
    let clicked = recs[1].sum_detection_fraction();
    let ratio = removed / clicked;
    report.line(
        "invariant: step-1 back-action within a factor 3 of the summed fractions",
        (1.0 / 3.0..=3.0).contains(&ratio),
        format!("1 - fidelity {removed:.3e}, summed fractions {clicked:.3e}, ratio {ratio:.3}"),
    );

    let telescoping: Vec<_> = checks
        .iter()
        .filter(|o| o.name == "backaction_telescoping")
        .collect();
    let worst = telescoping
        .iter()
        .find(|o| !o.passed)
        .or(telescoping.first());
    report.line(
        "invariant: survival equals one minus the sequential click probabilities",
        !telescoping.is_empty() && telescoping.iter().all(|o| o.passed),
        match worst {
            Some(o) => format!(
                "{} dimensions, s={}: {}",
                telescoping.len(),
                o.dim,
                o.detail
            ),
            None => "check did not run".into(),
        },
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let mut report = Report { failures: 0 };

    let checks = verify_criterion(&mut report, &cfg);
    static_criteria(&mut report, &cfg);

    let t = Instant::now();
    match run_tracking(&cfg) {
        Ok(run) => {
            println!(
                "tracking: {} steps in {:.1?}",
                run.records.len(),
                t.elapsed()
            );
            tracking_criteria(&mut report, &cfg, &run);
            invariants(&mut report, &cfg, &run, &checks);
        }
        Err(e) => report.line("criteria 3-5 (tracking)", false, e),
    }

    println!(
        "acceptance: {} failing line(s), total {:.1?}",
        report.failures,
        start.elapsed()
    );
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
