//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --release --test acceptance`.

use std::time::Instant;

use cyclosense::channel::{gen_noise, Hypothesis, NoiseSpec, Scenario};
use cyclosense::detectors::{ccst_statistic, ev_css_threshold, DetectorId};
use cyclosense::harness::{
    emit_summary_csv, emit_trials_csv, run_experiment, ExperimentConfig, ExperimentKind, SummaryRow,
};
use cyclosense::numerics::chi2::{chi2_cdf, chi2_quantile};
use cyclosense::numerics::linalg::{cholesky, cholesky_toeplitz_rho, svd};
use cyclosense::numerics::rng::{normal_c64, rng_from_seed};
use cyclosense::numerics::stats::{ks_pvalue, ks_statistic};
use cyclosense::numerics::{fft, ComplexMatrix};
use cyclosense::sigmodel::{CyclicFeature, SignalSpec};
use cyclosense::Complex64;

const PFA: f64 = 0.1;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(kind: ExperimentKind, edit: impl FnOnce(&mut ExperimentConfig)) -> Vec<SummaryRow> {
    let mut c = ExperimentConfig::defaults(kind);
    edit(&mut c);
    run_experiment(&c).expect("experiment runs").summary
}

fn row(rows: &[SummaryRow], det: DetectorId, pred: impl Fn(&SummaryRow) -> bool) -> &SummaryRow {
    rows.iter()
        .find(|r| r.detector == det && pred(r))
        .unwrap_or_else(|| panic!("no row for {det}"))
}

fn pd(r: &SummaryRow) -> f64 {
    r.pd.expect("H1 was simulated")
}

fn cfar_calibration() -> Outcome {
    let mut c = ExperimentConfig::defaults(ExperimentKind::PfaVerify);
    c.m = vec![2, 4];
    c.noise_variance = vec![1.0, 10.0];
    c.n = vec![4000];
    c.n_trials = 10_000;
    let out = run_experiment(&c).expect("experiment runs");
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &out.summary {
        let stats: Vec<f64> = out
            .records
            .iter()
            .filter(|t| t.experiment == r.experiment && t.cell == r.cell)
            .map(|t| t.statistic)
            .collect();
        let k = (r.cell.m * (r.cell.m + 1)) as u32;
        let p = ks_pvalue(ks_statistic(&stats, |x| chi2_cdf(x, k)), stats.len());
        let ok = p > 0.01 && (r.pfa_emp - PFA).abs() <= 0.01;
        pass &= ok;
        parts.push(format!(
            "M={} var={} KS p={p:.3} pfa={:.4}",
            r.cell.m, r.cell.noise_variance, r.pfa_emp
        ));
    }
    outcome(pass, parts.join("; "))
}

fn threshold_invariance() -> Outcome {
    let gamma = ev_css_threshold(2, true, PFA).unwrap();
    let rows = run(ExperimentKind::PfaVerify, |c| {
        c.m = vec![2];
        c.n = vec![1000, 2000, 4000, 16000];
        c.noise_variance = vec![1.0, 10.0];
        c.n_trials = 10_000;
    });
    let same_gamma = rows
        .iter()
        .all(|r| r.threshold.to_bits() == gamma.to_bits());
    let mut pass = same_gamma;
    let mut parts = vec![format!(
        "gamma={gamma} bit-identical over {} cells: {same_gamma}",
        rows.len()
    )];
    for r in rows
        .iter()
        .filter(|r| r.cell.n >= 2000 && r.cell.noise_variance == 1.0)
    {
        let ok = (r.pfa_emp - PFA).abs() <= 0.015;
        pass &= ok;
        parts.push(format!("N={} pfa={:.4}", r.cell.n, r.pfa_emp));
    }
    outcome(pass, parts.join("; "))
}

fn scale_invariance() -> Outcome {
    let soi = SignalSpec::reference_soi();
    let feature = CyclicFeature::doubled_carrier(&soi);
    let mut worst = 0.0f64;
    for t in 0..1000u64 {
        let sc = Scenario {
            antennas: 2 + (t % 3) as usize,
            frame_len: 4000,
            soi,
            snr_db: -20.0 + (t % 21) as f64,
            noise: NoiseSpec {
                variance: 1.0,
                rho: [0.0, 0.3, 0.5][(t % 3) as usize],
            },
            interference: None,
        };
        let hyp = if t % 2 == 0 {
            Hypothesis::H0
        } else {
            Hypothesis::H1
        };
        let frame = sc.draw_frame(hyp, 77, t, 0).unwrap();
        let base = ccst_statistic(&frame, &feature).unwrap().statistic;
        for c in [1e-3, 1.0, 1e3] {
            let s = ccst_statistic(&frame.scaled(Complex64::new(c, 0.0)), &feature)
                .unwrap()
                .statistic;
            worst = worst.max((s - base).abs() / base.abs().max(f64::MIN_POSITIVE));
        }
    }
    outcome(
        worst <= 1e-9,
        format!("max relative deviation {worst:.2e} over 1000 frames"),
    )
}

fn detector_ordering() -> Outcome {
    let rows = run(ExperimentKind::PdVsSnr, |c| {
        c.snr_db = vec![-14.0];
        c.detectors = vec![DetectorId::EvCss, DetectorId::BmrcMsdf, DetectorId::EgcMsdf];
        c.n_trials = 2000;
    });
    let ev = row(&rows, DetectorId::EvCss, |_| true);
    let bmrc = row(&rows, DetectorId::BmrcMsdf, |_| true);
    let egc = row(&rows, DetectorId::EgcMsdf, |_| true);
    let (ev_ci, bmrc_ci) = (ev.pd_ci.unwrap(), bmrc.pd_ci.unwrap());
    let pass = pd(ev) > pd(bmrc) && pd(bmrc) > pd(egc) && ev_ci.0 > bmrc_ci.1;
    outcome(
        pass,
        format!(
            "Pd ev-css={:.4} [{:.4},{:.4}] bmrc-msdf={:.4} [{:.4},{:.4}] egc-msdf={:.4}",
            pd(ev),
            ev_ci.0,
            ev_ci.1,
            pd(bmrc),
            bmrc_ci.0,
            bmrc_ci.1,
            pd(egc)
        ),
    )
}

fn high_snr_saturation() -> Outcome {
    let rows = run(ExperimentKind::PdVsSnr, |c| {
        c.snr_db = vec![0.0];
        c.n_trials = 2000;
    });
    let mut pass = true;
    let mut parts = Vec::new();
    for det in DetectorId::ALL {
        let p = pd(row(&rows, det, |_| true));
        if det != DetectorId::EgcMsdf {
            pass &= p >= 0.99;
        }
        parts.push(format!("{det}={p:.4}"));
    }
    outcome(pass, format!("Pd at 0 dB: {}", parts.join(" ")))
}

fn correlated_noise() -> Outcome {
    let rows = run(ExperimentKind::PdVsN, |c| {
        c.detectors = vec![DetectorId::EvCss];
        c.n = vec![4000];
        c.snr_db = vec![-14.0];
        c.rho = vec![0.0, 0.5];
        c.n_trials = 10_000;
    });
    let white = row(&rows, DetectorId::EvCss, |r| r.cell.rho == 0.0);
    let corr = row(&rows, DetectorId::EvCss, |r| r.cell.rho == 0.5);
    let pass = pd(corr) >= pd(white) - 0.02
        && (corr.pfa_emp - PFA).abs() <= 0.015
        && corr.threshold.to_bits() == white.threshold.to_bits();
    outcome(
        pass,
        format!(
            "Pd rho=0: {:.4} rho=0.5: {:.4}; pfa rho=0.5: {:.4} at unchanged gamma",
            pd(white),
            pd(corr),
            corr.pfa_emp
        ),
    )
}

fn interference_rejection() -> Outcome {
    let rows = run(ExperimentKind::Interference, |c| {
        c.n_trials = 2000;
    });
    let mut pass = true;
    let mut parts = Vec::new();
    for sir in [-20.0, -16.0, -12.0, -8.0, -4.0, 0.0] {
        let at = |r: &SummaryRow| r.cell.sir_db == Some(sir);
        let ev = pd(row(&rows, DetectorId::EvCss, at));
        let bmrc = pd(row(&rows, DetectorId::BmrcMsdf, at));
        pass &= ev > bmrc;
        if sir == -20.0 {
            pass &= ev >= 0.95;
        }
        parts.push(format!("SIR {sir}: ev={ev:.3} bmrc={bmrc:.3}"));
    }
    outcome(pass, parts.join("; "))
}

fn antenna_scaling() -> Outcome {
    let rows = run(ExperimentKind::PdVsM, |c| {
        c.detectors = vec![DetectorId::EvCss, DetectorId::BmrcMsdf];
        c.n_trials = 2000;
    });
    let mut pass = true;
    let mut last = 0.0;
    let mut parts = Vec::new();
    for m in [2, 3, 4] {
        let ev = pd(row(&rows, DetectorId::EvCss, |r| r.cell.m == m));
        let bmrc = pd(row(&rows, DetectorId::BmrcMsdf, |r| r.cell.m == m));
        pass &= ev >= last && ev >= bmrc;
        last = ev;
        parts.push(format!("M={m}: ev={ev:.4} bmrc={bmrc:.4}"));
    }
    let snr = rows[0].cell.snr_db;
    outcome(pass, format!("SNR {snr} dB; {}", parts.join("; ")))
}

fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
    let mut rng = rng_from_seed(seed);
    ComplexMatrix::from_fn(n, n, |_, _| normal_c64(&mut rng))
}

fn kernel_oracles() -> Outcome {
    let mut chi2_err = 0.0f64;
    for k in 1..=30 {
        for i in 1..1000 {
            let p = f64::from(i) / 1000.0;
            chi2_err = chi2_err.max((chi2_cdf(chi2_quantile(p, k).unwrap(), k) - p).abs());
        }
    }

    let mut fft_err = 0.0f64;
    let mut rng = rng_from_seed(5);
    for log_n in 1..=10 {
        let n = 1usize << log_n;
        let x: Vec<Complex64> = (0..n).map(|_| normal_c64(&mut rng)).collect();
        let fast = fft(&x).unwrap();
        for (k, f) in fast.iter().enumerate() {
            let naive: Complex64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v * Complex64::from_polar(
                        1.0,
                        -2.0 * std::f64::consts::PI * ((i * k) % n) as f64 / n as f64,
                    )
                })
                .sum();
            fft_err = fft_err.max((f - naive).norm() / (n as f64).sqrt());
        }
    }

    let mut svd_err = 0.0f64;
    for n in 1..=8 {
        for seed in 0..20 {
            let a = random_matrix(n, 100 * n as u64 + seed);
            let s = svd(&a).unwrap();
            svd_err = svd_err.max(s.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm());
        }
    }

    let mut chol_err = 0.0f64;
    for m in 1..=8 {
        for rho in [0.0, 0.3, 0.5, 0.9] {
            let l = cholesky_toeplitz_rho(m, rho).unwrap();
            let r = ComplexMatrix::from_fn(m, m, |i, j| {
                Complex64::new(rho.powi((i as i32 - j as i32).abs()), 0.0)
            });
            chol_err = chol_err.max(l.matmul(&l.adjoint()).sub(&r).frobenius_norm());
        }
        let b = random_matrix(m, 900 + m as u64);
        let hpd = b.matmul(&b.adjoint()).add(&ComplexMatrix::identity(m));
        let l = cholesky(&hpd).unwrap();
        chol_err =
            chol_err.max(l.matmul(&l.adjoint()).sub(&hpd).frobenius_norm() / hpd.frobenius_norm());
    }

    let mut cov_err = 0.0f64;
    for (variance, rho) in [(1.0, 0.5), (2.0, 0.9)] {
        let m = 4;
        let n = 1_000_000;
        let f = gen_noise(m, n, &NoiseSpec { variance, rho }, 320e3, 6).unwrap();
        for i in 0..m {
            for j in 0..m {
                let emp: Complex64 = f
                    .antenna(i)
                    .iter()
                    .zip(f.antenna(j))
                    .map(|(a, b)| a * b.conj())
                    .sum::<Complex64>()
                    / n as f64;
                let want = variance * rho.powi((i as i32 - j as i32).abs());
                cov_err = cov_err.max((emp - want).norm());
            }
        }
    }

    let pass = chi2_err <= 1e-7
        && fft_err <= 1e-9
        && svd_err <= 1e-10
        && chol_err <= 1e-12
        && cov_err <= 0.01;
    outcome(
        pass,
        format!(
            "chi2 round trip {chi2_err:.1e}, fft {fft_err:.1e}, svd {svd_err:.1e}, cholesky {chol_err:.1e}, noise cov {cov_err:.4}"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut files = 0;
    for kind in [
        ExperimentKind::PdVsSnr,
        ExperimentKind::Roc,
        ExperimentKind::Interference,
    ] {
        let mut bytes = Vec::new();
        for workers in [1, 4] {
            let mut c = ExperimentConfig::defaults(kind);
            c.snr_db.truncate(2);
            c.sir_db.truncate(2);
            c.n = vec![2000];
            c.n_trials = 200;
            c.calibration_trials = 500;
            c.workers = Some(workers);
            let out = run_experiment(&c).unwrap();
            let s = dir.path().join(format!("{kind}-{workers}-summary.csv"));
            let t = dir.path().join(format!("{kind}-{workers}-trials.csv"));
            emit_summary_csv(&s, &out.summary).unwrap();
            emit_trials_csv(&t, &out.records).unwrap();
            bytes.push((std::fs::read(&s).unwrap(), std::fs::read(&t).unwrap()));
        }
        identical &= bytes[0] == bytes[1];
        files += 4;
    }
    outcome(
        identical,
        format!("{files} CSV files compared between 1 and 4 workers, identical: {identical}"),
    )
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("CFAR calibration", cfar_calibration),
        ("threshold invariance", threshold_invariance),
        ("scale invariance", scale_invariance),
        ("detector ordering", detector_ordering),
        ("high-SNR saturation", high_snr_saturation),
        ("correlated-noise robustness", correlated_noise),
        ("interference rejection", interference_rejection),
        ("antenna scaling", antenna_scaling),
        ("kernel oracles", kernel_oracles),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict} {name} ({:.1}s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
