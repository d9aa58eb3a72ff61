//! Monte Carlo engine: grid cells, trials, thresholds and summaries.

use std::collections::HashMap;
use std::sync::Arc;

use log::{info, warn};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::channel::{Hypothesis, Interference, NoiseSpec, Scenario};
use crate::cyclostat::MsdfConfig;
use crate::detectors::{
    calibrate_thresholds, ev_css_dof, ev_css_threshold, h0_statistics, statistics_pool, DetectorId,
};
use crate::error::{Error, Result};
use crate::numerics::chi2::{chi2_pdf, chi2_quantile};
use crate::numerics::stats::{upper_quantile, wilson_interval, Z_95};
use crate::sigmodel::{CyclicFeature, SignalSpec};

/// Spectral overlap of the co-channel interferer's main lobe with the SOI's.
pub const INTERFERER_OVERLAP: f64 = 0.3;

/// Warn when more than this fraction of a cell's frames had to be redrawn.
pub const UNDECIDABLE_WARN_FRACTION: f64 = 0.01;

/// Coordinates of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub m: usize,
    pub n: usize,
    pub snr_db: f64,
    pub rho: f64,
    pub sir_db: Option<f64>,
    pub noise_variance: f64,
}

impl Cell {
    pub fn scenario(&self) -> Scenario {
        let soi = SignalSpec::reference_soi();
        Scenario {
            antennas: self.m,
            frame_len: self.n,
            soi,
            snr_db: self.snr_db,
            noise: NoiseSpec {
                variance: self.noise_variance,
                rho: self.rho,
            },
            interference: self
                .sir_db
                .map(|sir| Interference::overlapping(&soi, INTERFERER_OVERLAP, sir)),
        }
    }

    /// Parameters that change the H0 frames. The SNR only matters through
    /// the interferer's power, which is set relative to the SOI's.
    fn h0_key(&self) -> [u64; 6] {
        let snr = if self.sir_db.is_some() {
            self.snr_db.to_bits()
        } else {
            0
        };
        [
            self.m as u64,
            self.n as u64,
            self.rho.to_bits(),
            self.noise_variance.to_bits(),
            self.sir_db.map_or(u64::MAX, f64::to_bits),
            snr,
        ]
    }
}

/// Per-trial output row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub experiment: String,
    pub detector: DetectorId,
    pub cell: Cell,
    pub hypothesis: Hypothesis,
    pub trial: u64,
    pub statistic: f64,
    pub threshold: f64,
    pub decision: bool,
}

/// One summary row. `pd` fields are `None` for H0-only experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub detector: DetectorId,
    pub cell: Cell,
    pub pfa_target: f64,
    pub threshold: f64,
    pub trials: usize,
    pub pd: Option<f64>,
    pub pd_ci: Option<(f64, f64)>,
    pub pfa_emp: f64,
    pub pfa_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub chi2_pdf_at_midpoint: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellDiagnostics {
    pub cell: Cell,
    pub frames: usize,
    pub redraws: u64,
}

impl CellDiagnostics {
    pub fn undecidable_fraction(&self) -> f64 {
        self.redraws as f64 / (self.frames as f64 + self.redraws as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    /// EV-CSS H0 histogram of the first cell, for `statistic_hist`.
    pub histogram: Vec<HistogramBin>,
    pub diagnostics: Vec<CellDiagnostics>,
    pub warnings: Vec<String>,
}

/// H0 side of a cell, shared by all cells that generate the same H0 frames.
struct H0Pool {
    stats: Vec<Vec<f64>>,
    /// Operating thresholds at the configured P_fa, one per detector.
    thresholds: Vec<f64>,
    redraws: u64,
}

/// Worker count: explicit setting, then `CYCLOSENSE_WORKERS`, then one per core.
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize> {
    if let Some(w) = explicit {
        return Ok(w);
    }
    match std::env::var("CYCLOSENSE_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(Error::Config(format!(
                "CYCLOSENSE_WORKERS must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let sirs: Vec<Option<f64>> = if config.sir_db.is_empty() {
        vec![None]
    } else {
        config.sir_db.iter().copied().map(Some).collect()
    };
    let mut out = Vec::new();
    for &m in &config.m {
        for &n in &config.n {
            for &rho in &config.rho {
                for &noise_variance in &config.noise_variance {
                    for &sir_db in &sirs {
                        for &snr_db in &config.snr_db {
                            out.push(Cell {
                                m,
                                n,
                                snr_db,
                                rho,
                                sir_db,
                                noise_variance,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// `experiment` column: the kind, tagged with the noise variance when it
/// is not unity because the schema has no variance column.
pub fn experiment_label(kind: ExperimentKind, noise_variance: f64) -> String {
    if noise_variance == 1.0 {
        kind.as_str().to_string()
    } else {
        format!("{}:var={noise_variance}", kind.as_str())
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let workers = resolve_workers(config.workers)?;
    with_workers(workers, || run_in_pool(config))?
}

fn run_in_pool(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let kind = config.experiment_kind;
    let soi = SignalSpec::reference_soi();
    let feature = CyclicFeature::doubled_carrier(&soi);
    let msdf = MsdfConfig::for_sample_rate(soi.sample_rate_hz);
    let detectors = &config.detectors;

    let mut h0_pools: HashMap<[u64; 6], Arc<H0Pool>> = HashMap::new();
    let mut out = ExperimentOutput::default();

    for cell in cells(config) {
        let scenario = cell.scenario();
        scenario.validate()?;
        let label = experiment_label(kind, cell.noise_variance);
        info!(
            "{label}: M={} N={} snr={} rho={} sir={:?}",
            cell.m, cell.n, cell.snr_db, cell.rho, cell.sir_db
        );

        let pool = match h0_pools.get(&cell.h0_key()) {
            Some(p) => Arc::clone(p),
            None => {
                let p = Arc::new(h0_pool(config, &scenario, &feature, &msdf)?);
                h0_pools.insert(cell.h0_key(), Arc::clone(&p));
                p
            }
        };

        let (h1_stats, h1_redraws) = if kind.has_h1() {
            statistics_pool(
                detectors,
                &scenario,
                Hypothesis::H1,
                &feature,
                &msdf,
                config.n_trials,
                config.master_seed,
            )?
        } else {
            (Vec::new(), 0)
        };

        let diag = CellDiagnostics {
            cell,
            frames: config.n_trials * if kind.has_h1() { 2 } else { 1 },
            redraws: pool.redraws + h1_redraws,
        };
        if diag.undecidable_fraction() > UNDECIDABLE_WARN_FRACTION {
            let msg = format!(
                "{label} M={} N={} snr={}: {:.2}% of frames were undecidable and redrawn",
                cell.m,
                cell.n,
                cell.snr_db,
                100.0 * diag.undecidable_fraction()
            );
            warn!("{msg}");
            out.warnings.push(msg);
        }
        out.diagnostics.push(diag);

        for (d, &det) in detectors.iter().enumerate() {
            let threshold = pool.thresholds[d];
            let mut emit = |hypothesis, stats: &[f64]| {
                for (t, &s) in stats.iter().enumerate() {
                    out.records.push(TrialRecord {
                        experiment: label.clone(),
                        detector: det,
                        cell,
                        hypothesis,
                        trial: t as u64,
                        statistic: s,
                        threshold,
                        decision: s > threshold,
                    });
                }
            };
            emit(Hypothesis::H0, &pool.stats[d]);
            if kind.has_h1() {
                emit(Hypothesis::H1, &h1_stats[d]);
            }

            let h1 = h1_stats.get(d).map(Vec::as_slice);
            if kind == ExperimentKind::Roc {
                for &p in &config.roc_pfa {
                    let thr = upper_quantile(&pool.stats[d], p).expect("non-empty");
                    out.summary
                        .push(summarize(&label, det, cell, p, thr, &pool.stats[d], h1));
                }
            } else {
                out.summary.push(summarize(
                    &label,
                    det,
                    cell,
                    config.pfa,
                    threshold,
                    &pool.stats[d],
                    h1,
                ));
            }
        }

        if kind == ExperimentKind::StatisticHist && out.histogram.is_empty() {
            if let Some(d) = detectors.iter().position(|&d| d == DetectorId::EvCss) {
                let dof = ev_css_dof(cell.m, feature.conjugate);
                out.histogram = histogram(&pool.stats[d], dof, config.hist_bins)?;
            }
        }
    }

    sort_outputs(&mut out);
    Ok(out)
}

fn h0_pool(
    config: &ExperimentConfig,
    scenario: &Scenario,
    feature: &CyclicFeature,
    msdf: &MsdfConfig,
) -> Result<H0Pool> {
    let detectors = &config.detectors;
    let (stats, redraws) = h0_statistics(
        detectors,
        scenario,
        feature,
        msdf,
        config.n_trials,
        config.master_seed,
    )?;

    let thresholds = if config.experiment_kind == ExperimentKind::Roc {
        // ROC points are read off the recorded H0 statistics; the operating
        // threshold is the one at the configured P_fa.
        stats
            .iter()
            .map(|s| upper_quantile(s, config.pfa).expect("non-empty"))
            .collect()
    } else {
        let baselines: Vec<DetectorId> = detectors
            .iter()
            .copied()
            .filter(|d| !d.is_analytic())
            .collect();
        let calibrated = if baselines.is_empty() {
            Vec::new()
        } else {
            calibrate_thresholds(
                &baselines,
                scenario,
                feature,
                msdf,
                config.pfa,
                config.calibration_trials,
                config.master_seed,
            )?
            .thresholds
        };
        let mut calibrated = calibrated.into_iter();
        detectors
            .iter()
            .map(|d| {
                if d.is_analytic() {
                    ev_css_threshold(scenario.antennas, feature.conjugate, config.pfa)
                } else {
                    Ok(calibrated
                        .next()
                        .expect("one calibrated threshold per baseline"))
                }
            })
            .collect::<Result<_>>()?
    };
    Ok(H0Pool {
        stats,
        thresholds,
        redraws,
    })
}

fn summarize(
    label: &str,
    detector: DetectorId,
    cell: Cell,
    pfa_target: f64,
    threshold: f64,
    h0: &[f64],
    h1: Option<&[f64]>,
) -> SummaryRow {
    let exceed = |s: &[f64]| s.iter().filter(|&&x| x > threshold).count();
    let fa = exceed(h0);
    let (pd, pd_ci) = match h1 {
        Some(h1) => {
            let det = exceed(h1);
            (
                Some(det as f64 / h1.len() as f64),
                Some(wilson_interval(det, h1.len(), Z_95)),
            )
        }
        None => (None, None),
    };
    SummaryRow {
        experiment: label.to_string(),
        detector,
        cell,
        pfa_target,
        threshold,
        trials: h0.len(),
        pd,
        pd_ci,
        pfa_emp: fa as f64 / h0.len() as f64,
        pfa_ci: wilson_interval(fa, h0.len(), Z_95),
    }
}

/// Equal-width bins over `[0, χ²_k quantile 0.999]`; values beyond the
/// range are not counted.
pub fn histogram(values: &[f64], dof: u32, bins: usize) -> Result<Vec<HistogramBin>> {
    let hi = chi2_quantile(0.999, dof)?;
    let width = hi / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if (0.0..=hi).contains(&v) {
            let i = ((v / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let bin_lo = i as f64 * width;
            let bin_hi = (i + 1) as f64 * width;
            HistogramBin {
                bin_lo,
                bin_hi,
                count,
                chi2_pdf_at_midpoint: chi2_pdf(0.5 * (bin_lo + bin_hi), dof),
            }
        })
        .collect())
}

fn cell_order(a: &Cell, b: &Cell) -> std::cmp::Ordering {
    a.m.cmp(&b.m)
        .then(a.n.cmp(&b.n))
        .then(a.snr_db.total_cmp(&b.snr_db))
        .then(a.rho.total_cmp(&b.rho))
        .then_with(|| match (a.sir_db, b.sir_db) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (x, y) => x.is_some().cmp(&y.is_some()),
        })
}

fn sort_outputs(out: &mut ExperimentOutput) {
    out.summary.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.detector.as_str().cmp(b.detector.as_str()))
            .then_with(|| cell_order(&a.cell, &b.cell))
            .then(a.pfa_target.total_cmp(&b.pfa_target))
    });
    out.records.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.detector.as_str().cmp(b.detector.as_str()))
            .then_with(|| cell_order(&a.cell, &b.cell))
            .then(a.hypothesis.as_str().cmp(b.hypothesis.as_str()))
            .then(a.trial.cmp(&b.trial))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            n: vec![1000],
            n_trials: 100,
            calibration_trials: 200,
            workers: Some(2),
            ..ExperimentConfig::defaults(kind)
        }
    }

    #[test]
    fn grid_is_cartesian() {
        let c = ExperimentConfig {
            m: vec![2, 3],
            rho: vec![0.0, 0.5],
            ..ExperimentConfig::defaults(ExperimentKind::PdVsSnr)
        };
        assert_eq!(cells(&c).len(), 2 * 2 * 11);
        let i = ExperimentConfig::defaults(ExperimentKind::Interference);
        assert!(cells(&i).iter().all(|c| c.sir_db.is_some()));
    }

    #[test]
    fn roc_has_one_row_per_detector_and_point() {
        let out = run_experiment(&small(ExperimentKind::Roc)).unwrap();
        assert_eq!(out.summary.len(), 18);
        for det in [DetectorId::EvCss, DetectorId::BmrcMsdf] {
            let rows: Vec<_> = out.summary.iter().filter(|r| r.detector == det).collect();
            for w in rows.windows(2) {
                assert!(w[0].pfa_emp <= w[1].pfa_emp);
                assert!(w[0].pd.unwrap() <= w[1].pd.unwrap());
            }
        }
    }

    #[test]
    fn pfa_verify_is_h0_only() {
        let c = ExperimentConfig {
            m: vec![2],
            ..small(ExperimentKind::PfaVerify)
        };
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.summary.len(), 2);
        assert!(out.summary.iter().all(|r| r.pd.is_none()));
        assert!(out.records.iter().all(|r| r.hypothesis == Hypothesis::H0));
        assert_eq!(out.summary[0].experiment, "pfa_verify");
        assert_eq!(out.summary[1].experiment, "pfa_verify:var=10");
    }

    #[test]
    fn histogram_bins_cover_the_counts() {
        let c = small(ExperimentKind::StatisticHist);
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.histogram.len(), c.hist_bins);
        let total: usize = out.histogram.iter().map(|b| b.count).sum();
        assert!((95..=100).contains(&total));
        assert_eq!(out.histogram[0].bin_lo, 0.0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut c = ExperimentConfig {
            snr_db: vec![-10.0],
            ..small(ExperimentKind::PdVsSnr)
        };
        c.workers = Some(1);
        let a = run_experiment(&c).unwrap();
        c.workers = Some(3);
        let b = run_experiment(&c).unwrap();
        assert_eq!(a, b);
    }
}
