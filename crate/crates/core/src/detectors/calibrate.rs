//! Empirical threshold calibration on simulated H0 frames.

use rayon::prelude::*;

use super::DetectorId;
use crate::channel::{Hypothesis, Scenario};
use crate::cyclostat::MsdfConfig;
use crate::error::{Error, Result};
use crate::numerics::rng::derive_seed;
use crate::numerics::stats::upper_quantile;
use crate::sigmodel::CyclicFeature;

/// Redraws allowed per trial before an undecidable frame becomes an error.
pub const MAX_REDRAWS: u64 = 100;

/// Keeps calibration draws disjoint from evaluation draws under the same seed.
const CALIBRATION_TAG: u64 = 0xca1b_0000_0000_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// One threshold per requested detector, same order.
    pub thresholds: Vec<f64>,
    pub trials: usize,
    /// Frames that had to be redrawn because they were undecidable.
    pub redraws: u64,
}

/// Statistics of every detector on one trial's frame, redrawing the frame
/// (fresh sub-seed) while it is undecidable. Returns the statistics and
/// the number of redraws.
pub fn trial_statistics(
    detectors: &[DetectorId],
    scenario: &Scenario,
    hypothesis: Hypothesis,
    feature: &CyclicFeature,
    msdf: &MsdfConfig,
    seed: u64,
    trial: u64,
) -> Result<(Vec<f64>, u64)> {
    for attempt in 0..=MAX_REDRAWS {
        let frame = scenario.draw_frame(hypothesis, seed, trial, attempt)?;
        let stats: Result<Vec<f64>> = detectors
            .iter()
            .map(|d| d.statistic(&frame, feature, msdf))
            .collect();
        match stats {
            Ok(s) => return Ok((s, attempt)),
            Err(Error::UndecidableFrame(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::UndecidableFrame(format!(
        "trial {trial} stayed undecidable after {MAX_REDRAWS} redraws"
    )))
}

/// Statistics for trials `0..n_trials` under one hypothesis, one vector
/// per detector, in trial order regardless of scheduling. Also returns the
/// total number of redraws.
pub fn statistics_pool(
    detectors: &[DetectorId],
    scenario: &Scenario,
    hypothesis: Hypothesis,
    feature: &CyclicFeature,
    msdf: &MsdfConfig,
    n_trials: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, u64)> {
    let rows: Vec<(Vec<f64>, u64)> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| trial_statistics(detectors, scenario, hypothesis, feature, msdf, seed, t))
        .collect::<Result<_>>()?;
    let redraws = rows.iter().map(|(_, r)| r).sum();
    let per_detector = (0..detectors.len())
        .map(|d| rows.iter().map(|(s, _)| s[d]).collect())
        .collect();
    Ok((per_detector, redraws))
}

pub fn h0_statistics(
    detectors: &[DetectorId],
    scenario: &Scenario,
    feature: &CyclicFeature,
    msdf: &MsdfConfig,
    n_trials: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, u64)> {
    statistics_pool(
        detectors,
        scenario,
        Hypothesis::H0,
        feature,
        msdf,
        n_trials,
        seed,
    )
}

/// Empirical `(1 - target_pfa)` quantiles of each detector's statistic
/// over `n_trials` H0 frames. All detectors see the same frames.
pub fn calibrate_thresholds(
    detectors: &[DetectorId],
    scenario: &Scenario,
    feature: &CyclicFeature,
    msdf: &MsdfConfig,
    target_pfa: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Calibration> {
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::Config(format!(
            "target P_fa must lie in (0, 1), got {target_pfa}"
        )));
    }
    if (n_trials as f64) < 10.0 / target_pfa {
        return Err(Error::Config(format!(
            "{n_trials} calibration trials is too few for P_fa = {target_pfa} (need at least {})",
            (10.0 / target_pfa).ceil()
        )));
    }
    scenario.validate()?;
    let cal_seed = derive_seed(&[seed, CALIBRATION_TAG]);
    let (stats, redraws) = h0_statistics(detectors, scenario, feature, msdf, n_trials, cal_seed)?;
    let thresholds = stats
        .iter()
        .map(|s| upper_quantile(s, target_pfa).expect("n_trials > 0"))
        .collect();
    Ok(Calibration {
        thresholds,
        trials: n_trials,
        redraws,
    })
}

pub fn calibrate_threshold(
    detector: DetectorId,
    scenario: &Scenario,
    feature: &CyclicFeature,
    msdf: &MsdfConfig,
    target_pfa: f64,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    calibrate_thresholds(
        &[detector],
        scenario,
        feature,
        msdf,
        target_pfa,
        n_trials,
        seed,
    )
    .map(|c| c.thresholds[0])
}
