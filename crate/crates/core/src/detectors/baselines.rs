//! MSDF-based multi-antenna baselines.
//!
//! - SUM-MSDF: sum of the per-antenna MSDF peaks (no CSI).
//! - EGC-MSDF: co-phase the antennas against antenna 0, add, one MSDF.
//! - BMRC-MSDF: blind MRC with the dominant left singular vector of the
//!   cyclic covariance as channel estimate, then one MSDF.

use num_complex::Complex64;

use super::{DetectionResult, DetectorId};
use crate::channel::IqFrame;
use crate::cyclostat::{cyclic_cov, msdf_peak, MsdfConfig};
use crate::error::{Error, Result};
use crate::numerics::linalg::svd;
use crate::sigmodel::CyclicFeature;

fn msdf_of(
    y: &[Complex64],
    frame: &IqFrame,
    feature: &CyclicFeature,
    cfg: &MsdfConfig,
) -> Result<f64> {
    msdf_peak(
        y,
        frame.sample_rate_hz(),
        feature.alpha_hz,
        feature.conjugate,
        cfg,
    )
}

fn thresholded(detector: DetectorId, statistic: f64, threshold: f64) -> DetectionResult {
    DetectionResult {
        detector,
        statistic,
        threshold,
        decision: statistic > threshold,
        singular_values: Vec::new(),
    }
}

pub fn sum_msdf_statistic(
    frame: &IqFrame,
    feature: &CyclicFeature,
    cfg: &MsdfConfig,
) -> Result<f64> {
    (0..frame.antennas())
        .map(|k| msdf_of(frame.antenna(k), frame, feature, cfg))
        .sum()
}

pub fn sum_msdf_detect(
    frame: &IqFrame,
    feature: &CyclicFeature,
    cfg: &MsdfConfig,
    threshold: f64,
) -> Result<DetectionResult> {
    let s = sum_msdf_statistic(frame, feature, cfg)?;
    Ok(thresholded(DetectorId::SumMsdf, s, threshold))
}

/// Phase of each antenna relative to antenna 0, from the ratio of the
/// cross cyclic correlation (antenna k against the reference) to the
/// reference's own cyclic correlation. Both carry the same signal term, so
/// the ratio is `h_k / h_0` in expectation for either correlation form.
pub fn egc_phase_estimates(frame: &IqFrame, feature: &CyclicFeature) -> Result<Vec<f64>> {
    let c = cyclic_cov(
        frame,
        feature.alpha_hz,
        feature.lag_samples,
        feature.conjugate,
    )?;
    let auto = c[(0, 0)];
    Ok((0..frame.antennas())
        .map(|k| (c[(k, 0)] / auto).arg())
        .collect())
}

/// `y(n) = Σ_k x_k(n) e^{-jφ_k}`.
pub fn equal_gain_combine(frame: &IqFrame, phases: &[f64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); frame.len()];
    for (k, &phi) in phases.iter().enumerate().take(frame.antennas()) {
        let rot = Complex64::from_polar(1.0, -phi);
        for (acc, x) in y.iter_mut().zip(frame.antenna(k)) {
            *acc += x * rot;
        }
    }
    y
}

pub fn egc_statistic(frame: &IqFrame, feature: &CyclicFeature, cfg: &MsdfConfig) -> Result<f64> {
    let phases = egc_phase_estimates(frame, feature)?;
    msdf_of(&equal_gain_combine(frame, &phases), frame, feature, cfg)
}

pub fn egc_detect(
    frame: &IqFrame,
    feature: &CyclicFeature,
    cfg: &MsdfConfig,
    threshold: f64,
) -> Result<DetectionResult> {
    let s = egc_statistic(frame, feature, cfg)?;
    Ok(thresholded(DetectorId::EgcMsdf, s, threshold))
}

/// Dominant left singular vector of the cyclic covariance. Known only up to
/// a unit-modulus factor, which MSDF magnitudes ignore.
pub fn blind_channel_estimate(frame: &IqFrame, feature: &CyclicFeature) -> Result<Vec<Complex64>> {
    let c = cyclic_cov(
        frame,
        feature.alpha_hz,
        feature.lag_samples,
        feature.conjugate,
    )?;
    Ok(svd(&c)?.left_vectors.column(0))
}

/// `y(n) = h^H x(n) / ‖h‖`.
pub fn mrc_combine(frame: &IqFrame, h: &[Complex64]) -> Result<Vec<Complex64>> {
    if h.len() != frame.antennas() {
        return Err(Error::Contract(format!(
            "combining vector has {} entries, frame has {} antennas",
            h.len(),
            frame.antennas()
        )));
    }
    let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Contract("combining vector is zero".into()));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); frame.len()];
    for (k, hk) in h.iter().enumerate() {
        let w = hk.conj() / norm;
        for (acc, x) in y.iter_mut().zip(frame.antenna(k)) {
            *acc += w * x;
        }
    }
    Ok(y)
}

pub fn bmrc_msdf_statistic(
    frame: &IqFrame,
    feature: &CyclicFeature,
    cfg: &MsdfConfig,
) -> Result<f64> {
    let h = blind_channel_estimate(frame, feature)?;
    msdf_of(&mrc_combine(frame, &h)?, frame, feature, cfg)
}

pub fn bmrc_msdf_detect(
    frame: &IqFrame,
    feature: &CyclicFeature,
    cfg: &MsdfConfig,
    threshold: f64,
) -> Result<DetectionResult> {
    let s = bmrc_msdf_statistic(frame, feature, cfg)?;
    Ok(thresholded(DetectorId::BmrcMsdf, s, threshold))
}

/// MRC with the true channel. Diagnostic reference only, not a registered detector.
#[doc(hidden)]
pub fn perfect_csi_mrc_statistic(
    frame: &IqFrame,
    h: &[Complex64],
    feature: &CyclicFeature,
    cfg: &MsdfConfig,
) -> Result<f64> {
    msdf_of(&mrc_combine(frame, h)?, frame, feature, cfg)
}
