//! Detectors and their thresholds.

mod baselines;
mod calibrate;
mod evcss;

use std::fmt;
use std::str::FromStr;

pub use baselines::{
    blind_channel_estimate, bmrc_msdf_detect, bmrc_msdf_statistic, egc_detect, egc_phase_estimates,
    egc_statistic, equal_gain_combine, mrc_combine, perfect_csi_mrc_statistic, sum_msdf_detect,
    sum_msdf_statistic,
};
pub use calibrate::{
    calibrate_threshold, calibrate_thresholds, h0_statistics, statistics_pool, trial_statistics,
    Calibration, MAX_REDRAWS,
};
pub use evcss::{
    ccst_statistic, ev_css_detect, ev_css_dof, ev_css_threshold, CcstOutput, EvCssConfig,
    MU_CLAMP_MARGIN,
};

use crate::channel::IqFrame;
use crate::cyclostat::MsdfConfig;
use crate::error::{Error, Result};
use crate::sigmodel::CyclicFeature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorId {
    EvCss,
    SumMsdf,
    EgcMsdf,
    BmrcMsdf,
}

impl DetectorId {
    pub const ALL: [DetectorId; 4] = [
        DetectorId::EvCss,
        DetectorId::SumMsdf,
        DetectorId::EgcMsdf,
        DetectorId::BmrcMsdf,
    ];

    /// Stable identifier used on the command line and in CSV output.
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::EvCss => "ev-css",
            DetectorId::SumMsdf => "sum-msdf",
            DetectorId::EgcMsdf => "egc-msdf",
            DetectorId::BmrcMsdf => "bmrc-msdf",
        }
    }

    /// Whether the detector has an analytic threshold.
    pub fn is_analytic(self) -> bool {
        self == DetectorId::EvCss
    }

    /// Test statistic of this detector on one frame.
    pub fn statistic(
        self,
        frame: &IqFrame,
        feature: &CyclicFeature,
        msdf: &MsdfConfig,
    ) -> Result<f64> {
        match self {
            DetectorId::EvCss => ccst_statistic(frame, feature).map(|o| o.statistic),
            DetectorId::SumMsdf => sum_msdf_statistic(frame, feature, msdf),
            DetectorId::EgcMsdf => egc_statistic(frame, feature, msdf),
            DetectorId::BmrcMsdf => bmrc_msdf_statistic(frame, feature, msdf),
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorId::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown detector '{s}' (expected one of ev-css, sum-msdf, egc-msdf, bmrc-msdf)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub detector: DetectorId,
    pub statistic: f64,
    pub threshold: f64,
    /// H1 declared: `statistic > threshold`.
    pub decision: bool,
    /// EV-CSS canonical correlations; empty for the baselines.
    pub singular_values: Vec<f64>,
}
