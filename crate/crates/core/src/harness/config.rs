//! Experiment configuration and its flat `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::detectors::DetectorId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    PfaVerify,
    StatisticHist,
    Roc,
    PdVsSnr,
    PdVsN,
    Interference,
    PdVsM,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::PfaVerify,
        ExperimentKind::StatisticHist,
        ExperimentKind::Roc,
        ExperimentKind::PdVsSnr,
        ExperimentKind::PdVsN,
        ExperimentKind::Interference,
        ExperimentKind::PdVsM,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::PfaVerify => "pfa_verify",
            ExperimentKind::StatisticHist => "statistic_hist",
            ExperimentKind::Roc => "roc",
            ExperimentKind::PdVsSnr => "pd_vs_snr",
            ExperimentKind::PdVsN => "pd_vs_n",
            ExperimentKind::Interference => "interference",
            ExperimentKind::PdVsM => "pd_vs_m",
        }
    }

    /// Whether the experiment simulates H1 frames at all.
    pub fn has_h1(self) -> bool {
        !matches!(
            self,
            ExperimentKind::PfaVerify | ExperimentKind::StatisticHist
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || k.as_str().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

/// One experiment: every grid is swept as a cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_kind: ExperimentKind,
    pub detectors: Vec<DetectorId>,
    /// Antenna counts.
    pub m: Vec<usize>,
    /// Samples per antenna.
    pub n: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub pfa: f64,
    pub rho: Vec<f64>,
    /// Empty when there is no interferer.
    pub sir_db: Vec<f64>,
    pub noise_variance: Vec<f64>,
    pub n_trials: usize,
    pub master_seed: u64,
    /// H0 frames per baseline threshold calibration.
    pub calibration_trials: usize,
    /// False-alarm operating points of the ROC sweep.
    pub roc_pfa: Vec<f64>,
    pub hist_bins: usize,
    /// `None` defers to `CYCLOSENSE_WORKERS`, then to one per core.
    pub workers: Option<usize>,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

fn snr_grid() -> Vec<f64> {
    (0..=10).map(|i| -20.0 + 2.0 * f64::from(i)).collect()
}

fn sir_grid() -> Vec<f64> {
    (0..=5).map(|i| -20.0 + 4.0 * f64::from(i)).collect()
}

impl ExperimentConfig {
    /// Defaults reproducing each figure's setting at desk scale.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            experiment_kind: kind,
            detectors: DetectorId::ALL.to_vec(),
            m: vec![2],
            n: vec![4000],
            snr_db: vec![-14.0],
            pfa: 0.1,
            rho: vec![0.0],
            sir_db: Vec::new(),
            noise_variance: vec![1.0],
            n_trials: 2000,
            master_seed: DEFAULT_SEED,
            calibration_trials: 5000,
            roc_pfa: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            hist_bins: 40,
            workers: None,
        };
        match kind {
            ExperimentKind::PfaVerify => Self {
                detectors: vec![DetectorId::EvCss],
                m: vec![2, 4],
                noise_variance: vec![1.0, 10.0],
                n_trials: 10_000,
                ..base
            },
            ExperimentKind::StatisticHist => Self {
                detectors: vec![DetectorId::EvCss],
                n_trials: 10_000,
                ..base
            },
            ExperimentKind::Roc => Self {
                detectors: vec![DetectorId::EvCss, DetectorId::BmrcMsdf],
                ..base
            },
            ExperimentKind::PdVsSnr => Self {
                snr_db: snr_grid(),
                ..base
            },
            ExperimentKind::PdVsN => Self {
                n: vec![1000, 2000, 4000, 8000],
                rho: vec![0.0, 0.5],
                ..base
            },
            ExperimentKind::Interference => Self {
                detectors: vec![DetectorId::EvCss, DetectorId::BmrcMsdf],
                snr_db: vec![0.0],
                sir_db: sir_grid(),
                ..base
            },
            ExperimentKind::PdVsM => Self {
                m: vec![2, 3, 4],
                snr_db: vec![-16.0],
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.detectors.is_empty() {
            return bad("detector list is empty".into());
        }
        for (name, len) in [
            ("M", self.m.len()),
            ("N", self.n.len()),
            ("snr_db", self.snr_db.len()),
            ("rho", self.rho.len()),
            ("noise_variance", self.noise_variance.len()),
        ] {
            if len == 0 {
                return bad(format!("grid '{name}' is empty"));
            }
        }
        if self.n_trials < 100 {
            return bad(format!(
                "n_trials must be at least 100, got {}",
                self.n_trials
            ));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return bad(format!("pfa must lie in (0, 1), got {}", self.pfa));
        }
        if self.m.contains(&0) {
            return bad("M must be positive".into());
        }
        if self.n.iter().any(|&n| n < 16) {
            return bad("N must be at least 16".into());
        }
        if self.rho.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("rho must lie in [0, 1)".into());
        }
        if self
            .noise_variance
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return bad("noise_variance must be positive".into());
        }
        if self
            .snr_db
            .iter()
            .chain(&self.sir_db)
            .any(|x| !x.is_finite())
        {
            return bad("SNR and SIR values must be finite".into());
        }
        if self.experiment_kind == ExperimentKind::Roc
            && (self.roc_pfa.is_empty() || self.roc_pfa.iter().any(|p| !(*p > 0.0 && *p < 1.0)))
        {
            return bad("roc_pfa points must lie in (0, 1)".into());
        }
        if self.experiment_kind == ExperimentKind::Interference && self.sir_db.is_empty() {
            return bad("interference experiment needs a sir_db grid".into());
        }
        if self.hist_bins == 0 {
            return bad("hist_bins must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        let needs_calibration = self.detectors.iter().any(|d| !d.is_analytic());
        if needs_calibration && (self.calibration_trials as f64) < 10.0 / self.pfa {
            return bad(format!(
                "calibration_trials = {} is too few for pfa = {}",
                self.calibration_trials, self.pfa
            ));
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Sets one field from its textual form. Keys are the field names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment_kind" => {
                let kind: ExperimentKind = value.parse()?;
                if kind != self.experiment_kind {
                    return Err(Error::Config(format!(
                        "file is for '{kind}' but '{}' was requested",
                        self.experiment_kind
                    )));
                }
            }
            "detectors" => self.detectors = parse_list(value)?,
            "M" | "m" => self.m = parse_list(value)?,
            "N" | "n" => self.n = parse_list(value)?,
            "snr_db" => self.snr_db = parse_list(value)?,
            "pfa" => self.pfa = parse_one(value)?,
            "rho" => self.rho = parse_list(value)?,
            "sir_db" => self.sir_db = parse_list(value)?,
            "noise_variance" => self.noise_variance = parse_list(value)?,
            "n_trials" => self.n_trials = parse_one(value)?,
            "master_seed" => self.master_seed = parse_one(value)?,
            "calibration_trials" => self.calibration_trials = parse_one(value)?,
            "roc_pfa" => self.roc_pfa = parse_list(value)?,
            "hist_bins" => self.hist_bins = parse_one(value)?,
            "workers" => self.workers = Some(parse_one(value)?),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }
}

trait ParseValue: Sized {
    fn parse_value(s: &str) -> Result<Self>;
}

macro_rules! parse_via_fromstr {
    ($($t:ty),*) => {$(
        impl ParseValue for $t {
            fn parse_value(s: &str) -> Result<Self> {
                s.parse::<$t>()
                    .map_err(|e| Error::Config(format!("cannot parse '{s}': {e}")))
            }
        }
    )*};
}

parse_via_fromstr!(f64, u64, usize);

impl ParseValue for DetectorId {
    fn parse_value(s: &str) -> Result<Self> {
        s.parse()
    }
}

fn parse_one<T: ParseValue>(s: &str) -> Result<T> {
    T::parse_value(s.trim())
}

fn parse_list<T: ParseValue>(s: &str) -> Result<Vec<T>> {
    let s = s.trim().trim_start_matches('[').trim_end_matches(']');
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_one).collect()
}
