//! Eigenvalue-based cyclostationary spectrum sensing (EV-CSS).
//!
//! The statistic is built from the squared canonical correlations `μ_i`
//! between `u(n) = x(n)` and the frequency-shifted lag
//! `v(n) = x^{(*)}(n-τ) e^{-j2π α n T_s}`, i.e. the eigenvalues of
//! `R_uu^{-1} C R_vv^{-1} C^H` with `C` the cyclic covariance:
//!
//! `T = -N Σ ln(1 - μ_i)`
//!
//! Under H0 it is asymptotically χ² with `M²` (non-conjugate) or `M(M+1)`
//! (conjugate) degrees of freedom, so the threshold depends on neither the
//! noise power nor N.
//!
//! The `μ_i` are read off an SVD of the Hermitian matrix
//! `L^{-1} C R_vv^{-1} C^H L^{-H}` (`L L^H = R_uu`), which is similar to the
//! product above. Taking singular values of the non-Hermitian product
//! itself would not give the canonical correlations once the noise is
//! spatially correlated.

use num_complex::Complex64;

use super::{DetectionResult, DetectorId};
use crate::channel::IqFrame;
use crate::cyclostat::cyclic_cov;
use crate::error::{Error, Result};
use crate::numerics::chi2::chi2_quantile;
use crate::numerics::linalg::{cholesky, solve_linear, svd, whiten_congruence};
use crate::numerics::matrix::ComplexMatrix;
use crate::sigmodel::CyclicFeature;

/// Canonical correlations are clamped to `1 - MU_CLAMP_MARGIN` before the log.
pub const MU_CLAMP_MARGIN: f64 = 1e-12;

/// EV-CSS settings. There is deliberately no SNR or noise-power field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvCssConfig {
    pub feature: CyclicFeature,
    pub target_pfa: f64,
}

impl EvCssConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_pfa > 0.0 && self.target_pfa < 1.0) {
            return Err(Error::Config(format!(
                "target P_fa must lie in (0, 1), got {}",
                self.target_pfa
            )));
        }
        Ok(())
    }

    pub fn threshold(&self, antennas: usize) -> Result<f64> {
        ev_css_threshold(antennas, self.feature.conjugate, self.target_pfa)
    }
}

/// Degrees of freedom of the H0 χ² law.
pub fn ev_css_dof(antennas: usize, conjugate: bool) -> u32 {
    let m = antennas as u32;
    if conjugate {
        m * (m + 1)
    } else {
        m * m
    }
}

/// `γ` with `P(χ²_k > γ) = target_pfa`.
pub fn ev_css_threshold(antennas: usize, conjugate: bool, target_pfa: f64) -> Result<f64> {
    if antennas == 0 {
        return Err(Error::Config("M must be at least 1".into()));
    }
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::Config(format!(
            "target P_fa must lie in (0, 1), got {target_pfa}"
        )));
    }
    chi2_quantile(1.0 - target_pfa, ev_css_dof(antennas, conjugate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcstOutput {
    pub statistic: f64,
    /// Squared canonical correlations after clamping, descending.
    pub singular_values: Vec<f64>,
    /// How many values the clamp changed.
    pub clamped: usize,
}

/// `(1/N) Σ_{n=start}^{start+len-1} x(n) x^H(n)`.
fn window_cov(frame: &IqFrame, start: usize, len: usize) -> ComplexMatrix {
    let m = frame.antennas();
    let norm = 1.0 / frame.len() as f64;
    let mut out = ComplexMatrix::zeros(m, m);
    for i in 0..m {
        let xi = &frame.antenna(i)[start..start + len];
        for j in i..m {
            let xj = &frame.antenna(j)[start..start + len];
            let acc: Complex64 = xi.iter().zip(xj).map(|(a, b)| a * b.conj()).sum();
            out[(i, j)] = acc * norm;
            out[(j, i)] = (acc * norm).conj();
        }
    }
    out
}

fn undecidable(e: Error) -> Error {
    match e {
        Error::SingularMatrix { condition } => Error::UndecidableFrame(format!(
            "covariance is singular (condition {condition:.3e})"
        )),
        other => other,
    }
}

/// CCST statistic and its canonical correlations for one frame.
pub fn ccst_statistic(frame: &IqFrame, feature: &CyclicFeature) -> Result<CcstOutput> {
    let n = frame.len();
    let lag = feature.lag_samples;
    if lag >= n {
        return Err(Error::Contract(format!(
            "lag {lag} must be below frame length {n}"
        )));
    }
    let used = n - lag;
    let r_uu = window_cov(frame, lag, used);
    let r_vv = {
        let r = window_cov(frame, 0, used);
        if feature.conjugate {
            r.conj()
        } else {
            r
        }
    };
    let c = cyclic_cov(frame, feature.alpha_hz, lag, feature.conjugate)?;

    let g = solve_linear(&r_vv, &c.adjoint()).map_err(undecidable)?;
    let b = c.matmul(&g).hermitian_part();
    let l = cholesky(&r_uu).map_err(undecidable)?;
    let k = whiten_congruence(&l, &b).hermitian_part();
    let raw = svd(&k)?.singular_values;

    let ceiling = 1.0 - MU_CLAMP_MARGIN;
    let mut clamped = 0;
    let singular_values: Vec<f64> = raw
        .iter()
        .map(|&mu| {
            if mu > ceiling {
                clamped += 1;
                ceiling
            } else {
                mu
            }
        })
        .collect();
    let statistic = -(n as f64) * singular_values.iter().map(|mu| (-mu).ln_1p()).sum::<f64>();
    Ok(CcstOutput {
        statistic: statistic.max(0.0),
        singular_values,
        clamped,
    })
}

/// Thresholds the CCST statistic at the analytic χ² quantile.
pub fn ev_css_detect(frame: &IqFrame, config: &EvCssConfig) -> Result<DetectionResult> {
    config.validate()?;
    let threshold = config.threshold(frame.antennas())?;
    let out = ccst_statistic(frame, &config.feature)?;
    Ok(DetectionResult {
        detector: DetectorId::EvCss,
        statistic: out.statistic,
        threshold,
        decision: out.statistic > threshold,
        singular_values: out.singular_values,
    })
}
