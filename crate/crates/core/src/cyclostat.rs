//! Second-order estimators: lagged covariance, (conjugate) cyclic
//! covariance and the time-smoothed cyclic periodogram (MSDF).
//!
//! All lagged sums run over `n = τ..N-1` with a `1/N` normalization, and
//! the cyclic weighting `e^{-j2π α n T_s}` uses the absolute sample index
//! within the frame.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::IqFrame;
use crate::error::{Error, Result};
use crate::numerics::fft::forward_plan;
use crate::numerics::matrix::ComplexMatrix;
use crate::sigmodel::CyclicFeature;

/// Steps between exact re-evaluations of the phasor recurrence.
const PHASOR_RESYNC: usize = 256;

/// Generates `e^{-j2π f n}` for `n = start, start+1, ...` with `f` in
/// cycles per sample, by recurrence with periodic exact resynchronization.
#[derive(Debug, Clone)]
pub struct Phasor {
    cycles_per_sample: f64,
    step: Complex64,
    current: Complex64,
    n: usize,
}

impl Phasor {
    pub fn new(cycles_per_sample: f64, start: usize) -> Self {
        let mut p = Self {
            cycles_per_sample,
            step: Complex64::from_polar(1.0, -2.0 * PI * cycles_per_sample.fract()),
            current: Complex64::new(1.0, 0.0),
            n: start,
        };
        p.current = p.exact(start);
        p
    }

    fn exact(&self, n: usize) -> Complex64 {
        if self.cycles_per_sample == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let turns = (self.cycles_per_sample * n as f64).fract();
        Complex64::from_polar(1.0, -2.0 * PI * turns)
    }
}

impl Iterator for Phasor {
    type Item = Complex64;

    fn next(&mut self) -> Option<Complex64> {
        let out = self.current;
        self.n += 1;
        self.current = if self.n.is_multiple_of(PHASOR_RESYNC) {
            self.exact(self.n)
        } else {
            self.current * self.step
        };
        Some(out)
    }
}

fn check_lag(n: usize, lag: usize) -> Result<()> {
    if lag >= n {
        return Err(Error::Contract(format!(
            "lag {lag} must be below frame length {n}"
        )));
    }
    Ok(())
}

/// `(1/N) Σ_{n=lag}^{N-1} x(n) y(n-lag)^{(*)} w(n)` for every antenna pair,
/// with `w` the cyclic weighting or 1.
fn lagged_outer(
    frame: &IqFrame,
    lag: usize,
    conjugate: bool,
    alpha_hz: Option<f64>,
) -> Result<ComplexMatrix> {
    let n = frame.len();
    check_lag(n, lag)?;
    let m = frame.antennas();
    let weights: Option<Vec<Complex64>> = alpha_hz.filter(|&a| a != 0.0).map(|a| {
        Phasor::new(a / frame.sample_rate_hz(), lag)
            .take(n - lag)
            .collect()
    });
    let mut out = ComplexMatrix::zeros(m, m);
    let norm = 1.0 / n as f64;
    for i in 0..m {
        let xi = &frame.antenna(i)[lag..];
        let weighted: Vec<Complex64> = match &weights {
            Some(w) => xi.iter().zip(w).map(|(a, b)| a * b).collect(),
            None => xi.to_vec(),
        };
        for j in 0..m {
            let xj = &frame.antenna(j)[..n - lag];
            let acc: Complex64 = if conjugate {
                weighted.iter().zip(xj).map(|(a, b)| a * b).sum()
            } else {
                weighted.iter().zip(xj).map(|(a, b)| a * b.conj()).sum()
            };
            out[(i, j)] = acc * norm;
        }
    }
    Ok(out)
}

/// Lagged covariance `(1/N) Σ_{n=lag}^{N-1} x(n) x^H(n-lag)`.
pub fn cov_lag(frame: &IqFrame, lag: usize) -> Result<ComplexMatrix> {
    lagged_outer(frame, lag, false, None)
}

/// Cyclic covariance `(1/N) Σ_{n=lag}^{N-1} x(n) x^H(n-lag) e^{-j2π α n T_s}`;
/// with `conjugate` the Hermitian transpose becomes a plain transpose.
pub fn cyclic_cov(
    frame: &IqFrame,
    alpha_hz: f64,
    lag: usize,
    conjugate: bool,
) -> Result<ComplexMatrix> {
    lagged_outer(frame, lag, conjugate, Some(alpha_hz))
}

/// Scalar cyclic autocorrelation of a single stream, same conventions as
/// [`cyclic_cov`].
pub fn cyclic_autocorrelation(
    x: &[Complex64],
    sample_rate_hz: f64,
    alpha_hz: f64,
    lag: usize,
    conjugate: bool,
) -> Result<Complex64> {
    let n = x.len();
    check_lag(n, lag)?;
    let phasor = Phasor::new(alpha_hz / sample_rate_hz, lag);
    let acc: Complex64 = x[lag..]
        .iter()
        .zip(&x[..n - lag])
        .zip(phasor)
        .map(|((a, b), w)| {
            if conjugate {
                a * b * w
            } else {
                a * b.conj() * w
            }
        })
        .sum();
    Ok(acc / n as f64)
}

/// Covariance and cyclic covariance of one frame at one feature.
#[derive(Debug, Clone)]
pub struct CyclicCovPair {
    pub cov: ComplexMatrix,
    pub cyc_cov: ComplexMatrix,
    pub conjugate: bool,
    pub alpha_hz: f64,
    pub lag: usize,
    /// Terms in each sum, `N - lag`.
    pub n_used: usize,
}

impl CyclicCovPair {
    pub fn estimate(frame: &IqFrame, feature: &CyclicFeature) -> Result<Self> {
        let lag = feature.lag_samples;
        Ok(Self {
            cov: cov_lag(frame, lag)?,
            cyc_cov: cyclic_cov(frame, feature.alpha_hz, lag, feature.conjugate)?,
            conjugate: feature.conjugate,
            alpha_hz: feature.alpha_hz,
            lag,
            n_used: frame.len() - lag,
        })
    }
}

/// Block processing parameters of the MSDF estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdfConfig {
    /// Samples per block (power of two); blocks overlap by half.
    pub n_fft: usize,
    /// Required spacing of the frequency grid; blocks are zero-padded when
    /// `f_s / n_fft` is coarser than this.
    pub resolution_hz: f64,
}

impl MsdfConfig {
    /// 128-sample blocks at a resolution of `f_s / 100`.
    pub fn for_sample_rate(sample_rate_hz: f64) -> Self {
        Self {
            n_fft: 128,
            resolution_hz: sample_rate_hz / 100.0,
        }
    }

    /// Transform length after zero padding.
    pub fn transform_len(&self, sample_rate_hz: f64) -> usize {
        let needed = (sample_rate_hz / self.resolution_hz).ceil() as usize;
        self.n_fft.max(needed.next_power_of_two())
    }
}

/// Peak magnitude over frequency of the time-smoothed cyclic periodogram at
/// `α`, normalized by the block length times the stream's average energy per
/// sample.
///
/// Non-conjugate form averages `X(f+α/2) X*(f-α/2)`, the conjugate form
/// `X(α/2+f) X(α/2-f)`; each block is phase-referenced to the frame start.
/// `α/2` is rounded to the nearest bin of the (padded) grid.
pub fn msdf_peak(
    x: &[Complex64],
    sample_rate_hz: f64,
    alpha_hz: f64,
    conjugate: bool,
    cfg: &MsdfConfig,
) -> Result<f64> {
    let n_fft = cfg.n_fft;
    if n_fft == 0 || !n_fft.is_power_of_two() {
        return Err(Error::Contract(format!(
            "n_fft must be a power of two, got {n_fft}"
        )));
    }
    if cfg.resolution_hz.is_nan() || cfg.resolution_hz <= 0.0 {
        return Err(Error::Contract("resolution must be positive".into()));
    }
    if x.len() < n_fft {
        return Err(Error::Contract(format!(
            "stream of {} samples is shorter than one {n_fft}-sample block",
            x.len()
        )));
    }
    let energy = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
    if energy == 0.0 {
        return Ok(0.0);
    }
    let n_tf = cfg.transform_len(sample_rate_hz);
    let plan = forward_plan(n_tf)?;
    let hop = (n_fft / 2).max(1);
    let n_blocks = (x.len() - n_fft) / hop + 1;
    let half_shift = ((alpha_hz / 2.0) / sample_rate_hz * n_tf as f64).round() as i64;
    let wrap = |k: i64| k.rem_euclid(n_tf as i64) as usize;
    let alpha_norm = alpha_hz / sample_rate_hz;

    let mut acc = vec![Complex64::new(0.0, 0.0); n_tf];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_tf];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for b in 0..n_blocks {
        let start = b * hop;
        buf[..n_fft].copy_from_slice(&x[start..start + n_fft]);
        buf[n_fft..]
            .iter_mut()
            .for_each(|z| *z = Complex64::new(0.0, 0.0));
        plan.process_with_scratch(&mut buf, &mut scratch);
        let block_phase =
            Complex64::from_polar(1.0, -2.0 * PI * (alpha_norm * start as f64).fract());
        for (k, a) in acc.iter_mut().enumerate() {
            let k = k as i64;
            let term = if conjugate {
                buf[wrap(half_shift + k)] * buf[wrap(half_shift - k)]
            } else {
                buf[wrap(k + half_shift)] * buf[wrap(k - half_shift)].conj()
            };
            *a += term * block_phase;
        }
    }
    let norm = 1.0 / (n_blocks as f64 * n_fft as f64 * energy);
    Ok(acc.iter().map(|z| z.norm()).fold(0.0, f64::max) * norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_noise, NoiseSpec};
    use crate::sigmodel::{gen_bpsk, SignalSpec};

    const FS: f64 = 320e3;

    #[test]
    fn phasor_matches_direct_evaluation() {
        let p: Vec<_> = Phasor::new(0.123_456, 3).take(5000).collect();
        for (i, z) in p.iter().enumerate() {
            let exact = Complex64::from_polar(1.0, -2.0 * PI * 0.123_456 * (i + 3) as f64);
            assert!((z - exact).norm() < 1e-11, "i={i}");
        }
    }

    #[test]
    fn zero_frame_gives_zero_cov() {
        let f = IqFrame::zeros(2, 100, FS);
        assert_eq!(cov_lag(&f, 3).unwrap(), ComplexMatrix::zeros(2, 2));
    }

    #[test]
    fn constant_frame_gives_outer_product() {
        let c = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)];
        let f = IqFrame::from_streams(&[vec![c[0]; 50], vec![c[1]; 50]], FS).unwrap();
        let r = cov_lag(&f, 0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[(i, j)] - c[i] * c[j].conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn lag_bounds() {
        let f = IqFrame::zeros(1, 10, FS);
        assert!(cov_lag(&f, 10).is_err());
        assert!(cyclic_cov(&f, 1.0, 10, true).is_err());
        assert!(cov_lag(&f, 9).is_ok());
    }

    #[test]
    fn white_noise_cov_is_identity() {
        let f = gen_noise(2, 1_000_000, &NoiseSpec::white(1.0), FS, 8).unwrap();
        let r = cov_lag(&f, 0).unwrap();
        assert!(r.sub(&ComplexMatrix::identity(2)).frobenius_norm() < 0.005 * 2.0);
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((r[(i, j)] - Complex64::new(e, 0.0)).norm() < 0.005);
            }
        }
    }

    #[test]
    fn zero_alpha_matches_covariance() {
        let f = gen_noise(3, 500, &NoiseSpec::white(1.0), FS, 9).unwrap();
        assert_eq!(
            cyclic_cov(&f, 0.0, 2, false).unwrap(),
            cov_lag(&f, 2).unwrap()
        );
    }

    #[test]
    fn noise_has_no_cyclic_feature() {
        let f = gen_noise(2, 4000, &NoiseSpec::white(1.0), FS, 10).unwrap();
        let c = cyclic_cov(&f, 160e3, 0, true).unwrap();
        let r = cov_lag(&f, 0).unwrap();
        assert!(c.frobenius_norm() < 0.1 * r.frobenius_norm());
    }

    #[test]
    fn bpsk_feature_only_in_conjugate_form() {
        let spec = SignalSpec::reference_soi();
        let mut conj_mag = 0.0;
        let mut plain_mag = 0.0;
        for seed in 0..100 {
            let s = gen_bpsk(&spec, 4000, seed).unwrap();
            let f = IqFrame::replicate(&s, 1).unwrap();
            conj_mag += cyclic_cov(&f, 160e3, 0, true).unwrap()[(0, 0)].norm();
            plain_mag += cyclic_cov(&f, 160e3, 0, false).unwrap()[(0, 0)].norm();
        }
        assert!((conj_mag / 100.0 - 1.0).abs() < 0.1);
        assert!(plain_mag / 100.0 < 0.05);
    }

    #[test]
    fn scalar_and_matrix_estimators_agree() {
        let f = gen_noise(1, 300, &NoiseSpec::white(1.0), FS, 12).unwrap();
        for conj in [false, true] {
            let a = cyclic_autocorrelation(f.antenna(0), FS, 37e3, 3, conj).unwrap();
            let b = cyclic_cov(&f, 37e3, 3, conj).unwrap()[(0, 0)];
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn msdf_signal_beats_noise_and_is_scale_free() {
        let cfg = MsdfConfig::for_sample_rate(FS);
        assert_eq!(cfg.transform_len(FS), 128);
        let noise = gen_noise(1, 4000, &NoiseSpec::white(1.0), FS, 13).unwrap();
        let s = gen_bpsk(&SignalSpec::reference_soi(), 4000, 14).unwrap();
        let pn = msdf_peak(noise.antenna(0), FS, 160e3, true, &cfg).unwrap();
        let ps = msdf_peak(&s.data, FS, 160e3, true, &cfg).unwrap();
        assert!(ps > 5.0 * pn, "signal {ps} noise {pn}");
        let scaled: Vec<_> = s.data.iter().map(|z| z * 10.0).collect();
        let ps10 = msdf_peak(&scaled, FS, 160e3, true, &cfg).unwrap();
        assert!((ps10 - ps).abs() < 1e-12 * ps);
    }

    #[test]
    fn msdf_contract_errors() {
        let cfg = MsdfConfig::for_sample_rate(FS);
        let short = vec![Complex64::new(1.0, 0.0); 100];
        assert!(msdf_peak(&short, FS, 160e3, true, &cfg).is_err());
        let bad = MsdfConfig { n_fft: 100, ..cfg };
        assert!(msdf_peak(&[Complex64::new(1.0, 0.0); 400], FS, 160e3, true, &bad).is_err());
    }

    #[test]
    fn msdf_zero_pads_to_resolution() {
        let cfg = MsdfConfig {
            n_fft: 64,
            resolution_hz: FS / 100.0,
        };
        assert_eq!(cfg.transform_len(FS), 128);
    }

    #[test]
    fn msdf_of_bin_centred_tone_is_block_length() {
        // e^{j2π f0 n} with f0 on a bin: every block contributes n_fft² at f = 0
        let cfg = MsdfConfig::for_sample_rate(FS);
        let tone: Vec<Complex64> = (0..4000)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * 0.25 * n as f64))
            .collect();
        let peak = msdf_peak(&tone, FS, 160e3, true, &cfg).unwrap();
        assert!((peak - 128.0).abs() < 1e-9, "{peak}");
    }

    /// Direct O(N²) evaluation of the same smoothed cyclic periodogram.
    fn naive_msdf(x: &[Complex64], alpha_norm: f64, conjugate: bool, n_fft: usize) -> f64 {
        let hop = n_fft / 2;
        let n_blocks = (x.len() - n_fft) / hop + 1;
        let shift = (alpha_norm / 2.0 * n_fft as f64).round() as i64;
        let dft = |start: usize, k: i64| -> Complex64 {
            (0..n_fft)
                .map(|i| {
                    x[start + i]
                        * Complex64::from_polar(
                            1.0,
                            -2.0 * PI * (k * i as i64) as f64 / n_fft as f64,
                        )
                })
                .sum()
        };
        let energy = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
        let mut best = 0.0f64;
        for k in 0..n_fft as i64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..n_blocks {
                let start = b * hop;
                let phase = Complex64::from_polar(1.0, -2.0 * PI * alpha_norm * start as f64);
                let term = if conjugate {
                    dft(start, shift + k) * dft(start, shift - k)
                } else {
                    dft(start, k + shift) * dft(start, k - shift).conj()
                };
                acc += term * phase;
            }
            best = best.max(acc.norm() / (n_blocks as f64 * n_fft as f64 * energy));
        }
        best
    }

    #[test]
    fn msdf_matches_direct_evaluation() {
        let cfg = MsdfConfig {
            n_fft: 32,
            resolution_hz: FS / 32.0,
        };
        let s = gen_bpsk(&SignalSpec::reference_soi(), 200, 15).unwrap();
        let noise = gen_noise(1, 200, &NoiseSpec::white(1.0), FS, 16).unwrap();
        let x: Vec<_> = s
            .data
            .iter()
            .zip(noise.antenna(0))
            .map(|(a, b)| a + b)
            .collect();
        for (alpha, conj) in [(160e3, true), (40e3, false), (37e3, true)] {
            let fast = msdf_peak(&x, FS, alpha, conj, &cfg).unwrap();
            let slow = naive_msdf(&x, alpha / FS, conj, 32);
            assert!(
                (fast - slow).abs() < 1e-9 * slow.max(1.0),
                "alpha={alpha}: {fast} vs {slow}"
            );
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn cyclic_cov_scales_with_magnitude_squared(
                seed in any::<u64>(),
                re in -5.0f64..5.0,
                im in -5.0f64..5.0,
                lag in 0usize..5,
                conj in any::<bool>(),
            ) {
                let c = Complex64::new(re, im);
                prop_assume!(c.norm() > 1e-3);
                let f = gen_noise(3, 128, &NoiseSpec::white(1.0), FS, seed).unwrap();
                let base = cyclic_cov(&f, 160e3, lag, conj).unwrap();
                let scaled = cyclic_cov(&f.scaled(c), 160e3, lag, conj).unwrap();
                // conjugate form picks up c², the plain form |c|²
                let factor = if conj { c * c } else { Complex64::new(c.norm_sqr(), 0.0) };
                let err = scaled.sub(&base.scale(factor)).frobenius_norm();
                prop_assert!(err <= 1e-12 * scaled.frobenius_norm().max(1e-300));
            }
        }
    }
}
