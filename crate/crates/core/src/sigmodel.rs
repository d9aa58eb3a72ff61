//! BPSK signal-of-interest model and its cyclic-frequency catalog.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::cyclostat::cyclic_autocorrelation;
use crate::error::{Error, Result};
use crate::numerics::rng::rng_from_seed;

/// Seed of the clean probe signal used by [`best_lag`].
pub const PROBE_SEED: u64 = 0x7a11_b0a7;
/// Default probe length for lag calibration.
pub const DEFAULT_PROBE_LEN: usize = 1 << 18;

/// Parametric rectangular-pulse BPSK source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub carrier_freq_hz: f64,
    pub symbol_period_s: f64,
    pub sample_rate_hz: f64,
    /// Mean squared amplitude.
    pub power: f64,
    pub initial_phase_rad: f64,
}

impl SignalSpec {
    /// 80 kHz carrier, 25 µs symbols, sampled at 320 kHz, unit power.
    pub fn reference_soi() -> Self {
        Self {
            carrier_freq_hz: 80e3,
            symbol_period_s: 25e-6,
            sample_rate_hz: 320e3,
            power: 1.0,
            initial_phase_rad: 0.0,
        }
    }

    pub fn with_power(self, power: f64) -> Self {
        Self { power, ..self }
    }

    pub fn with_carrier(self, carrier_freq_hz: f64) -> Self {
        Self {
            carrier_freq_hz,
            ..self
        }
    }

    pub fn with_phase(self, initial_phase_rad: f64) -> Self {
        Self {
            initial_phase_rad,
            ..self
        }
    }

    /// Integer oversampling factor `T_b * f_s`.
    pub fn samples_per_symbol(&self) -> Result<usize> {
        self.validate()?;
        let l = self.symbol_period_s * self.sample_rate_hz;
        let rounded = l.round();
        if rounded < 1.0 || (l - rounded).abs() > 1e-9 * l.max(1.0) {
            return Err(Error::Config(format!(
                "samples per symbol must be a positive integer, got {l}"
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sample_rate_hz > 0.0
            && self.symbol_period_s > 0.0
            && self.carrier_freq_hz >= 0.0
            && self.power >= 0.0
            && self.initial_phase_rad.is_finite()
            && self.carrier_freq_hz.is_finite()
            && self.power.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid signal spec {self:?}")))
        }
    }
}

/// A cyclic frequency together with the correlation form and lag it is read at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicFeature {
    pub alpha_hz: f64,
    /// Feature lives in the conjugate cyclic correlation.
    pub conjugate: bool,
    pub lag_samples: usize,
}

impl CyclicFeature {
    /// The conjugate feature at twice the carrier, lag 0.
    pub fn doubled_carrier(spec: &SignalSpec) -> Self {
        Self {
            alpha_hz: 2.0 * spec.carrier_freq_hz,
            conjugate: true,
            lag_samples: 0,
        }
    }
}

/// Sampled complex baseband stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub data: Vec<Complex64>,
    pub sample_rate_hz: f64,
}

impl SampleStream {
    pub fn new(data: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if sample_rate_hz.is_nan() || sample_rate_hz <= 0.0 {
            return Err(Error::Contract("sample rate must be positive".into()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Contract(
                "sample stream contains non-finite values".into(),
            ));
        }
        Ok(Self {
            data,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }
}

/// `s(n) = sqrt(P) b(floor(n/L)) exp(j(2π f_c n T_s + φ))` with i.i.d.
/// equiprobable `b ∈ {-1, +1}`, drawing bits from `rng`.
pub fn gen_bpsk_with<R: Rng + ?Sized>(
    spec: &SignalSpec,
    n_samples: usize,
    rng: &mut R,
) -> Result<SampleStream> {
    let l = spec.samples_per_symbol()?;
    if n_samples == 0 {
        return Err(Error::Contract("n_samples must be positive".into()));
    }
    let amplitude = spec.power.sqrt();
    let cycles_per_sample = spec.carrier_freq_hz / spec.sample_rate_hz;
    let mut data = Vec::with_capacity(n_samples);
    let mut bit = 0.0;
    for n in 0..n_samples {
        if n % l == 0 {
            bit = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let phase = 2.0 * PI * (cycles_per_sample * n as f64).fract() + spec.initial_phase_rad;
        data.push(Complex64::from_polar(amplitude * bit, phase));
    }
    Ok(SampleStream {
        data,
        sample_rate_hz: spec.sample_rate_hz,
    })
}

pub fn gen_bpsk(spec: &SignalSpec, n_samples: usize, seed: u64) -> Result<SampleStream> {
    gen_bpsk_with(spec, n_samples, &mut rng_from_seed(seed))
}

/// Theoretical cyclic frequencies of rectangular BPSK: `k/T_b`
/// (non-conjugate) and `±2 f_c + k/T_b` (conjugate) for `k ∈ {-1, 0, 1}`,
/// omitting `α = 0` and anything beyond the sample rate. Lags are 0.
pub fn cyclic_features_bpsk(spec: &SignalSpec) -> Vec<CyclicFeature> {
    let symbol_rate = 1.0 / spec.symbol_period_s;
    let mut out = Vec::new();
    let mut push = |alpha_hz: f64, conjugate: bool| {
        if alpha_hz != 0.0 && alpha_hz.abs() <= spec.sample_rate_hz {
            out.push(CyclicFeature {
                alpha_hz,
                conjugate,
                lag_samples: 0,
            });
        }
    };
    for k in [-1.0, 0.0, 1.0] {
        push(k * symbol_rate, false);
    }
    for sign in [1.0, -1.0] {
        for k in [-1.0, 0.0, 1.0] {
            push(sign * 2.0 * spec.carrier_freq_hz + k * symbol_rate, true);
        }
    }
    out
}

/// `|R^α(τ)|` for `τ = 0..=max_lag`, estimated on a clean probe signal.
pub fn lag_profile(
    spec: &SignalSpec,
    feature: &CyclicFeature,
    max_lag: usize,
    n_probe: usize,
) -> Result<Vec<f64>> {
    if n_probe <= max_lag {
        return Err(Error::Contract(format!(
            "probe length {n_probe} must exceed max_lag {max_lag}"
        )));
    }
    let probe = gen_bpsk(spec, n_probe, PROBE_SEED)?;
    (0..=max_lag)
        .map(|lag| {
            cyclic_autocorrelation(
                &probe.data,
                probe.sample_rate_hz,
                feature.alpha_hz,
                lag,
                feature.conjugate,
            )
            .map(|r| r.norm())
        })
        .collect()
}

/// Lag in `[0, max_lag]` maximizing the feature's cyclic autocorrelation
/// magnitude; ties resolve to the smallest lag.
pub fn best_lag(
    spec: &SignalSpec,
    feature: &CyclicFeature,
    max_lag: usize,
    n_probe: usize,
) -> Result<usize> {
    let profile = lag_profile(spec, feature, max_lag, n_probe)?;
    let mut best = 0;
    for (lag, &v) in profile.iter().enumerate() {
        if v > profile[best] * (1.0 + 1e-9) {
            best = lag;
        }
    }
    Ok(best)
}
