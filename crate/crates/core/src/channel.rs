//! Quasi-static Rayleigh fading, spatially correlated Gaussian noise and
//! received-frame composition.
//!
//! A frame is `x(n) = h_soi s(n) + h_int i(n) + η(n)`: single-tap channels,
//! constant over the frame, with noise covariance `σ² ρ^|i-j|` across
//! antennas and white in time.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::linalg::cholesky_toeplitz_rho;
use crate::numerics::rng::{normal_c64, rng_from_seed, stream_rng, StreamLabel};
use crate::sigmodel::{gen_bpsk_with, SampleStream, SignalSpec};

pub const IQF_MAGIC: &[u8; 4] = b"IQF1";

/// Per-antenna complex gains of one source, constant over a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(gains: Vec<Complex64>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::Contract("channel needs at least one antenna".into()));
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::Contract("non-finite channel gain".into()));
        }
        Ok(Self { gains })
    }

    /// All-ones channel (no fading).
    pub fn flat(m: usize) -> Self {
        Self {
            gains: vec![Complex64::new(1.0, 0.0); m],
        }
    }

    pub fn antennas(&self) -> usize {
        self.gains.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Per-antenna variance σ².
    pub variance: f64,
    /// Spatial correlation between adjacent antennas, in [0, 1].
    pub rho: f64,
}

impl NoiseSpec {
    pub fn white(variance: f64) -> Self {
        Self { variance, rho: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance must be positive, got {}",
                self.variance
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "rho must lie in [0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// M×N complex samples, antenna-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    antennas: usize,
    len: usize,
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
}

impl IqFrame {
    pub fn new(
        antennas: usize,
        len: usize,
        samples: Vec<Complex64>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if antennas == 0 || len == 0 {
            return Err(Error::Contract("frame needs M >= 1 and N >= 1".into()));
        }
        if samples.len() != antennas * len {
            return Err(Error::Contract(format!(
                "expected {} samples for {antennas}x{len}, got {}",
                antennas * len,
                samples.len()
            )));
        }
        if sample_rate_hz.is_nan() || sample_rate_hz <= 0.0 {
            return Err(Error::Contract("sample rate must be positive".into()));
        }
        if samples
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Contract("frame contains non-finite samples".into()));
        }
        Ok(Self {
            antennas,
            len,
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(antennas: usize, len: usize, sample_rate_hz: f64) -> Self {
        Self {
            antennas,
            len,
            samples: vec![Complex64::new(0.0, 0.0); antennas * len],
            sample_rate_hz,
        }
    }

    /// Frame whose every antenna carries the same stream.
    pub fn replicate(stream: &SampleStream, antennas: usize) -> Result<Self> {
        let samples = (0..antennas)
            .flat_map(|_| stream.data.iter().copied())
            .collect();
        Self::new(antennas, stream.len(), samples, stream.sample_rate_hz)
    }

    pub fn from_streams(streams: &[Vec<Complex64>], sample_rate_hz: f64) -> Result<Self> {
        let len = streams.first().map_or(0, Vec::len);
        if streams.iter().any(|s| s.len() != len) {
            return Err(Error::Contract("streams differ in length".into()));
        }
        Self::new(streams.len(), len, streams.concat(), sample_rate_hz)
    }

    /// Number of antennas M.
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Samples per antenna N.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn antenna(&self, k: usize) -> &[Complex64] {
        &self.samples[k * self.len..(k + 1) * self.len]
    }

    pub fn antenna_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.samples[k * self.len..(k + 1) * self.len]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.samples
    }

    /// Column `n` as an M-vector.
    pub fn snapshot(&self, n: usize) -> Vec<Complex64> {
        (0..self.antennas)
            .map(|k| self.samples[k * self.len + n])
            .collect()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|z| z * c).collect(),
            ..self.clone()
        }
    }

    pub fn stream(&self, k: usize) -> SampleStream {
        SampleStream {
            data: self.antenna(k).to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Writes the little-endian `IQF1` format: magic, u32 M, u64 N, f64
    /// sample rate, then M×N interleaved (re, im) f64 pairs, antenna-major.
    pub fn write_iqf<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(IQF_MAGIC)?;
        w.write_all(&(self.antennas as u32).to_le_bytes())?;
        w.write_all(&(self.len as u64).to_le_bytes())?;
        w.write_all(&self.sample_rate_hz.to_le_bytes())?;
        for z in &self.samples {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_iqf<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 24];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if &header[0..4] != IQF_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let m = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let fs = f64::from_le_bytes(header[16..24].try_into().unwrap());
        let total = m
            .checked_mul(n)
            .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
        let mut samples = Vec::with_capacity(total);
        let mut buf = [0u8; 16];
        for _ in 0..total {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated sample data: {e}")))?;
            samples.push(Complex64::new(
                f64::from_le_bytes(buf[0..8].try_into().unwrap()),
                f64::from_le_bytes(buf[8..16].try_into().unwrap()),
            ));
        }
        Self::new(m, n, samples, fs).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Rayleigh gains `r e^{jθ}` with `E[r²] = 1` and θ uniform on [0, 2π).
pub fn draw_rayleigh_with<R: Rng + ?Sized>(m: usize, rng: &mut R) -> ChannelRealization {
    let gains = (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            let r = (-(1.0 - u).ln()).sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            Complex64::from_polar(r, theta)
        })
        .collect();
    ChannelRealization { gains }
}

pub fn draw_rayleigh(m: usize, seed: u64) -> Result<ChannelRealization> {
    if m == 0 {
        return Err(Error::Contract("M must be at least 1".into()));
    }
    Ok(draw_rayleigh_with(m, &mut rng_from_seed(seed)))
}

/// Temporally white, spatially correlated circular Gaussian noise with
/// covariance `σ² ρ^|i-j|`.
pub fn gen_noise_with<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    spec: &NoiseSpec,
    sample_rate_hz: f64,
    rng: &mut R,
) -> Result<IqFrame> {
    spec.validate()?;
    if m == 0 || n == 0 {
        return Err(Error::Contract(
            "noise frame needs M >= 1 and N >= 1".into(),
        ));
    }
    let sigma = spec.variance.sqrt();
    let mut frame = IqFrame::zeros(m, n, sample_rate_hz);
    if spec.rho == 1.0 {
        let common: Vec<Complex64> = (0..n).map(|_| normal_c64(rng) * sigma).collect();
        for k in 0..m {
            frame.antenna_mut(k).copy_from_slice(&common);
        }
        return Ok(frame);
    }
    let white: Vec<Vec<Complex64>> = (0..m)
        .map(|_| (0..n).map(|_| normal_c64(rng)).collect())
        .collect();
    if spec.rho == 0.0 {
        for (k, w) in white.iter().enumerate() {
            for (dst, src) in frame.antenna_mut(k).iter_mut().zip(w) {
                *dst = src * sigma;
            }
        }
        return Ok(frame);
    }
    let l = cholesky_toeplitz_rho(m, spec.rho)?;
    for k in 0..m {
        let row: Vec<Complex64> = (0..=k).map(|j| l[(k, j)] * sigma).collect();
        let dst = frame.antenna_mut(k);
        for (j, coef) in row.iter().enumerate() {
            for (d, w) in dst.iter_mut().zip(&white[j]) {
                *d += coef * w;
            }
        }
    }
    Ok(frame)
}

pub fn gen_noise(
    m: usize,
    n: usize,
    spec: &NoiseSpec,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<IqFrame> {
    gen_noise_with(m, n, spec, sample_rate_hz, &mut rng_from_seed(seed))
}

/// SOI power giving a per-antenna SNR of `snr_db` against noise variance σ².
pub fn soi_power(snr_db: f64, noise_variance: f64) -> f64 {
    noise_variance * 10f64.powf(snr_db / 10.0)
}

/// Interferer power for an SIR of `sir_db` (SOI over interferer) relative to `soi_power`.
pub fn interferer_power(soi_power: f64, sir_db: f64) -> f64 {
    soi_power * 10f64.powf(-sir_db / 10.0)
}

/// Sources to superimpose on a noise frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameMix<'a> {
    /// Absent under H0.
    pub soi: Option<&'a SampleStream>,
    pub h_soi: &'a ChannelRealization,
    pub interferer: Option<&'a SampleStream>,
    pub h_int: Option<&'a ChannelRealization>,
    pub snr_db: f64,
    pub sir_db: Option<f64>,
}

/// Scales the SOI to `snr_db` per antenna (pre-fading) and the interferer
/// to `sir_db` below it, then returns `h_soi s + h_int i + η`.
pub fn compose_frame(mix: &FrameMix<'_>, noise: &IqFrame, noise_variance: f64) -> Result<IqFrame> {
    let m = noise.antennas();
    let n = noise.len();
    if mix.h_soi.antennas() != m {
        return Err(Error::Contract(format!(
            "SOI channel has {} antennas, noise frame has {m}",
            mix.h_soi.antennas()
        )));
    }
    if noise_variance.is_nan() || noise_variance <= 0.0 {
        return Err(Error::Config("noise variance must be positive".into()));
    }
    let (interferer, h_int, sir_db) = match (mix.interferer, mix.h_int, mix.sir_db) {
        (None, _, None) => (None, None, None),
        (Some(i), Some(h), Some(sir)) => (Some(i), Some(h), Some(sir)),
        (None, _, Some(_)) => {
            return Err(Error::Config("sir_db given without an interferer".into()))
        }
        (Some(_), None, _) => return Err(Error::Contract("interferer needs a channel".into())),
        (Some(_), Some(_), None) => return Err(Error::Config("interferer needs sir_db".into())),
    };
    let check_stream = |s: &SampleStream, what: &str| -> Result<()> {
        if s.len() != n {
            return Err(Error::Contract(format!(
                "{what} has {} samples, frame has {n}",
                s.len()
            )));
        }
        if s.sample_rate_hz != noise.sample_rate_hz() {
            return Err(Error::Contract(format!(
                "{what} sample rate differs from noise frame"
            )));
        }
        Ok(())
    };

    let target_soi_power = soi_power(mix.snr_db, noise_variance);
    let mut out = noise.clone();
    if let Some(s) = mix.soi {
        check_stream(s, "SOI")?;
        add_scaled(&mut out, s, mix.h_soi, target_soi_power);
    }
    if let (Some(i), Some(h), Some(sir)) = (interferer, h_int, sir_db) {
        check_stream(i, "interferer")?;
        if h.antennas() != m {
            return Err(Error::Contract(
                "interferer channel antenna count mismatch".into(),
            ));
        }
        add_scaled(&mut out, i, h, interferer_power(target_soi_power, sir));
    }
    Ok(out)
}

fn add_scaled(frame: &mut IqFrame, s: &SampleStream, h: &ChannelRealization, target_power: f64) {
    let p = s.mean_power();
    if p == 0.0 {
        return;
    }
    let amp = (target_power / p).sqrt();
    for (k, g) in h.gains.iter().enumerate() {
        let coef = g * amp;
        for (d, x) in frame.antenna_mut(k).iter_mut().zip(&s.data) {
            *d += coef * x;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn as_str(self) -> &'static str {
        match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        }
    }
}

/// Co-channel BPSK interferer placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interference {
    pub spec: SignalSpec,
    pub sir_db: f64,
}

impl Interference {
    /// Same symbol rate as the SOI with the carrier offset by 70% of the
    /// 2/T_b null-to-null main lobe, so the main lobes overlap by 30%.
    pub fn overlapping(soi: &SignalSpec, overlap: f64, sir_db: f64) -> Self {
        let main_lobe = 2.0 / soi.symbol_period_s;
        let offset = (1.0 - overlap) * main_lobe;
        Self {
            spec: soi.with_carrier(soi.carrier_freq_hz + offset),
            sir_db,
        }
    }
}

/// Generative description of one experiment cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub antennas: usize,
    pub frame_len: usize,
    pub soi: SignalSpec,
    pub snr_db: f64,
    pub noise: NoiseSpec,
    pub interference: Option<Interference>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.frame_len == 0 {
            return Err(Error::Config("M and N must be positive".into()));
        }
        self.soi.samples_per_symbol()?;
        self.noise.validate()?;
        if let Some(i) = &self.interference {
            i.spec.samples_per_symbol()?;
            if i.spec.sample_rate_hz != self.soi.sample_rate_hz {
                return Err(Error::Config(
                    "interferer sample rate differs from SOI".into(),
                ));
            }
        }
        Ok(())
    }

    /// Draws one frame. Every random component comes from its own stream
    /// keyed by `(seed, trial, label.with_sub(attempt))`, so H0 and H1 frames
    /// of the same trial share nothing but the key structure, and a redrawn
    /// frame (`attempt > 0`) is independent of the first.
    pub fn draw_frame(
        &self,
        hypothesis: Hypothesis,
        seed: u64,
        trial: u64,
        attempt: u64,
    ) -> Result<IqFrame> {
        let sub = attempt * 2 + u64::from(hypothesis == Hypothesis::H1);
        let rng = |label: StreamLabel| stream_rng(seed, trial, label.with_sub(sub));
        let m = self.antennas;
        let n = self.frame_len;
        let fs = self.soi.sample_rate_hz;

        let noise = gen_noise_with(m, n, &self.noise, fs, &mut rng(StreamLabel::NOISE))?;
        let h_soi = draw_rayleigh_with(m, &mut rng(StreamLabel::SOI_CHANNEL));
        let soi = match hypothesis {
            Hypothesis::H1 => Some(gen_bpsk_with(&self.soi, n, &mut rng(StreamLabel::SOI))?),
            Hypothesis::H0 => None,
        };
        let interferer = match &self.interference {
            Some(i) => {
                let mut r = rng(StreamLabel::INTERFERER);
                let phase = 2.0 * PI * r.random::<f64>();
                let stream = gen_bpsk_with(&i.spec.with_phase(phase), n, &mut r)?;
                let h = draw_rayleigh_with(m, &mut rng(StreamLabel::INTERFERER_CHANNEL));
                Some((stream, h, i.sir_db))
            }
            None => None,
        };
        let mix = FrameMix {
            soi: soi.as_ref(),
            h_soi: &h_soi,
            interferer: interferer.as_ref().map(|(s, _, _)| s),
            h_int: interferer.as_ref().map(|(_, h, _)| h),
            snr_db: self.snr_db,
            sir_db: interferer.as_ref().map(|(_, _, sir)| *sir),
        };
        compose_frame(&mix, &noise, self.noise.variance)
    }
}
