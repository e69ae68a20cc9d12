//! Block-fading multipath channel with post-resampling Doppler.
//!
//! Blocks are synthesized directly after CP removal, where the multipath
//! channel acts as a circulant matrix. Time variation is modelled either as a
//! common phase trajectory on every sample (narrowband) or as a per-subcarrier
//! frequency shift `a f_k` (wideband).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::ofdm::OfdmBlock;
use crate::transform::UnitaryDft;

/// Samples between exact phasor re-anchoring in the wideband synthesizer.
const REANCHOR_INTERVAL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DopplerMode {
    TimeInvariant,
    Narrowband,
    Wideband,
}

impl DopplerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DopplerMode::TimeInvariant => "time-invariant",
            DopplerMode::Narrowband => "narrowband",
            DopplerMode::Wideband => "wideband",
        }
    }
}

impl fmt::Display for DopplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DopplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "time-invariant" => Ok(DopplerMode::TimeInvariant),
            "narrowband" => Ok(DopplerMode::Narrowband),
            "wideband" => Ok(DopplerMode::Wideband),
            other => invalid(format!("unknown Doppler mode '{other}'")),
        }
    }
}

/// Passband layout of the OFDM band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    /// Total bandwidth `B` in Hz, also the baseband sample rate.
    pub bandwidth: f64,
    /// Center frequency `f_c` in Hz.
    pub carrier: f64,
    pub subcarriers: usize,
}

impl LinkGeometry {
    pub fn new(bandwidth: f64, carrier: f64, subcarriers: usize) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return invalid(format!("bandwidth must be positive, got {bandwidth}"));
        }
        if !(carrier.is_finite() && carrier >= 0.0) {
            return invalid(format!("carrier must be non-negative, got {carrier}"));
        }
        if subcarriers == 0 {
            return invalid("at least one subcarrier is required");
        }
        Ok(Self {
            bandwidth,
            carrier,
            subcarriers,
        })
    }

    /// `Δf = B / K`.
    pub fn spacing(&self) -> f64 {
        self.bandwidth / self.subcarriers as f64
    }

    /// `T = 1 / Δf`.
    pub fn block_duration(&self) -> f64 {
        1.0 / self.spacing()
    }

    /// `f_k = f_c - B/2 + k Δf`.
    pub fn subcarrier_freq(&self, k: usize) -> f64 {
        self.carrier - self.bandwidth / 2.0 + k as f64 * self.spacing()
    }

    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        (0..self.subcarriers).map(|k| self.subcarrier_freq(k)).collect()
    }

    /// Doppler shift `a f_k` in Hz seen by subcarrier `k`.
    pub fn doppler_shift(&self, k: usize, scale: f64) -> f64 {
        scale * self.subcarrier_freq(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
    pub doppler_scale: f64,
    pub mode: DopplerMode,
    /// Per complex sample.
    pub noise_variance: f64,
}

impl ChannelRealization {
    fn validate(&self, subcarriers: usize) -> Result<()> {
        if self.taps.is_empty() || self.taps.len() > subcarriers {
            return invalid(format!(
                "{} taps do not fit a {subcarriers}-sample block",
                self.taps.len()
            ));
        }
        if !(self.doppler_scale.is_finite() && self.doppler_scale >= 0.0) {
            return invalid(format!("Doppler scale must be >= 0, got {}", self.doppler_scale));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return invalid(format!("noise variance must be >= 0, got {}", self.noise_variance));
        }
        Ok(())
    }
}

/// `L + 1` i.i.d. circular Gaussian taps of variance `1 / (L + 1)`.
pub fn draw_channel<R: Rng + ?Sized>(max_delay: usize, rng: &mut R) -> Vec<Complex64> {
    let taps = max_delay + 1;
    let std = (0.5 / taps as f64).sqrt();
    (0..taps).map(|_| complex_gaussian(rng) * std).collect()
}

/// Independent standard-normal real and imaginary parts (variance 2).
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

/// `H_k = sum_l h_l exp(-j 2π l k / K)`.
pub fn freq_response(taps: &[Complex64], subcarriers: usize) -> Result<Vec<Complex64>> {
    if taps.len() > subcarriers {
        return invalid(format!("{} taps exceed {subcarriers} subcarriers", taps.len()));
    }
    let mut padded = vec![Complex64::new(0.0, 0.0); subcarriers];
    padded[..taps.len()].copy_from_slice(taps);
    FftPlanner::new().plan_fft_forward(subcarriers).process(&mut padded);
    Ok(padded)
}

/// `σ² = 10^(-snr/10)` for unit average signal power. Infinite SNR gives 0.
pub fn noise_variance_for_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// `K` i.i.d. circular Gaussian samples with unit variance.
pub fn draw_unit_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<Complex64> {
    let scale = 0.5f64.sqrt();
    (0..len).map(|_| complex_gaussian(rng) * scale).collect()
}

/// Adds `sqrt(σ²) · noise` sample by sample.
pub fn add_scaled_noise(signal: &mut [Complex64], unit_noise: &[Complex64], noise_variance: f64) {
    let std = noise_variance.sqrt();
    for (x, z) in signal.iter_mut().zip(unit_noise) {
        *x += z * std;
    }
}

/// Full received block: noiseless channel output plus noise of variance
/// `chan.noise_variance`. Noise is drawn after the signal is formed.
pub fn synthesize_received<R: Rng + ?Sized>(
    block: &OfdmBlock,
    chan: &ChannelRealization,
    geom: &LinkGeometry,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let mut r = synthesize_noiseless(&block.coded, chan, geom)?;
    let noise = draw_unit_noise(r.len(), rng);
    add_scaled_noise(&mut r, &noise, chan.noise_variance);
    Ok(r)
}

/// Channel output without noise for coded subcarrier symbols `d`.
pub fn synthesize_noiseless(
    coded: &[Complex64],
    chan: &ChannelRealization,
    geom: &LinkGeometry,
) -> Result<Vec<Complex64>> {
    let len = coded.len();
    if len != geom.subcarriers {
        return invalid(format!(
            "block of {len} subcarriers against a {}-subcarrier link",
            geom.subcarriers
        ));
    }
    chan.validate(len)?;
    let response = freq_response(&chan.taps, len)?;
    match chan.mode {
        DopplerMode::TimeInvariant => time_invariant(coded, &response),
        DopplerMode::Narrowband => {
            let mut r = time_invariant(coded, &response)?;
            apply_phase(&mut r, &cfo_trajectory(chan.doppler_scale, geom));
            Ok(r)
        }
        DopplerMode::Wideband => Ok(wideband(
            coded,
            &response,
            chan.doppler_scale,
            &geom.subcarrier_freqs(),
            geom.bandwidth,
        )),
    }
}

/// Narrowband synthesis with an arbitrary phase trajectory `θ_n`.
pub fn synthesize_with_phase<R: Rng + ?Sized>(
    block: &OfdmBlock,
    taps: &[Complex64],
    phase: &[f64],
    noise_variance: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let len = block.coded.len();
    if phase.len() != len {
        return invalid(format!(
            "phase trajectory of {} samples for a {len}-sample block",
            phase.len()
        ));
    }
    let response = freq_response(taps, len)?;
    let mut r = time_invariant(&block.coded, &response)?;
    apply_phase(&mut r, phase);
    let noise = draw_unit_noise(len, rng);
    add_scaled_noise(&mut r, &noise, noise_variance);
    Ok(r)
}

/// Wideband synthesis with explicit passband frequency per subcarrier.
pub fn synthesize_wideband_with_freqs<R: Rng + ?Sized>(
    block: &OfdmBlock,
    chan: &ChannelRealization,
    freqs: &[f64],
    bandwidth: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let len = block.coded.len();
    if freqs.len() != len {
        return invalid(format!(
            "{} subcarrier frequencies for a {len}-subcarrier block",
            freqs.len()
        ));
    }
    chan.validate(len)?;
    let response = freq_response(&chan.taps, len)?;
    let mut r = wideband(&block.coded, &response, chan.doppler_scale, freqs, bandwidth);
    let noise = draw_unit_noise(len, rng);
    add_scaled_noise(&mut r, &noise, chan.noise_variance);
    Ok(r)
}

/// Common carrier-frequency-offset trajectory `θ_n = 2π a f_c n / B`.
pub fn cfo_trajectory(scale: f64, geom: &LinkGeometry) -> Vec<f64> {
    let step = 2.0 * PI * scale * geom.carrier / geom.bandwidth;
    (0..geom.subcarriers).map(|n| step * n as f64).collect()
}

fn apply_phase(signal: &mut [Complex64], phase: &[f64]) {
    for (x, &theta) in signal.iter_mut().zip(phase) {
        *x *= Complex64::from_polar(1.0, theta);
    }
}

fn time_invariant(coded: &[Complex64], response: &[Complex64]) -> Result<Vec<Complex64>> {
    let dft = UnitaryDft::new(coded.len())?;
    let mut r: Vec<Complex64> = coded.iter().zip(response).map(|(d, h)| d * h).collect();
    dft.inverse_in_place(&mut r);
    Ok(r)
}

/// `r_n = K^{-1/2} sum_k H_k d_k exp(j 2π (k n / K + a f_k n / B))`.
fn wideband(coded: &[Complex64], response: &[Complex64], scale: f64, freqs: &[f64], bandwidth: f64) -> Vec<Complex64> {
    let len = coded.len();
    let norm = 1.0 / (len as f64).sqrt();
    let mut r = vec![Complex64::new(0.0, 0.0); len];
    for k in 0..len {
        let amplitude = coded[k] * response[k] * norm;
        let shift = scale * freqs[k] / bandwidth;
        let phase_at = |n: usize| 2.0 * PI * (((k * n) % len) as f64 / len as f64 + shift * n as f64);
        let step = Complex64::from_polar(1.0, phase_at(1));
        let mut phasor = amplitude;
        for (n, out) in r.iter_mut().enumerate() {
            if n % REANCHOR_INTERVAL == 0 {
                phasor = amplitude * Complex64::from_polar(1.0, phase_at(n));
            }
            *out += phasor;
            phasor *= step;
        }
    }
    r
}
