//! Partial FFT demodulation for differential OFDM over time-varying
//! underwater acoustic channels.
//!
//! - [`ofdm`]: PSK constellations, differential coding, detectors, pilots.
//! - [`transform`]: unitary DFT and the partial FFT demodulator.
//! - [`channel`]: multipath block fading with narrowband or wideband Doppler.
//! - [`weights`]: eigendecomposition-based combining weights, the subband
//!   extension and an adaptive stochastic-gradient baseline.
//! - [`harness`]: Monte-Carlo BER sweeps.
//! - [`cli`]: the `pfft-sim` command line.

pub mod channel;
pub mod cli;
pub mod error;
pub mod harness;
pub mod ofdm;
pub mod transform;
pub mod weights;

pub use error::{Error, Result};
pub use num_complex::Complex64;
