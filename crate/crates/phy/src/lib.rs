//! LoRa chirp-spread-spectrum baseband processing.
//!
//! The crate covers the receive chain of a LoRa PHY up to (and excluding) the
//! symbol-to-bit layer: chirp waveform synthesis with an analytic
//! continuous-time frame model, a clock-offset impairment channel (CFO + SFO
//! derived from a single reference-oscillator error, plus timing offset and
//! AWGN), dechirp-and-DFT demodulation, the four offset estimators
//! (fractional/integer CFO and STO), and a two-pass synchronizer that
//! pre-compensates sampling-frequency offset in the preamble before
//! re-estimating the remaining offsets.
//!
//! Everything is pure and deterministic given its inputs; noise generation is
//! keyed on an explicit (seed, trial) pair so Monte Carlo trials can run in
//! any order.

pub mod channel;
pub mod demod;
pub mod error;
pub mod estimators;
pub mod params;
pub mod sync;
pub mod waveform;

pub use error::PhyError;
pub use params::{ModemParams, PreambleSpec};

/// Complex baseband sample type used throughout the crate.
pub type IqSample = num_complex::Complex64;
