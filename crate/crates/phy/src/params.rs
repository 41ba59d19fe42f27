//! Modem and preamble parameters.

use crate::error::{PhyError, Result};

/// Static parameters of a LoRa modem: spreading factor, bandwidth, carrier
/// frequency and the receiver's nominal sample rate.
///
/// `n = 2^sf` chips per symbol, `osr = fs/bw` is the integer oversampling
/// ratio and the symbol duration is `n/bw` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModemParams {
    /// Spreading factor, 5..=12.
    pub sf: u32,
    /// Chirp bandwidth B in Hz.
    pub bw: f64,
    /// Carrier frequency f_c in Hz.
    pub fc: f64,
    /// Receiver nominal sample rate f_s in Hz (osr * bw).
    pub fs: f64,
    /// Chips per symbol, N = 2^sf.
    pub n: usize,
    /// Oversampling ratio fs/bw.
    pub osr: usize,
}

impl ModemParams {
    pub fn new(sf: u32, bw: f64, fc: f64, osr: usize) -> Result<Self> {
        if !(5..=12).contains(&sf) {
            return Err(PhyError::InvalidParams(format!(
                "spreading factor {sf} outside 5..=12"
            )));
        }
        if osr < 1 {
            return Err(PhyError::InvalidParams("osr must be >= 1".into()));
        }
        if !(bw > 0.0) || !(fc > 0.0) {
            return Err(PhyError::InvalidParams(
                "bandwidth and carrier frequency must be positive".into(),
            ));
        }
        let n = 1usize << sf;
        Ok(Self {
            sf,
            bw,
            fc,
            fs: osr as f64 * bw,
            n,
            osr,
        })
    }

    /// Symbol duration T_s = N/B in seconds.
    pub fn symbol_duration(&self) -> f64 {
        self.n as f64 / self.bw
    }

    /// Samples per full symbol at the nominal rate.
    pub fn samples_per_symbol(&self) -> usize {
        self.n * self.osr
    }

    /// Width of one demodulation bin, B/N in Hz.
    pub fn bin_hz(&self) -> f64 {
        self.bw / self.n as f64
    }
}

/// Layout of the synchronization preamble: `n_up` base up-chirps, two
/// sync-word symbols, then `n_down` down-chirps (fractional tail allowed,
/// default 2.25).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreambleSpec {
    pub n_up: usize,
    pub sync_words: [usize; 2],
    pub n_down: f64,
}

impl Default for PreambleSpec {
    fn default() -> Self {
        Self {
            n_up: 8,
            sync_words: [8, 16],
            n_down: 2.25,
        }
    }
}

impl PreambleSpec {
    pub fn validate(&self, params: &ModemParams) -> Result<()> {
        if self.n_up < 2 {
            return Err(PhyError::InvalidParams(
                "preamble needs at least 2 up-chirps".into(),
            ));
        }
        for &w in &self.sync_words {
            if w >= params.n {
                return Err(PhyError::SymbolOutOfRange {
                    symbol: w,
                    n: params.n,
                });
            }
        }
        if self.n_down < 0.0 {
            return Err(PhyError::InvalidParams("n_down must be >= 0".into()));
        }
        let tail = self.n_down.fract();
        let tail_samples = tail * params.samples_per_symbol() as f64;
        if (tail_samples - tail_samples.round()).abs() > 1e-9 {
            return Err(PhyError::InvalidParams(format!(
                "fractional down-chirp tail of {tail} symbols is not a whole number of samples"
            )));
        }
        Ok(())
    }

    /// Total preamble length in symbol durations (12.25 for the default).
    pub fn len_symbols(&self) -> f64 {
        self.n_up as f64 + 2.0 + self.n_down
    }
}
