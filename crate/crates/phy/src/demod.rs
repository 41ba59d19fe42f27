//! Dechirp-and-DFT demodulation.
//!
//! Multiplying a received symbol by the conjugate base chirp turns it into a
//! pure tone whose DFT peak index is the symbol value; the same spectra feed
//! the offset estimators. DFTs are unnormalized (a constant input of ones
//! gives Ỹ[0] = N).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{PhyError, Result};
use crate::params::ModemParams;
use crate::waveform::{modulate_symbol, ChirpKind};

/// DFT of one dechirped symbol, optionally zero-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct DechirpedSpectrum {
    /// DFT bins, length `n + zero_pad`.
    pub bins: Vec<Complex64>,
    /// Chips per symbol N.
    pub n: usize,
    /// Zeros appended before the DFT.
    pub zero_pad: usize,
}

impl DechirpedSpectrum {
    pub fn n_dft(&self) -> usize {
        self.n + self.zero_pad
    }

    /// Index of the strongest bin; ties break toward the lowest index.
    pub fn peak_index(&self) -> usize {
        argmax(self.bins.iter().map(|v| v.norm_sqr()))
    }
}

/// |DFT|² accumulated over the preamble up-chirps (zero-padding N, so 2N bins).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub p: Vec<f64>,
    pub n: usize,
}

impl PowerSpectrum {
    pub fn peak_index(&self) -> usize {
        argmax(self.p.iter().copied())
    }
}

/// First index of the maximum value (lowest-index tie-break).
pub(crate) fn argmax<I: Iterator<Item = f64>>(values: I) -> usize {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Symbol demodulator for one parameter set; caches the reference chirps and
/// FFT plans so Monte Carlo loops don't re-plan.
pub struct Demodulator {
    params: ModemParams,
    fft_n: Arc<dyn Fft<f64>>,
    fft_2n: Arc<dyn Fft<f64>>,
    /// conj(x₀): reference for dechirping up-chirps.
    ref_up: Vec<Complex64>,
    /// x₀: reference for dechirping down-chirps.
    ref_down: Vec<Complex64>,
}

impl Demodulator {
    pub fn new(params: ModemParams) -> Self {
        let mut planner = FftPlanner::new();
        let base = modulate_symbol(0, &params, ChirpKind::Up).expect("symbol 0 in range");
        let ref_up: Vec<Complex64> = base.iter().map(|v| v.conj()).collect();
        Self {
            fft_n: planner.plan_fft_forward(params.n),
            fft_2n: planner.plan_fft_forward(2 * params.n),
            ref_up,
            ref_down: base,
            params,
        }
    }

    pub fn params(&self) -> &ModemParams {
        &self.params
    }

    /// Element-wise product with conj(x₀) (up) or x₀ (down).
    pub fn dechirp(&self, window: &[Complex64], direction: ChirpKind) -> Result<Vec<Complex64>> {
        let expected = self.params.samples_per_symbol();
        if window.len() != expected {
            return Err(PhyError::LengthMismatch {
                expected,
                got: window.len(),
            });
        }
        let reference = match direction {
            ChirpKind::Up => &self.ref_up,
            ChirpKind::Down => &self.ref_down,
        };
        Ok(window
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| a * b)
            .collect())
    }

    /// DFT of the dechirped buffer extended with `zero_pad` zeros. For osr > 1
    /// the buffer is first decimated to N samples so the estimator input
    /// length stays N.
    pub fn spectrum(&self, dechirped: &[Complex64], zero_pad: usize) -> Result<DechirpedSpectrum> {
        let n = self.params.n;
        let decimated: Vec<Complex64> = if dechirped.len() == n {
            dechirped.to_vec()
        } else if dechirped.len() == n * self.params.osr {
            dechirped.iter().step_by(self.params.osr).copied().collect()
        } else {
            return Err(PhyError::LengthMismatch {
                expected: n * self.params.osr,
                got: dechirped.len(),
            });
        };
        let n_dft = n + zero_pad;
        let mut bins = vec![Complex64::new(0.0, 0.0); n_dft];
        bins[..n].copy_from_slice(&decimated);
        if n_dft == n {
            self.fft_n.process(&mut bins);
        } else if n_dft == 2 * n {
            self.fft_2n.process(&mut bins);
        } else {
            FftPlanner::new().plan_fft_forward(n_dft).process(&mut bins);
        }
        Ok(DechirpedSpectrum {
            bins,
            n,
            zero_pad,
        })
    }

    /// Dechirp + unpadded DFT in one step.
    pub fn symbol_spectrum(
        &self,
        window: &[Complex64],
        direction: ChirpKind,
    ) -> Result<DechirpedSpectrum> {
        let dechirped = self.dechirp(window, direction)?;
        self.spectrum(&dechirped, 0)
    }
}

/// ŝ = argmax |Ỹ[k]| over the N un-padded bins.
pub fn detect_symbol(spec: &DechirpedSpectrum) -> Result<usize> {
    if spec.zero_pad != 0 {
        return Err(PhyError::LengthMismatch {
            expected: spec.n,
            got: spec.n_dft(),
        });
    }
    Ok(spec.peak_index())
}

/// Element-wise sum of |Ỹ|² across the preamble up-chirp spectra.
pub fn accumulate_power(spectra: &[DechirpedSpectrum]) -> Result<PowerSpectrum> {
    let first = spectra.first().ok_or(PhyError::LengthMismatch {
        expected: 1,
        got: 0,
    })?;
    let n_dft = first.n_dft();
    let mut p = vec![0.0; n_dft];
    for s in spectra {
        if s.n_dft() != n_dft {
            return Err(PhyError::MixedSpectrumLengths(n_dft, s.n_dft()));
        }
        for (acc, v) in p.iter_mut().zip(s.bins.iter()) {
            *acc += v.norm_sqr();
        }
    }
    Ok(PowerSpectrum { p, n: first.n })
}
