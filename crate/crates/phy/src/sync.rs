//! Two-pass time and frequency synchronization.
//!
//! One pass runs five steps on the buffered preamble: (1) remove the
//! SFO-induced phase from the preamble using a prior γ̂ (sign-flipped over the
//! down-chirp region), (2) estimate and compensate the fractional CFO, (3)
//! estimate the fractional STO and compensate it with a fractional-delay
//! resampler, (4) demodulate the up/down consensus symbols, solve for the
//! integer offsets and compensate them, (5) derive γ̂ from the total CFO.
//!
//! The controller runs a first pass with no prior; if the accumulated STO per
//! symbol |γ̂₁|·N exceeds the bypass threshold θ it reprocesses the *original*
//! stream with the SFO phase pre-compensation from γ̂₁, which restores the
//! estimator assumptions that the drifting preamble violated. The handoff
//! extrapolates the aligned timing to the payload boundary with γ̂ so the
//! payload demodulator starts on-grid in every compensation mode.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::demod::{accumulate_power, DechirpedSpectrum, Demodulator};
use crate::error::{PhyError, Result};
use crate::estimators::{
    consensus_symbols, est_frac_cfo, est_frac_sto, est_int_cfo_sto, est_sfo_from_cfo,
    OffsetEstimate,
};
use crate::params::{ModemParams, PreambleSpec};
use crate::waveform::ChirpKind;

/// Controller configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncConfig {
    /// Maximum passes to run (the algorithm never benefits from more than 2).
    pub passes_max: usize,
    /// Bypass threshold θ in chips of accumulated STO per symbol.
    pub theta: f64,
    /// Up-chirps used for estimation.
    pub n_up: usize,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            passes_max: 2,
            theta: 0.05,
            n_up: 8,
        }
    }
}

/// Estimation health indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SyncFlags {
    /// The accumulated up-chirp power was zero; estimates defaulted to zero.
    pub degenerate_spectrum: bool,
    /// |CFO| exceeded B/4, outside the integer solve's unique range.
    pub cfo_out_of_range: bool,
}

/// Outcome of [`Synchronizer::synchronize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyncResult {
    pub passes_run: usize,
    /// Final estimate (from the last pass that ran).
    pub estimate: OffsetEstimate,
    /// First-pass estimate, kept for diagnostics.
    pub first_pass: OffsetEstimate,
    /// Sample index in the returned stream where the payload begins; the
    /// sub-sample part of the handoff is already applied to the stream.
    pub aligned_stream_offset: usize,
    pub flags: SyncFlags,
}

/// SFO-induced phase of preamble sample `n` (radians), for a prior γ̂.
///
/// Up-chirps follow Δφ[n] = 2π{(B²/2N)·(fs²−fs′²)/(fs²fs′²)·n̄² +
/// [l·B(fs−fs′)/fs′² − (B/2)(fs−fs′)/(fs·fs′)]·n̄} with n̄ = n mod N·osr and
/// l = ⌊n/(N·osr)⌋; down-chirps carry −Δφ[n]. The differences are evaluated
/// through γ̂ to avoid cancellation.
pub fn sfo_phase(n: usize, gamma_hat: f64, params: &ModemParams, direction: ChirpKind) -> f64 {
    if gamma_hat == 0.0 {
        return 0.0;
    }
    let sps = params.samples_per_symbol();
    let n_bar = (n % sps) as f64;
    let l = (n / sps) as f64;
    let fs = params.fs;
    let fsp = fs * (1.0 + gamma_hat);
    let b = params.bw;
    // (fs² − fs′²)/(fs²·fs′²) = −γ(2+γ)/fs′²,  (fs − fs′) = −γ·fs.
    let quad = b * b / (2.0 * params.n as f64) * (-gamma_hat * (2.0 + gamma_hat) / (fsp * fsp))
        * n_bar
        * n_bar;
    let lin = (l * b * (-gamma_hat * fs) / (fsp * fsp) + (b / 2.0) * gamma_hat / fsp) * n_bar;
    let phase = TAU * (quad + lin);
    match direction {
        ChirpKind::Up => phase,
        ChirpKind::Down => -phase,
    }
}

/// Rotate the stream by −2π·(cfo/N)·(B/fs)·n: compensates a CFO expressed in
/// bins (L+λ), indexed from the stream start.
pub fn compensate_cfo(stream: &mut [Complex64], cfo_bins: f64, params: &ModemParams) {
    if cfo_bins == 0.0 {
        return;
    }
    let step_cycles = cfo_bins / params.n as f64 * params.bw / params.fs;
    let step = Complex64::from_polar(1.0, -TAU * step_cycles);
    let mut rot = Complex64::new(1.0, 0.0);
    for (k, v) in stream.iter_mut().enumerate() {
        *v *= rot;
        rot *= step;
        // Re-seed the rotation phase periodically so rounding cannot drift
        // over frame-length streams.
        if k % 8192 == 8191 {
            let cycles = step_cycles * (k + 1) as f64;
            rot = Complex64::from_polar(1.0, -TAU * (cycles - cycles.round()));
        }
    }
}

/// Delay the stream by `delay` samples (|delay| ≲ osr/2) with a 16-tap
/// windowed-sinc fractional-delay filter. The integer group delay of 7
/// samples is removed; `delay = 0` is an exact identity.
pub fn fractional_delay(stream: &[Complex64], delay: f64) -> Vec<Complex64> {
    if delay == 0.0 {
        return stream.to_vec();
    }
    const TAPS: usize = 16;
    const CENTER: f64 = 7.0;
    let mut taps = [0.0f64; TAPS];
    let mut sum = 0.0;
    for (m, tap) in taps.iter_mut().enumerate() {
        let t = m as f64 - CENTER - delay;
        let sinc = if t == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t)
        };
        let x = t / (TAPS as f64 / 2.0);
        let window = if x.abs() >= 1.0 {
            0.0
        } else {
            // Hamming keeps the passband flat enough for full-band chirps.
            0.54 + 0.46 * (std::f64::consts::PI * x).cos()
        };
        *tap = sinc * window;
        sum += *tap;
    }
    for tap in taps.iter_mut() {
        *tap /= sum;
    }
    let len = stream.len();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        // y[k] = Σ h[m]·x[k + 7 − m]
        let base = k as isize + CENTER as isize;
        for (m, &tap) in taps.iter().enumerate() {
            let idx = base - m as isize;
            if idx >= 0 && (idx as usize) < len {
                acc += tap * stream[idx as usize];
            }
        }
        *o = acc;
    }
    out
}

/// Compensate a fractional STO of `lambda_sto` chips by delaying the stream
/// λ·(fs/B) samples.
pub fn resample_frac_sto(
    stream: &[Complex64],
    lambda_sto: f64,
    params: &ModemParams,
) -> Vec<Complex64> {
    fractional_delay(stream, lambda_sto * params.osr as f64)
}

/// T_comp = fs/(2·B·|γ̂|): samples between drop/duplicate corrections. The
/// sign of γ̂ selects dropping (γ̂ > 0) vs duplicating (γ̂ < 0). Returns None
/// when γ̂ = 0 (no correction needed).
pub fn compensation_period(gamma_hat: f64, params: &ModemParams) -> Option<f64> {
    if gamma_hat == 0.0 {
        None
    } else {
        Some(params.fs / (2.0 * params.bw * gamma_hat.abs()))
    }
}

/// Track the payload's accumulating SFO drift by dropping (γ̂ > 0) or
/// duplicating (γ̂ < 0) one sample whenever the accumulated offset exceeds
/// half a sample. The input must be aligned at the payload start.
pub fn payload_sfo_track(
    stream: &[Complex64],
    gamma_hat: f64,
    _params: &ModemParams,
) -> Vec<Complex64> {
    if gamma_hat == 0.0 {
        return stream.to_vec();
    }
    // Content offset drifts by 1/(1+γ̂) − 1 samples per consumed sample.
    let step = 1.0 / (1.0 + gamma_hat) - 1.0;
    let jump = 1.0 / (1.0 + gamma_hat);
    let mut out = Vec::with_capacity(stream.len());
    let mut acc = 0.0f64;
    let mut ptr = 0usize;
    while ptr < stream.len() {
        out.push(stream[ptr]);
        ptr += 1;
        acc += step;
        if acc <= -0.5 && ptr < stream.len() {
            ptr += 1; // drop: content jumps one input sample ahead
            acc += jump;
        } else if acc >= 0.5 && ptr > 0 {
            ptr -= 1; // duplicate: re-read, content falls one sample back
            acc -= jump;
        }
    }
    out
}

/// ⌊1/(2γN)⌋: how many symbols survive before the uncorrected SFO drift
/// reaches half a chip and demodulation errors become systematic. (The
/// paper states the bound in bytes; the quantity is a dimensionless count.)
/// Unbounded (None) when γ = 0.
pub fn max_budget_before_error(gamma: f64, sf: u32) -> Option<u64> {
    if gamma == 0.0 {
        return None;
    }
    let n = (1u64 << sf) as f64;
    Some((1.0 / (2.0 * gamma.abs() * n)).floor() as u64)
}

/// Internal result of one synchronization pass.
#[derive(Debug, Clone)]
struct PassOutput {
    estimate: OffsetEstimate,
    stream: Vec<Complex64>,
    /// Real-valued payload start position in `stream` samples.
    payload_start: f64,
    flags: SyncFlags,
}

/// The two-pass synchronizer for one parameter set.
pub struct Synchronizer {
    params: ModemParams,
    preamble: PreambleSpec,
    config: SyncConfig,
    demod: Demodulator,
}

impl Synchronizer {
    pub fn new(params: ModemParams, preamble: PreambleSpec, config: SyncConfig) -> Result<Self> {
        preamble.validate(&params)?;
        if config.n_up < 2 || config.n_up > preamble.n_up {
            return Err(PhyError::InvalidParams(format!(
                "sync needs 2..=n_up estimation up-chirps, got {}",
                config.n_up
            )));
        }
        if preamble.n_down < 1.0 {
            return Err(PhyError::InvalidParams(
                "integer offset solve needs at least one full down-chirp".into(),
            ));
        }
        if config.theta < 0.0 {
            return Err(PhyError::InvalidParams("theta must be >= 0".into()));
        }
        Ok(Self {
            params,
            preamble,
            config,
            demod: Demodulator::new(params),
        })
    }

    pub fn params(&self) -> &ModemParams {
        &self.params
    }

    pub fn demodulator(&self) -> &Demodulator {
        &self.demod
    }

    fn up_spectra(&self, work: &[Complex64], zero_pad: usize) -> Result<Vec<DechirpedSpectrum>> {
        let sps = self.params.samples_per_symbol();
        (0..self.config.n_up)
            .map(|l| {
                let dechirped = self.demod.dechirp(&work[l * sps..(l + 1) * sps], ChirpKind::Up)?;
                self.demod.spectrum(&dechirped, zero_pad)
            })
            .collect()
    }

    fn down_spectra(&self, work: &[Complex64]) -> Result<Vec<DechirpedSpectrum>> {
        let sps = self.params.samples_per_symbol();
        let first = self.preamble.n_up + 2;
        let count = (self.preamble.n_down.floor() as usize).max(1);
        (first..first + count)
            .map(|l| {
                let dechirped =
                    self.demod.dechirp(&work[l * sps..(l + 1) * sps], ChirpKind::Down)?;
                self.demod.spectrum(&dechirped, 0)
            })
            .collect()
    }

    /// One pass of the five-step estimation over the buffered stream.
    pub fn sync_pass(
        &self,
        stream: &[Complex64],
        gamma_prior: f64,
    ) -> Result<(OffsetEstimate, Vec<Complex64>)> {
        let pass = self.run_pass(stream, gamma_prior)?;
        Ok((pass.estimate, pass.stream))
    }

    fn run_pass(&self, stream: &[Complex64], gamma_prior: f64) -> Result<PassOutput> {
        let params = &self.params;
        let sps = params.samples_per_symbol();
        let needed = (self.preamble.n_up + 2 + self.preamble.n_down.floor() as usize) * sps;
        if stream.len() < needed {
            return Err(PhyError::InsufficientData {
                needed,
                got: stream.len(),
            });
        }
        let mut work = stream.to_vec();

        // Step 1: strip the SFO phase over the preamble, sign-flipped across
        // the down-chirp region (located from the known layout).
        if gamma_prior != 0.0 {
            let down_start = (self.preamble.n_up + 2) * sps;
            let preamble_end =
                ((self.preamble.len_symbols() * sps as f64).round() as usize).min(work.len());
            for (n, v) in work.iter_mut().enumerate().take(preamble_end) {
                let dir = if n < down_start {
                    ChirpKind::Up
                } else {
                    ChirpKind::Down
                };
                let phase = sfo_phase(n, gamma_prior, params, dir);
                *v *= Complex64::from_polar(1.0, -phase);
            }
        }

        // Step 2: fractional CFO from consecutive up-chirps, then compensate.
        let lambda_cfo = est_frac_cfo(&self.up_spectra(&work, 0)?);
        compensate_cfo(&mut work, lambda_cfo, params);

        // Step 3: fractional STO from the accumulated power spectrum, then
        // compensate by fractional-delay resampling.
        let power = accumulate_power(&self.up_spectra(&work, params.n)?)?;
        let degenerate = power.p[power.peak_index()] == 0.0;
        let lambda_sto = est_frac_sto(&power);
        if lambda_sto != 0.0 {
            work = resample_frac_sto(&work, lambda_sto, params);
        }

        // Step 4: integer CFO/STO from the up/down consensus symbols.
        let (s_up, s_down) = consensus_symbols(&self.up_spectra(&work, 0)?, &self.down_spectra(&work)?)?;
        let (l_cfo, l_sto) = est_int_cfo_sto(s_up, s_down, params.n);
        compensate_cfo(&mut work, l_cfo as f64, params);

        // Step 5: clock offset from the total CFO.
        let gamma_hat = est_sfo_from_cfo(l_cfo, lambda_cfo, params);

        let estimate = OffsetEstimate {
            l_cfo,
            lambda_cfo,
            l_sto,
            lambda_sto,
            gamma_hat,
        };
        let flags = SyncFlags {
            degenerate_spectrum: degenerate,
            cfo_out_of_range: estimate.cfo_bins().abs() > params.n as f64 / 4.0,
        };

        // Payload handoff: refer τ̂ back to the stream start (the estimates
        // anchor mid-up-chirps unless the SFO phase was pre-compensated, in
        // which case they anchor at n = 0) and extrapolate the boundary with
        // the estimated clock skew.
        let anchor = if gamma_prior != 0.0 {
            0.0
        } else {
            (self.config.n_up as f64 - 1.0) / 2.0
        };
        let tau0 = l_sto as f64 + gamma_hat * params.n as f64 * anchor;
        let payload_start = (self.preamble.len_symbols() * params.n as f64 - tau0)
            * (1.0 + gamma_hat)
            * params.osr as f64;

        Ok(PassOutput {
            estimate,
            stream: work,
            payload_start,
            flags,
        })
    }

    /// Run pass 1, and pass 2 with the γ̂₁ prior unless the accumulated STO
    /// per symbol is at or below θ. Returns the result and the processed
    /// stream (payload fractionally aligned at `aligned_stream_offset`).
    pub fn synchronize(&self, stream: &[Complex64]) -> Result<(SyncResult, Vec<Complex64>)> {
        let first = self.run_pass(stream, 0.0)?;
        let first_estimate = first.estimate;
        let run_second = self.config.passes_max >= 2
            && first_estimate.gamma_hat.abs() * self.params.n as f64 > self.config.theta;
        let (passes_run, last) = if run_second {
            (2, self.run_pass(stream, first_estimate.gamma_hat)?)
        } else {
            (1, first)
        };

        let mut out = last.stream;
        let start_real = last.payload_start.max(0.0);
        let start_int = start_real.round().min((out.len().saturating_sub(1)) as f64) as usize;
        let residual = start_real - start_int as f64;
        if residual != 0.0 {
            // Fractionally re-align the payload region; begin a little early
            // so the filter edge settles before the payload start.
            let lead = start_int.min(4 * 16);
            let tail = fractional_delay(&out[start_int - lead..], -residual);
            out[start_int - lead..].copy_from_slice(&tail);
        }

        Ok((
            SyncResult {
                passes_run,
                estimate: last.estimate,
                first_pass: first_estimate,
                aligned_stream_offset: start_int,
                flags: last.flags,
            },
            out,
        ))
    }
}
