//! Chirp waveform synthesis.
//!
//! A LoRa symbol of value `s` is a linear chirp whose start frequency encodes
//! the symbol; the instantaneous frequency sweeps up from `s·B/N − B/2` and
//! folds back to `−B/2` once it reaches `B/2`. Symbols are generated directly
//! from the quadratic phase law (no phase accumulation, so an SF12 frame of
//! ~83k samples carries no drift), both on the receiver sample grid and at
//! arbitrary continuous time instants via [`FrameDescriptor`].

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{PhyError, Result};
use crate::params::{ModemParams, PreambleSpec};

/// Sweep direction of a chirp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChirpKind {
    Up,
    Down,
}

/// Chirp phase at local time `t` (seconds from symbol start), in cycles.
///
/// Up-chirp: `φ(t)/2π = B²t²/(2N) + (s/N − 1/2 − u(t − t_fold))·B·t` with
/// `t_fold = (N−s)/B` and `u(0) = 1`; a down-chirp is the conjugate.
fn chirp_phase_cycles(t: f64, symbol: usize, kind: ChirpKind, n: usize, bw: f64) -> f64 {
    let n_f = n as f64;
    let t_fold = (n_f - symbol as f64) / bw;
    let step = if t >= t_fold { 1.0 } else { 0.0 };
    let cycles = bw * bw * t * t / (2.0 * n_f) + (symbol as f64 / n_f - 0.5 - step) * bw * t;
    match kind {
        ChirpKind::Up => cycles,
        ChirpKind::Down => -cycles,
    }
}

/// Evaluate a chirp of value `symbol` at local time `t`, unit magnitude.
pub fn eval_chirp(t: f64, symbol: usize, kind: ChirpKind, n: usize, bw: f64) -> Complex64 {
    let cycles = chirp_phase_cycles(t, symbol, kind, n, bw);
    // Reduce in cycle units before converting to radians; keeps precision for
    // arguments thousands of cycles in.
    let arg = TAU * (cycles - cycles.round());
    let (sin, cos) = arg.sin_cos();
    Complex64::new(cos, sin)
}

/// Generate one sampled symbol of `n·osr` samples on the nominal grid.
///
/// Samples are taken at `t = k/fs`, which makes the buffer identical to
/// evaluating the analytic model on the same grid.
pub fn modulate_symbol(
    symbol: usize,
    params: &ModemParams,
    kind: ChirpKind,
) -> Result<Vec<Complex64>> {
    if symbol >= params.n {
        return Err(PhyError::SymbolOutOfRange {
            symbol,
            n: params.n,
        });
    }
    let len = params.samples_per_symbol();
    Ok((0..len)
        .map(|k| eval_chirp(k as f64 / params.fs, symbol, kind, params.n, params.bw))
        .collect())
}

/// One contiguous chirp segment of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Start time in seconds from frame start.
    pub start: f64,
    /// Duration in seconds; a full symbol unless truncated (quarter down-chirp).
    pub duration: f64,
    pub kind: ChirpKind,
    pub symbol: usize,
}

/// Piecewise-analytic description of a transmitted frame, evaluable at any
/// continuous time instant. Segments are contiguous, half-open
/// `[start, start+duration)`, and the first starts at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDescriptor {
    pub segments: Vec<Segment>,
    pub params: ModemParams,
}

/// Assemble a frame: `n_up` base up-chirps, the two sync words, `n_down`
/// down-chirps (fractional tail truncated), then the payload up-chirps.
pub fn build_frame(
    preamble: &PreambleSpec,
    payload: &[usize],
    params: &ModemParams,
) -> Result<FrameDescriptor> {
    preamble.validate(params)?;
    for &s in payload {
        if s >= params.n {
            return Err(PhyError::SymbolOutOfRange { symbol: s, n: params.n });
        }
    }
    let ts = params.symbol_duration();
    let mut segments = Vec::new();
    let mut t = 0.0;
    let mut push = |t: &mut f64, duration: f64, kind: ChirpKind, symbol: usize| {
        segments.push(Segment {
            start: *t,
            duration,
            kind,
            symbol,
        });
        *t += duration;
    };
    for _ in 0..preamble.n_up {
        push(&mut t, ts, ChirpKind::Up, 0);
    }
    for &w in &preamble.sync_words {
        push(&mut t, ts, ChirpKind::Up, w);
    }
    let full_down = preamble.n_down.floor() as usize;
    for _ in 0..full_down {
        push(&mut t, ts, ChirpKind::Down, 0);
    }
    let tail = preamble.n_down.fract();
    if tail > 0.0 {
        push(&mut t, tail * ts, ChirpKind::Down, 0);
    }
    for &s in payload {
        push(&mut t, ts, ChirpKind::Up, s);
    }
    Ok(FrameDescriptor {
        segments,
        params: *params,
    })
}

impl FrameDescriptor {
    /// Total frame duration in seconds.
    pub fn duration(&self) -> f64 {
        self.segments
            .last()
            .map(|s| s.start + s.duration)
            .unwrap_or(0.0)
    }

    /// Index of the segment whose half-open interval contains `t`.
    fn segment_index(&self, t: f64) -> Result<usize> {
        if t < 0.0 || t >= self.duration() {
            return Err(PhyError::TimeOutOfFrame {
                t,
                duration: self.duration(),
            });
        }
        // Last segment with start <= t.
        let idx = self
            .segments
            .partition_point(|s| s.start <= t)
            .saturating_sub(1);
        Ok(idx)
    }

    /// Evaluate the frame at time `t` seconds.
    pub fn eval(&self, t: f64) -> Result<Complex64> {
        let seg = &self.segments[self.segment_index(t)?];
        Ok(eval_chirp(
            t - seg.start,
            seg.symbol,
            seg.kind,
            self.params.n,
            self.params.bw,
        ))
    }

    /// Monotone-time sampler; amortizes the segment lookup for sequential
    /// evaluation.
    pub fn sampler(&self) -> FrameSampler<'_> {
        FrameSampler {
            frame: self,
            idx: 0,
        }
    }
}

/// Sequential evaluator over a [`FrameDescriptor`]; `eval` calls must use
/// non-decreasing time instants.
pub struct FrameSampler<'a> {
    frame: &'a FrameDescriptor,
    idx: usize,
}

impl FrameSampler<'_> {
    /// Chirp phase at time `t` in cycles (frame content only).
    pub fn phase_cycles(&mut self, t: f64) -> Result<f64> {
        let segments = &self.frame.segments;
        if t < 0.0 || t >= self.frame.duration() {
            return Err(PhyError::TimeOutOfFrame {
                t,
                duration: self.frame.duration(),
            });
        }
        while self.idx + 1 < segments.len() && t >= segments[self.idx].start + segments[self.idx].duration
        {
            self.idx += 1;
        }
        let seg = &segments[self.idx];
        let cycles = chirp_phase_cycles(
            t - seg.start,
            seg.symbol,
            seg.kind,
            self.frame.params.n,
            self.frame.params.bw,
        );
        Ok(cycles)
    }

    pub fn eval(&mut self, t: f64) -> Result<Complex64> {
        let cycles = self.phase_cycles(t)?;
        let arg = TAU * (cycles - cycles.round());
        let (sin, cos) = arg.sin_cos();
        Ok(Complex64::new(cos, sin))
    }
}
