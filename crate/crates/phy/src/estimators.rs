//! Offset estimators.
//!
//! Fractional CFO comes from the phase rotation between consecutive preamble
//! up-chirps; fractional STO from the three dominant lines of the accumulated
//! zero-padded power spectrum (RCTSL); the integer parts from solving the
//! up/down-chirp peak pair; and the clock offset γ̂ from the total CFO, since
//! both share the reference oscillator.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::demod::{argmax, DechirpedSpectrum, PowerSpectrum};
use crate::error::{PhyError, Result};
use crate::params::ModemParams;

/// One synchronization pass worth of offset estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OffsetEstimate {
    /// Integer CFO in bins of B/N.
    pub l_cfo: i64,
    /// Fractional CFO in bins, [−0.5, 0.5).
    pub lambda_cfo: f64,
    /// Integer STO in chips, {0, …, N−1}.
    pub l_sto: usize,
    /// Fractional STO in chips, [−0.5, 0.5).
    pub lambda_sto: f64,
    /// Estimated clock offset (dimensionless).
    pub gamma_hat: f64,
}

impl OffsetEstimate {
    /// Total CFO in bins.
    pub fn cfo_bins(&self) -> f64 {
        self.l_cfo as f64 + self.lambda_cfo
    }
}

/// RCTSL coefficients, recomputed from N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RctslConstants {
    pub u: f64,
    pub v: f64,
}

impl RctslConstants {
    pub fn new(n: usize) -> Self {
        let u = 64.0 * n as f64 / (std::f64::consts::PI.powi(5) + 32.0 * std::f64::consts::PI);
        Self {
            u,
            v: u * std::f64::consts::PI.powi(2) / 4.0,
        }
    }
}

/// Γ_N: map a residue in {0, …, N−1} to the signed range [−N/2, N/2).
/// The step convention u(0) = 1 sends k = N/2 to −N/2.
pub fn gamma_fold(k: usize, n: usize) -> i64 {
    debug_assert!(k < n);
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Fold a fractional quantity into [−0.5, 0.5).
pub fn fold_fraction(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

/// Fractional CFO from consecutive same-valued preamble up-chirps:
/// λ̂ = arg(Σ_pairs Σ_{p=−2..2} Ỹ_l[i+p]·conj(Ỹ_{l−1}[i+p])) / 2π, with the
/// peak index i recomputed per pair from |Ỹ_l| and bin indices wrapping mod N.
/// All-zero spectra return 0 by convention.
pub fn est_frac_cfo(upchirp_spectra: &[DechirpedSpectrum]) -> f64 {
    if upchirp_spectra.len() < 2 {
        return 0.0;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for pair in upchirp_spectra.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let n = cur.bins.len();
        let i = cur.peak_index() as i64;
        for p in -2i64..=2 {
            let k = (i + p).rem_euclid(n as i64) as usize;
            acc += cur.bins[k] * prev.bins[k].conj();
        }
    }
    if acc.norm_sqr() == 0.0 {
        return 0.0;
    }
    acc.arg() / TAU
}

/// Fractional STO from the accumulated power spectrum (zero-padding N, so the
/// grid has two bins per chip): the RCTSL three-line term measures the tone's
/// deviation from the peak bin in chips, and the peak's own half-chip position
/// completes the estimate, folded into [−0.5, 0.5).
pub fn est_frac_sto(power: &PowerSpectrum) -> f64 {
    let n_dft = power.p.len();
    debug_assert_eq!(n_dft, 2 * power.n, "power spectrum must use zero_pad = N");
    let i = power.peak_index();
    if power.p[i] == 0.0 {
        return 0.0;
    }
    let consts = RctslConstants::new(power.n);
    let upper = power.p[(i + 1) % n_dft];
    let lower = power.p[(i + n_dft - 1) % n_dft];
    let denom = consts.u * (upper + lower) + consts.v * power.p[i];
    let correction = if denom == 0.0 {
        0.0
    } else {
        (power.n as f64 / TAU) * (upper - lower) / denom
    };
    fold_fraction(i as f64 / 2.0 + correction.clamp(-0.5, 0.5))
}

/// Solve the up/down peak pair for the integer offsets:
/// L̂_CFO = ½·Γ_N[(ŝ_up + ŝ_down) mod N], L̂_STO = (ŝ_up − L̂_CFO) mod N.
/// An odd sum (impossible without noise) halves toward zero; the residual
/// lands in L̂_STO through the second equation.
pub fn est_int_cfo_sto(s_up: usize, s_down: usize, n: usize) -> (i64, usize) {
    let folded = gamma_fold((s_up + s_down) % n, n);
    let l_cfo = folded / 2;
    let l_sto = (s_up as i64 - l_cfo).rem_euclid(n as i64) as usize;
    (l_cfo, l_sto)
}

/// Per-direction consensus symbol: the peak of the power summed across the
/// available (un-padded) spectra of each direction.
pub fn consensus_symbols(
    spectra_up: &[DechirpedSpectrum],
    spectra_down: &[DechirpedSpectrum],
) -> Result<(usize, usize)> {
    Ok((consensus(spectra_up)?, consensus(spectra_down)?))
}

fn consensus(spectra: &[DechirpedSpectrum]) -> Result<usize> {
    let first = spectra.first().ok_or(PhyError::LengthMismatch {
        expected: 1,
        got: 0,
    })?;
    let n_dft = first.n_dft();
    let mut power = vec![0.0; n_dft];
    for s in spectra {
        if s.n_dft() != n_dft {
            return Err(PhyError::MixedSpectrumLengths(n_dft, s.n_dft()));
        }
        for (acc, v) in power.iter_mut().zip(s.bins.iter()) {
            *acc += v.norm_sqr();
        }
    }
    Ok(argmax(power.iter().copied()))
}

/// γ̂ = (L̂_CFO + λ̂_CFO)·B/(N·f_c): the clock offset inferred from the CFO,
/// valid when carrier and sampling clocks share the reference oscillator.
pub fn est_sfo_from_cfo(l_cfo: i64, lambda_cfo: f64, params: &ModemParams) -> f64 {
    (l_cfo as f64 + lambda_cfo) * params.bw / (params.n as f64 * params.fc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{derive_offsets, sample_received, ImpairmentConfig};
    use crate::demod::{accumulate_power, Demodulator};
    use crate::params::{ModemParams, PreambleSpec};
    use crate::waveform::{build_frame, ChirpKind};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    fn params(sf: u32) -> ModemParams {
        ModemParams::new(sf, 250e3, 868e6, 1).unwrap()
    }

    /// Dechirped spectra of the first n_up preamble windows of an impaired,
    /// noiseless preamble-only frame.
    fn preamble_spectra(
        p: &ModemParams,
        imp: &ImpairmentConfig,
        zero_pad: usize,
    ) -> Vec<DechirpedSpectrum> {
        let pre = PreambleSpec::default();
        let frame = build_frame(&pre, &[], p).unwrap();
        let d = Demodulator::new(*p);
        let s = p.samples_per_symbol();
        let rx = sample_received(&frame, imp, pre.n_up * s).unwrap();
        (0..pre.n_up)
            .map(|l| {
                let dechirped = d.dechirp(&rx[l * s..(l + 1) * s], ChirpKind::Up).unwrap();
                d.spectrum(&dechirped, zero_pad).unwrap()
            })
            .collect()
    }

    #[test]
    fn gamma_fold_convention() {
        assert_eq!(gamma_fold(3, 16), 3);
        assert_eq!(gamma_fold(10, 16), -6);
        // Boundary: u(0) = 1, so N/2 maps to -N/2.
        assert_eq!(gamma_fold(8, 16), -8);
        assert_eq!(gamma_fold(7, 16), 7);
    }

    #[test]
    fn rctsl_constants_from_n() {
        let c = RctslConstants::new(1024);
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(c.u, 64.0 * 1024.0 / (pi.powi(5) + 32.0 * pi), epsilon = 1e-12);
        assert_abs_diff_eq!(c.v, c.u * pi * pi / 4.0, epsilon = 1e-12);
        assert!(c.u > 0.0 && c.v > 0.0);
    }

    #[test]
    fn fold_fraction_range() {
        assert_eq!(fold_fraction(0.5), -0.5);
        assert_eq!(fold_fraction(-0.5), -0.5);
        assert_abs_diff_eq!(fold_fraction(1.3), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(fold_fraction(-1.3), -0.3, epsilon = 1e-12);
    }

    #[test]
    fn frac_cfo_zero_for_clean_preamble() {
        let p = params(8);
        let imp = ImpairmentConfig::new(0.0, 0.0, f64::INFINITY, 0, &p);
        let spectra = preamble_spectra(&p, &imp, 0);
        assert!(est_frac_cfo(&spectra).abs() < 1e-9);
    }

    #[test]
    fn frac_cfo_recovers_quarter_bin() {
        let p = params(8);
        let imp = ImpairmentConfig::new(0.0, 0.0, f64::INFINITY, 0, &p)
            .with_overrides(Some(0.25 * p.bin_hz()), None);
        let spectra = preamble_spectra(&p, &imp, 0);
        assert_abs_diff_eq!(est_frac_cfo(&spectra), 0.25, epsilon = 1e-6);
    }

    #[test]
    fn frac_cfo_carries_sfo_error_term() {
        // With a skewed sample clock the pairwise phase picks up -γ/(1+γ)².
        let p = params(8);
        let gamma = 40e-6;
        let imp = ImpairmentConfig::new(gamma, 0.0, f64::INFINITY, 0, &p)
            .with_overrides(Some(0.25 * p.bin_hz()), None);
        let spectra = preamble_spectra(&p, &imp, 0);
        let expected = 0.25 - gamma / (1.0 + gamma).powi(2);
        assert_abs_diff_eq!(est_frac_cfo(&spectra), expected, epsilon = 1e-4);
    }

    #[test]
    fn pairwise_phase_law_matches_closed_form() {
        // Coupled CFO+SFO channel: measured pair phase = 2π[λ_CFO − γ/(1+γ)²].
        for sf in [7, 10] {
            let p = params(sf);
            let gamma = 40e-6;
            let imp = ImpairmentConfig::new(gamma, 0.0, f64::INFINITY, 0, &p);
            let spectra = preamble_spectra(&p, &imp, 0);
            let truth = derive_offsets(gamma, &p);
            let predicted = fold_fraction(truth.lambda_cfo - gamma / (1.0 + gamma).powi(2));
            let measured = est_frac_cfo(&spectra);
            assert!(
                (measured - predicted).abs() * TAU < 1e-4,
                "SF{sf}: measured {measured}, predicted {predicted}"
            );
        }
    }

    #[test]
    fn degenerate_spectra_estimate_zero() {
        let zero = DechirpedSpectrum {
            bins: vec![Complex64::new(0.0, 0.0); 256],
            n: 256,
            zero_pad: 0,
        };
        assert_eq!(est_frac_cfo(&[zero.clone(), zero]), 0.0);
        let power = PowerSpectrum {
            p: vec![0.0; 512],
            n: 256,
        };
        assert_eq!(est_frac_sto(&power), 0.0);
    }

    #[test]
    fn frac_sto_zero_for_aligned_preamble() {
        let p = params(8);
        let imp = ImpairmentConfig::new(0.0, 0.0, f64::INFINITY, 0, &p);
        let power = accumulate_power(&preamble_spectra(&p, &imp, p.n)).unwrap();
        assert!(est_frac_sto(&power).abs() < 1e-3);
    }

    #[test]
    fn frac_sto_sweep_stays_within_two_hundredths() {
        // Also pins the "zero-padding of size 2^SF" reading: append N zeros.
        let p = params(8);
        let mut worst: f64 = 0.0;
        let mut lambda = -0.4;
        while lambda <= 0.401 {
            let imp = ImpairmentConfig::new(0.0, lambda / p.bw, f64::INFINITY, 0, &p);
            let power = accumulate_power(&preamble_spectra(&p, &imp, p.n)).unwrap();
            let err = (est_frac_sto(&power) - lambda).abs();
            worst = worst.max(err);
            lambda += 0.05;
        }
        assert!(worst < 0.02, "worst sweep error {worst}");
    }

    #[test]
    fn frac_sto_with_integer_sto_measures_fraction_only() {
        let p = params(8);
        let imp = ImpairmentConfig::new(0.0, (37.0 + 0.3) / p.bw, f64::INFINITY, 0, &p);
        let power = accumulate_power(&preamble_spectra(&p, &imp, p.n)).unwrap();
        assert_abs_diff_eq!(est_frac_sto(&power), 0.3, epsilon = 0.02);
    }

    #[test]
    fn frac_sto_monotone_at_high_snr() {
        let p = params(8);
        let mut prev = f64::NEG_INFINITY;
        let mut lambda = -0.45;
        while lambda <= 0.451 {
            let imp = ImpairmentConfig::new(0.0, (5.0 + lambda) / p.bw, f64::INFINITY, 0, &p);
            let power = accumulate_power(&preamble_spectra(&p, &imp, p.n)).unwrap();
            let est = est_frac_sto(&power);
            assert!(est > prev, "not monotone at λ={lambda}: {est} <= {prev}");
            prev = est;
            lambda += 0.05;
        }
    }

    #[test]
    fn int_solve_examples() {
        // Forward Eq.: s_up = (L_CFO+L_STO) mod N, s_down = (L_CFO−L_STO) mod N.
        assert_eq!(est_int_cfo_sto(8, 2, 128), (5, 3));
        assert_eq!(est_int_cfo_sto(0, 0, 128), (0, 0));
        assert_eq!(est_int_cfo_sto(126, 120, 128), (-5, 3));
    }

    #[test]
    fn int_solve_exhaustive_small() {
        let n = 64i64;
        for l_cfo in -(n / 4)..(n / 4) {
            for l_sto in 0..n {
                let s_up = (l_cfo + l_sto).rem_euclid(n) as usize;
                let s_down = (l_cfo - l_sto).rem_euclid(n) as usize;
                assert_eq!(
                    est_int_cfo_sto(s_up, s_down, n as usize),
                    (l_cfo, l_sto as usize)
                );
            }
        }
    }

    #[test]
    fn odd_sum_truncates_toward_zero() {
        // (s_up + s_down) odd cannot happen noiselessly; pin the convention.
        let (l_cfo, l_sto) = est_int_cfo_sto(8, 3, 128);
        assert_eq!(l_cfo, 5); // Γ[11] = 11, 11/2 truncates to 5
        assert_eq!(l_sto, 3);
        let (l_cfo, l_sto) = est_int_cfo_sto(120, 125, 128);
        assert_eq!(l_cfo, -5); // Γ[117] = −11, −11/2 truncates to −5
        assert_eq!(l_sto, (120i64 + 5).rem_euclid(128) as usize);
    }

    #[test]
    fn consensus_prefers_majority_energy() {
        let p = params(7);
        let d = Demodulator::new(p);
        let x = crate::waveform::modulate_symbol(33, &p, ChirpKind::Up).unwrap();
        let clean = d.symbol_spectrum(&x, ChirpKind::Up).unwrap();
        // One corrupted window out of eight: strong burst on another bin.
        let mut corrupted = x.clone();
        for (k, v) in corrupted.iter_mut().enumerate() {
            let arg = TAU * 90.0 * k as f64 / p.n as f64;
            *v += 3.0 * Complex64::new(arg.cos(), arg.sin());
        }
        let bad = d.symbol_spectrum(&corrupted, ChirpKind::Up).unwrap();
        let mut spectra = vec![clean.clone(); 7];
        spectra.push(bad);
        let (s_up, _) = consensus_symbols(&spectra, &[clean.clone()]).unwrap();
        assert_eq!(s_up, 33);
        // Single spectrum each: equals detect_symbol.
        let (s1, s2) = consensus_symbols(&[clean.clone()], &[clean]).unwrap();
        assert_eq!((s1, s2), (33, 33));
    }

    #[test]
    fn sfo_from_cfo_matches_arithmetic() {
        let p = params(10);
        let gamma_hat = est_sfo_from_cfo(142, 0.2125, &p);
        let expected = 142.2125 * 250e3 / (1024.0 * 868e6);
        assert_abs_diff_eq!(gamma_hat, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(gamma_hat, 4.0e-5, epsilon = 1e-8);
        assert_eq!(est_sfo_from_cfo(0, 0.0, &p), 0.0);
    }

    #[test]
    fn sfo_from_cfo_round_trips_derive_offsets() {
        let p = params(12);
        for gamma in [1e-6, 7.3e-6, 32e-6, -40e-6] {
            let d = derive_offsets(gamma, &p);
            let gamma_hat = est_sfo_from_cfo(d.l_cfo, d.lambda_cfo, &p);
            assert!(
                ((gamma_hat - gamma) / gamma).abs() < 1e-9,
                "γ {gamma} → {gamma_hat}"
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn frac_cfo_always_in_range(values in proptest::collection::vec(-1.0f64..1.0, 64)) {
            let bins: Vec<Complex64> = values
                .chunks(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            let spec = DechirpedSpectrum { n: bins.len(), zero_pad: 0, bins };
            let est = est_frac_cfo(&[spec.clone(), spec]);
            proptest::prop_assert!((-0.5..=0.5).contains(&est));
        }

        #[test]
        fn folded_fraction_in_range(x in -1e6f64..1e6) {
            let f = fold_fraction(x);
            proptest::prop_assert!((-0.5..0.5).contains(&f));
        }
    }
}
