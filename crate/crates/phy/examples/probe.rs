//! Scratch diagnostics for estimator behavior (not part of the deliverable API).

use lora_phy::channel::{sample_received, ImpairmentConfig};
use lora_phy::demod::{accumulate_power, Demodulator};
use lora_phy::estimators::est_frac_sto;
use lora_phy::params::{ModemParams, PreambleSpec};
use lora_phy::waveform::{build_frame, ChirpKind};
use num_complex::Complex64;

// windowed-sinc fractional delay with pluggable window
fn frac_delay(stream: &[Complex64], delay: f64, window: &dyn Fn(f64) -> f64) -> Vec<Complex64> {
    const TAPS: usize = 16;
    const CENTER: f64 = 7.0;
    let mut taps = [0.0f64; TAPS];
    let mut sum = 0.0;
    for (m, tap) in taps.iter_mut().enumerate() {
        let t = m as f64 - CENTER - delay;
        let sinc = if t == 0.0 { 1.0 } else { (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t) };
        let x = t / (TAPS as f64 / 2.0);
        *tap = if x.abs() >= 1.0 { 0.0 } else { sinc * window(x) };
        sum += *tap;
    }
    for tap in taps.iter_mut() { *tap /= sum; }
    let len = stream.len();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        let base = k as isize + 7;
        for (m, &tap) in taps.iter().enumerate() {
            let idx = base - m as isize;
            if idx >= 0 && (idx as usize) < len { acc += tap * stream[idx as usize]; }
        }
        *o = acc;
    }
    out
}

fn main() {
    let p = ModemParams::new(10, 250e3, 868e6, 1).unwrap();
    let pre = PreambleSpec::default();
    let d = Demodulator::new(p);
    let frame = build_frame(&pre, &[], &p).unwrap();

    let pi = std::f64::consts::PI;
    let windows: Vec<(&str, Box<dyn Fn(f64) -> f64>)> = vec![
        ("hamming ", Box::new(move |x: f64| 0.54 + 0.46 * (pi * x).cos())),
        ("hann    ", Box::new(move |x: f64| 0.5 + 0.5 * (pi * x).cos())),
        ("blackman", Box::new(move |x: f64| 0.42 + 0.5 * (pi * x).cos() + 0.08 * (2.0 * pi * x).cos())),
        ("rect    ", Box::new(|_x: f64| 1.0)),
        ("kaiser-ish(cos^0.5)", Box::new(move |x: f64| (0.5 + 0.5 * (pi * x).cos()).sqrt())),
    ];

    for (name, w) in &windows {
        let mut worst: f64 = 0.0;
        for lam in [0.1f64, 0.2, 0.3, 0.4, 0.45, -0.3, -0.45] {
            let tau = if lam < 0.0 { (p.n as f64 + lam) / p.bw } else { lam / p.bw };
            let imp = ImpairmentConfig::new(0.0, tau, f64::INFINITY, 0, &p);
            let rx = sample_received(&frame, &imp, 8 * p.n).unwrap();
            let res = frac_delay(&rx, lam, w);
            let spectra: Vec<_> = (0..8)
                .map(|l| {
                    let de = d.dechirp(&res[l * p.n..(l + 1) * p.n], ChirpKind::Up).unwrap();
                    d.spectrum(&de, p.n).unwrap()
                })
                .collect();
            let power = accumulate_power(&spectra).unwrap();
            let e = est_frac_sto(&power);
            let err = {
                let x = e - 0.0; // residual should be 0 after ideal compensation (integer part falls out)
                (x - (x + 0.5).floor()).abs()
            };
            worst = worst.max(err);
        }
        println!("{name}: worst residual {worst:.4}");
    }
}
