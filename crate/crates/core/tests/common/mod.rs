//! Fixtures and straight-line reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn noise(seed: u64, len: usize, amp: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-amp..amp)).collect()
}

pub fn tone(freq: f64, amp: f64, sr: u32, len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| amp * (TAU * freq * n as f64 / sr as f64).sin())
        .collect()
}

/// Linear chirp from `f0` to `f1` Hz.
pub fn chirp(f0: f64, f1: f64, sr: u32, len: usize) -> Vec<f64> {
    let dur = len as f64 / sr as f64;
    (0..len)
        .map(|n| {
            let t = n as f64 / sr as f64;
            0.5 * (TAU * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)).sin()
        })
        .collect()
}

/// Two-pole resonator applied in place.
fn resonate(x: &mut [f64], freq: f64, bandwidth: f64, sr: f64) {
    let r = (-std::f64::consts::PI * bandwidth / sr).exp();
    let a1 = 2.0 * r * (TAU * freq / sr).cos();
    let a2 = -r * r;
    let gain = 1.0 - r;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = gain * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Speech-like fixture: a glottal pulse train with a gliding F0 through three formants,
/// syllable-rate amplitude envelope and a breath-noise floor.
pub fn speech_like(sr: u32, len: usize, seed: u64) -> Vec<f64> {
    let srf = sr as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phase = 0.0;
    let mut x: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / srf;
            let f0 = 120.0 + 30.0 * (TAU * 1.5 * t).sin();
            phase += f0 / srf;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            pulse + 0.02 * rng.random_range(-1.0..1.0)
        })
        .collect();
    let mut out = vec![0.0; len];
    for (f, bw, g) in [
        (700.0, 110.0, 1.0),
        (1220.0, 120.0, 0.5),
        (2600.0, 160.0, 0.25),
    ] {
        let mut band = x.clone();
        resonate(&mut band, f, bw, srf);
        resonate(&mut band, f, bw, srf);
        out.iter_mut().zip(&band).for_each(|(o, b)| *o += g * b);
    }
    x.clear();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    out.iter()
        .enumerate()
        .map(|(n, v)| {
            let env = 0.55 + 0.45 * (TAU * 4.0 * n as f64 / srf).sin();
            0.8 * env * v / peak
        })
        .collect()
}

/// Real and imaginary grids of a centered, reflect-padded, periodic-Hann STFT by direct summation.
pub fn naive_stft(x: &[f64], fft: usize, win: usize, hop: usize) -> (Vec<f64>, Vec<f64>) {
    let pad = win / 2;
    let mut padded = Vec::with_capacity(x.len() + 2 * pad);
    for i in (1..=pad).rev() {
        padded.push(x[i]);
    }
    padded.extend_from_slice(x);
    for i in 0..pad {
        padded.push(x[x.len() - 2 - i]);
    }
    let frames = 1 + (padded.len() - win) / hop;
    let bins = fft / 2 + 1;
    let (mut re, mut im) = (Vec::new(), Vec::new());
    for t in 0..frames {
        for k in 0..bins {
            let (mut a, mut b) = (0.0, 0.0);
            for n in 0..win {
                let w = 0.5 - 0.5 * (TAU * n as f64 / win as f64).cos();
                let ang = -TAU * ((k * n) % fft) as f64 / fft as f64;
                let v = w * padded[t * hop + n];
                a += v * ang.cos();
                b += v * ang.sin();
            }
            re.push(a);
            im.push(b);
        }
    }
    (re, im)
}

/// Real/imaginary loss total (three mean L1 terms plus spectral convergence) from the naive STFT.
pub fn naive_ri_total(x: &[f64], y: &[f64], fft: usize, win: usize, hop: usize) -> f64 {
    let (r, i) = naive_stft(x, fft, win, hop);
    let (rh, ih) = naive_stft(y, fft, win, hop);
    let n = r.len() as f64;
    let (mut real, mut imag, mut mag, mut num, mut den) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for c in 0..r.len() {
        real += (rh[c] - r[c]).abs();
        imag += (ih[c] - i[c]).abs();
        mag += ((rh[c] * rh[c] + ih[c] * ih[c]).sqrt() - (r[c] * r[c] + i[c] * i[c]).sqrt()).abs();
        num += (rh[c] - r[c]).powi(2) + (ih[c] - i[c]).powi(2);
        den += r[c] * r[c] + i[c] * i[c];
    }
    real / n + imag / n + mag / n + (num / den).sqrt()
}

/// Relative error `|a - b| / |b|`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
