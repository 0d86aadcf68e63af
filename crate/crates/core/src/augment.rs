//! Training-data perturbations: additive noise at a target SNR, a
//! resampling pitch/formant shift, a low-pass plus μ-law stand-in for lossy
//! compression, and a shell hook for running a real codec.

use std::path::PathBuf;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::signal::{load_wav, save_wav, AudioBuffer, WavFormat};
use crate::upsample::{apply_fir, bessel_i0, design_lowpass};

/// Range the default SNR is drawn from, in dB.
pub const DEFAULT_SNR_RANGE: (f64, f64) = (28.0, 40.0);
pub const DEFAULT_COMPRESS_CUTOFF_HZ: f64 = 8000.0;
pub const DEFAULT_COMPRESS_BITS: u32 = 8;
pub const MU_LAW_MU: f64 = 255.0;

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Adds seeded Gaussian noise rescaled so the realised SNR equals `snr_db`. `f64::INFINITY` returns the input.
pub fn add_noise(x: &AudioBuffer, snr_db: f64, seed: u64) -> Result<AudioBuffer> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "SNR must be finite or +inf, got {snr_db}"
        )));
    }
    if x.is_empty() {
        return Err(Error::Empty("noise input"));
    }
    let ps = power(x.samples());
    if ps == 0.0 {
        return Err(Error::InvalidAudio(
            "cannot set the SNR of a silent signal".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let gain = (ps / 10f64.powf(snr_db / 10.0) / power(&noise)).sqrt();
    let y = x
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + gain * n)
        .collect();
    AudioBuffer::new(y, x.sample_rate())
}

/// Draws an SNR uniformly from [`DEFAULT_SNR_RANGE`] and applies it; returns the SNR used.
pub fn add_noise_random(x: &AudioBuffer, seed: u64) -> Result<(AudioBuffer, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snr = rng.random_range(DEFAULT_SNR_RANGE.0..=DEFAULT_SNR_RANGE.1);
    Ok((add_noise(x, snr, seed.wrapping_add(1))?, snr))
}

/// Realised SNR of `noisy` against `clean` in dB.
pub fn measured_snr_db(clean: &AudioBuffer, noisy: &AudioBuffer) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::LengthMismatch {
            left: clean.len(),
            right: noisy.len(),
        });
    }
    let diff: Vec<f64> = clean
        .samples()
        .iter()
        .zip(noisy.samples())
        .map(|(a, b)| b - a)
        .collect();
    Ok(10.0 * (power(clean.samples()) / power(&diff)).log10())
}

/// Best rational approximation `p/q` with `q <= max_den`.
pub fn rational_approx(v: f64, max_den: u64) -> (u64, u64) {
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut x = v;
    loop {
        let a = x.floor() as u64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = x - a as f64;
        if frac < 1e-12 || (p1 as f64 / q1 as f64 - v).abs() < 1e-12 {
            break;
        }
        x = 1.0 / frac;
    }
    (p1, q1)
}

const SHIFT_HALF_WIDTH: isize = 32;
const SHIFT_KAISER_BETA: f64 = 9.0;

/// Resamples by `1 / pitch_ratio` and plays back at the original rate, so pitch and formants
/// move together. Output is zero-padded or trimmed to the input length.
pub fn harmonic_shift(x: &AudioBuffer, pitch_ratio: f64) -> Result<AudioBuffer> {
    if !(pitch_ratio.is_finite() && (0.125..=8.0).contains(&pitch_ratio)) {
        return Err(Error::InvalidConfig(format!(
            "pitch ratio must lie in [0.125, 8], got {pitch_ratio}"
        )));
    }
    if x.is_empty() {
        return Err(Error::Empty("pitch-shift input"));
    }
    let (p, q) = rational_approx(pitch_ratio, 1000);
    let s = x.samples();
    // Read position of output n is n * p / q input samples; the kernel widens when reading faster.
    let cutoff = 0.5 * (q as f64 / p as f64).min(1.0);
    let half = (SHIFT_HALF_WIDTH as f64 * 0.5 / cutoff).ceil() as isize;
    let i0b = bessel_i0(SHIFT_KAISER_BETA);
    let kernel = |d: f64| {
        let r = d / (half as f64 + 1.0);
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let sinc = if d == 0.0 {
            2.0 * cutoff
        } else {
            (2.0 * std::f64::consts::PI * cutoff * d).sin() / (std::f64::consts::PI * d)
        };
        sinc * bessel_i0(SHIFT_KAISER_BETA * (1.0 - r * r).sqrt()) / i0b
    };
    let mut out = vec![0.0; s.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let num = n as u64 * p;
        let base = (num / q) as isize;
        if base >= s.len() as isize {
            break;
        }
        let frac = (num % q) as f64 / q as f64;
        let mut acc = 0.0;
        for k in base - half..=base + half + 1 {
            if k >= 0 && (k as usize) < s.len() {
                acc += s[k as usize] * kernel(base as f64 + frac - k as f64);
            }
        }
        *o = acc;
    }
    AudioBuffer::new(out, x.sample_rate())
}

fn mu_law(v: f64) -> f64 {
    v.signum() * (1.0 + MU_LAW_MU * v.abs()).ln() / (1.0 + MU_LAW_MU).ln()
}

fn mu_law_inverse(c: f64) -> f64 {
    c.signum() * ((1.0 + MU_LAW_MU).powf(c.abs()) - 1.0) / MU_LAW_MU
}

/// Mid-tread quantisation step of the companded signal at `bits`.
pub fn companded_step(bits: u32) -> f64 {
    1.0 / ((1u64 << (bits - 1)) - 1) as f64
}

/// μ-law encode, quantise and decode; input is clamped to [-1, 1].
pub fn mu_law_quantize(x: &[f64], bits: u32) -> Vec<f64> {
    let levels = ((1u64 << (bits - 1)) - 1) as f64;
    x.iter()
        .map(|&v| mu_law_inverse((mu_law(v.clamp(-1.0, 1.0)) * levels).round() / levels))
        .collect()
}

/// Companded representation used to express errors in quantiser steps.
pub fn mu_law_encode(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| mu_law(v.clamp(-1.0, 1.0))).collect()
}

/// Low-pass at `cutoff_hz` (bypassed at or above Nyquist) followed by μ-law quantisation at `bits`.
pub fn lossy_compress_proxy(x: &AudioBuffer, cutoff_hz: f64, bits: u32) -> Result<AudioBuffer> {
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidConfig(format!(
            "bits must lie in 2..=16, got {bits}"
        )));
    }
    if !(cutoff_hz > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "cutoff must be positive, got {cutoff_hz}"
        )));
    }
    let nyquist = x.sample_rate() as f64 / 2.0;
    let filtered = if cutoff_hz >= nyquist {
        x.samples().to_vec()
    } else {
        let f = design_lowpass(cutoff_hz / x.sample_rate() as f64, 127, 9.0)?;
        apply_fir(x.samples(), &f)
    };
    AudioBuffer::new(mu_law_quantize(&filtered, bits), x.sample_rate())
}

/// Shell command template with `{input}` and `{output}` placeholders, run through `sh -c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalCodec {
    pub command: String,
}

impl ExternalCodec {
    pub fn new(command: impl Into<String>) -> Result<Self> {
        let command = command.into();
        if !command.contains("{input}") || !command.contains("{output}") {
            return Err(Error::InvalidConfig(
                "codec command needs {input} and {output} placeholders".into(),
            ));
        }
        Ok(Self { command })
    }

    /// Writes `x` to a temporary WAV, runs the command and loads its output WAV.
    pub fn run(&self, x: &AudioBuffer) -> Result<AudioBuffer> {
        let dir = tempfile::tempdir()?;
        let input: PathBuf = dir.path().join("input.wav");
        let output: PathBuf = dir.path().join("output.wav");
        save_wav(x, &input, WavFormat::Float32)?;
        let cmd = self
            .command
            .replace("{input}", &input.to_string_lossy())
            .replace("{output}", &output.to_string_lossy());
        let status = Command::new("sh").arg("-c").arg(&cmd).status()?;
        if !status.success() {
            return Err(Error::ExternalCodec(format!(
                "`{cmd}` exited with {status}"
            )));
        }
        if !output.exists() {
            return Err(Error::ExternalCodec(format!(
                "`{cmd}` produced no output file"
            )));
        }
        load_wav(&output)
    }
}
