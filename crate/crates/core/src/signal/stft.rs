use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WindowKind {
    /// Periodic Hann, which overlap-adds to a constant at hop = window/4 (and window/2).
    Hann,
    Rectangular,
}

/// Framing parameters of a short-time Fourier transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_size: usize,
    pub hop_size: usize,
    pub window: WindowKind,
    /// Reflect-pad `window_size / 2` samples on both ends before framing.
    pub center: bool,
}

impl StftConfig {
    /// Hann window, centered framing.
    pub fn new(fft_size: usize, window_size: usize, hop_size: usize) -> Self {
        Self {
            fft_size,
            window_size,
            hop_size,
            window: WindowKind::Hann,
            center: true,
        }
    }

    /// 1024/1024/256 analysis used for mel features and metrics.
    pub fn analysis() -> Self {
        Self::new(1024, 1024, 256)
    }

    pub fn with_window(mut self, window: WindowKind) -> Self {
        self.window = window;
        self
    }

    pub fn with_center(mut self, center: bool) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_size == 0 || self.window_size == 0 || self.fft_size == 0 {
            return Err(Error::InvalidConfig("STFT sizes must be positive".into()));
        }
        if self.hop_size > self.window_size || self.window_size > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "need hop ({}) <= window ({}) <= fft ({})",
                self.hop_size, self.window_size, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn pad(&self) -> usize {
        if self.center {
            self.window_size / 2
        } else {
            0
        }
    }

    /// Frame count for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> Result<usize> {
        let pad = self.pad();
        if self.center && len <= pad {
            return Err(Error::TooShort {
                needed: pad + 1,
                got: len,
            });
        }
        let padded = len + 2 * pad;
        if padded < self.window_size {
            return Err(Error::TooShort {
                needed: self.window_size - 2 * pad,
                got: len,
            });
        }
        Ok(1 + (padded - self.window_size) / self.hop_size)
    }

    pub fn window_samples(&self) -> Vec<f64> {
        let n = self.window_size;
        match self.window {
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; n],
        }
    }
}

/// One-sided complex spectrogram stored frame-major (`frames × bins`).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub config: StftConfig,
    /// Length of the analysed signal (before padding).
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn zeros(frames: usize, config: StftConfig, signal_len: usize) -> Self {
        let bins = config.num_bins();
        Self {
            real: vec![0.0; frames * bins],
            imag: vec![0.0; frames * bins],
            frames,
            bins,
            config,
            signal_len,
        }
    }

    pub fn at(&self, frame: usize, bin: usize) -> Complex64 {
        let i = frame * self.bins + bin;
        Complex64::new(self.real[i], self.imag[i])
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(r, i)| r.hypot(*i))
            .collect()
    }

    /// Squared Frobenius norm over all cells.
    pub fn energy(&self) -> f64 {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }
}

/// Reusable STFT machinery for one configuration: window plus FFT plans.
///
/// Besides the forward transform it provides the exact adjoint
/// ([`StftPlan::backward`]) used to push loss gradients back to samples, and
/// the window-squared overlap-add inverse.
#[derive(Clone)]
pub struct StftPlan {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan")
            .field("config", &self.config)
            .finish()
    }
}

impl StftPlan {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: config.window_samples(),
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    fn padded_index(&self, i: usize, len: usize) -> usize {
        let pad = self.config.pad();
        if i < pad {
            pad - i
        } else if i < pad + len {
            i - pad
        } else {
            let k = i - (pad + len - 1);
            len - 1 - k
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ComplexSpectrogram> {
        let cfg = &self.config;
        let frames = cfg.num_frames(x.len())?;
        let mut spec = ComplexSpectrogram::zeros(frames, *cfg, x.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        let bins = spec.bins;
        for t in 0..frames {
            let start = t * cfg.hop_size;
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = if k < cfg.window_size {
                    let s = x[self.padded_index(start + k, x.len())];
                    Complex64::new(s * self.window[k], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            let row = t * bins;
            for b in 0..bins {
                spec.real[row + b] = buf[b].re;
                spec.imag[row + b] = buf[b].im;
            }
        }
        Ok(spec)
    }

    /// Adjoint of [`StftPlan::forward`]: maps gradients w.r.t. the real and
    /// imaginary grids back to gradients w.r.t. the `len` input samples.
    pub fn backward(&self, len: usize, grad_real: &[f64], grad_imag: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let frames = cfg.num_frames(len)?;
        let bins = cfg.num_bins();
        if grad_real.len() != frames * bins || grad_imag.len() != frames * bins {
            return Err(Error::ShapeMismatch(format!(
                "gradient grid has {} cells, expected {}",
                grad_real.len(),
                frames * bins
            )));
        }
        let mut grad = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for t in 0..frames {
            let row = t * bins;
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = if k < bins {
                    Complex64::new(grad_real[row + k], grad_imag[row + k])
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            // Unnormalised inverse: sum_k G_k e^{+i 2 pi k n / N}; the real part
            // is the adjoint of (cos, -sin) analysis.
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * cfg.hop_size;
            for k in 0..cfg.window_size {
                grad[self.padded_index(start + k, len)] += buf[k].re * self.window[k];
            }
        }
        Ok(grad)
    }

    /// Window-squared overlap-add inverse.
    pub fn inverse(&self, spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
        let cfg = &self.config;
        if spec.config != *cfg {
            return Err(Error::InvalidConfig(
                "spectrogram was produced with a different config".into(),
            ));
        }
        if cfg.window == WindowKind::Hann && 2 * cfg.hop_size > cfg.window_size {
            return Err(Error::InvalidConfig(format!(
                "hop {} exceeds half the Hann window {}; overlap-add is not invertible",
                cfg.hop_size, cfg.window_size
            )));
        }
        let n = cfg.fft_size;
        let padded_len = (spec.frames - 1) * cfg.hop_size + cfg.window_size;
        let mut out = vec![0.0; padded_len];
        let mut norm = vec![0.0; padded_len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for t in 0..spec.frames {
            for k in 0..n {
                buf[k] = if k < spec.bins {
                    spec.at(t, k)
                } else {
                    spec.at(t, n - k).conj()
                };
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * cfg.hop_size;
            for k in 0..cfg.window_size {
                let w = self.window[k];
                out[start + k] += buf[k].re / n as f64 * w;
                norm[start + k] += w * w;
            }
        }
        for (o, w) in out.iter_mut().zip(&norm) {
            *o = if *w > 1e-11 { *o / w } else { 0.0 };
        }
        let pad = cfg.pad();
        let end = (pad + spec.signal_len).min(padded_len);
        Ok(out[pad.min(end)..end].to_vec())
    }
}

/// Complex STFT of `x`.
pub fn stft(x: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    StftPlan::new(*cfg)?.forward(x.samples())
}

/// Inverse STFT; the result has the analysed signal's length where frames cover it.
pub fn istft(spec: &ComplexSpectrogram, sample_rate: u32) -> Result<AudioBuffer> {
    let samples = StftPlan::new(spec.config)?.inverse(spec)?;
    AudioBuffer::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn frame_count_formula() {
        let cfg = StftConfig::new(1024, 1024, 256);
        // padded = 4096 + 1024
        assert_eq!(cfg.num_frames(4096).unwrap(), 1 + (5120 - 1024) / 256);
        let raw = cfg.with_center(false);
        assert_eq!(raw.num_frames(1024).unwrap(), 1);
        assert!(raw.num_frames(1023).is_err());
        assert!(cfg.num_frames(512).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(StftConfig::new(512, 1024, 256).validate().is_err());
        assert!(StftConfig::new(1024, 1024, 2048).validate().is_err());
        assert!(StftConfig::new(1024, 1024, 0).validate().is_err());
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let s = StftPlan::new(StftConfig::new(64, 64, 16))
            .unwrap()
            .forward(&[0.0; 300])
            .unwrap();
        assert!(s.real.iter().chain(&s.imag).all(|v| *v == 0.0));
    }

    #[test]
    fn impulse_has_flat_magnitude_with_rectangular_window() {
        let cfg = StftConfig::new(32, 32, 32)
            .with_window(WindowKind::Rectangular)
            .with_center(false);
        let mut x = vec![0.0; 96];
        x[32 + 16] = 1.0; // center of the second frame
        let s = StftPlan::new(cfg).unwrap().forward(&x).unwrap();
        for b in 0..s.bins {
            assert!((s.at(1, b).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bin_centred_tone_concentrates_energy() {
        let n = 256;
        let k = 10;
        let cfg = StftConfig::new(n, n, n / 4).with_center(false);
        let x: Vec<f64> = (0..4 * n)
            .map(|i| (2.0 * PI * k as f64 * i as f64 / n as f64 + 0.3).cos())
            .collect();
        let s = StftPlan::new(cfg).unwrap().forward(&x).unwrap();
        // Brute-force DFT of the windowed first frame as an oracle.
        let w = cfg.window_samples();
        let mut brute = vec![0.0; s.bins];
        for (b, e) in brute.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                let ang = -2.0 * PI * (b * i) as f64 / n as f64;
                re += x[i] * w[i] * ang.cos();
                im += x[i] * w[i] * ang.sin();
            }
            *e = re * re + im * im;
            assert!((s.at(0, b).norm_sqr() - *e).abs() < 1e-8 * (1.0 + *e));
        }
        let total: f64 = brute.iter().sum();
        let near: f64 = brute[k - 1..=k + 1].iter().sum();
        assert!(near / total >= 0.99);
    }

    #[test]
    fn parseval_with_rectangular_frames() {
        let cfg = StftConfig::new(128, 128, 128)
            .with_window(WindowKind::Rectangular)
            .with_center(false);
        let x = noise(128 * 5, 3);
        let s = StftPlan::new(cfg).unwrap().forward(&x).unwrap();
        for t in 0..s.frames {
            let frame = &x[t * 128..(t + 1) * 128];
            let e: f64 = frame.iter().map(|v| v * v).sum();
            // two-sided energy from the one-sided spectrum
            let mut two_sided = 0.0;
            for b in 0..s.bins {
                let m = s.at(t, b).norm_sqr();
                two_sided += if b == 0 || b == 64 { m } else { 2.0 * m };
            }
            assert!((two_sided - 128.0 * e).abs() <= 1e-9 * 128.0 * e);
        }
    }

    #[test]
    fn istft_round_trip() {
        let cfg = StftConfig::new(512, 512, 128);
        let x = noise(22050, 7);
        let plan = StftPlan::new(cfg).unwrap();
        let y = plan.inverse(&plan.forward(&x).unwrap()).unwrap();
        assert_eq!(y.len(), x.len());
        let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let ref_e: f64 = x.iter().map(|a| a * a).sum();
        assert!((err / ref_e).sqrt() < 1e-6);
        for i in 256..x.len() - 256 {
            assert!((x[i] - y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn istft_rejects_sparse_hann_hop() {
        let cfg = StftConfig::new(64, 64, 48);
        let plan = StftPlan::new(cfg).unwrap();
        let s = plan.forward(&noise(500, 1)).unwrap();
        assert!(plan.inverse(&s).is_err());
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <S x, g> == <x, S^T g> for random x and g.
        let cfg = StftConfig::new(32, 24, 6);
        let plan = StftPlan::new(cfg).unwrap();
        let x = noise(90, 11);
        let s = plan.forward(&x).unwrap();
        let gr = noise(s.real.len(), 12);
        let gi = noise(s.imag.len(), 13);
        let lhs: f64 = s.real.iter().zip(&gr).map(|(a, b)| a * b).sum::<f64>()
            + s.imag.iter().zip(&gi).map(|(a, b)| a * b).sum::<f64>();
        let back = plan.backward(x.len(), &gr, &gi).unwrap();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
