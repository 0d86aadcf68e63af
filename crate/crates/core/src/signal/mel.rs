use super::stft::{ComplexSpectrogram, StftConfig, StftPlan};
use super::AudioBuffer;
use crate::error::{Error, Result};

/// Lower clamp applied to mel energies before the natural log.
pub const MEL_LOG_FLOOR: f64 = 1e-5;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Mel analysis parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MelConfig {
    pub stft: StftConfig,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means Nyquist.
    pub fmax: Option<f64>,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::analysis(),
            n_mels: 80,
            fmin: 0.0,
            fmax: None,
        }
    }
}

impl MelConfig {
    pub fn resolved_fmax(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(sample_rate as f64 / 2.0)
    }
}

/// Triangular filters on the HTK mel scale, `n_mels × bins`.
///
/// Each triangle is area-normalised (`2 / (f_right - f_left)`), the convention
/// of the reference HiFi-GAN mel front end.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    pub weights: Vec<f64>,
    pub n_mels: usize,
    pub bins: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelFilterbank {
    pub fn new(
        sample_rate: u32,
        fft_size: usize,
        n_mels: usize,
        fmin: f64,
        fmax: f64,
    ) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels == 0 {
            return Err(Error::InvalidConfig("n_mels must be positive".into()));
        }
        if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "mel band edges must satisfy 0 <= fmin < fmax <= {nyquist}; got {fmin}..{fmax}"
            )));
        }
        let bins = fft_size / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut weights = vec![0.0; n_mels * bins];
        for m in 0..n_mels {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (r - l);
            for b in 0..bins {
                let f = b as f64 * sample_rate as f64 / fft_size as f64;
                let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
                weights[m * bins + b] = w * norm;
            }
        }
        Ok(Self {
            weights,
            n_mels,
            bins,
            fmin,
            fmax,
        })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    /// Mel energies (before log) of a magnitude grid `frames × bins`.
    pub fn apply(&self, magnitude: &[f64], frames: usize) -> Vec<f64> {
        let mut out = vec![0.0; frames * self.n_mels];
        for t in 0..frames {
            let mag = &magnitude[t * self.bins..(t + 1) * self.bins];
            for m in 0..self.n_mels {
                out[t * self.n_mels + m] = self.row(m).iter().zip(mag).map(|(w, a)| w * a).sum();
            }
        }
        out
    }
}

/// Natural-log mel energies, `frames × n_mels`, floored at [`MEL_LOG_FLOOR`].
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelSpectrogram {
    pub fn at(&self, frame: usize, mel: usize) -> f64 {
        self.values[frame * self.n_mels + mel]
    }
}

/// Precomputed STFT plan and filterbank for repeated log-mel analysis.
#[derive(Clone, Debug)]
pub struct MelAnalyzer {
    pub plan: StftPlan,
    pub filterbank: MelFilterbank,
}

impl MelAnalyzer {
    pub fn new(cfg: &MelConfig, sample_rate: u32) -> Result<Self> {
        let plan = StftPlan::new(cfg.stft)?;
        let filterbank = MelFilterbank::new(
            sample_rate,
            cfg.stft.fft_size,
            cfg.n_mels,
            cfg.fmin,
            cfg.resolved_fmax(sample_rate),
        )?;
        Ok(Self { plan, filterbank })
    }

    /// Returns the spectrogram, the raw mel energies and the log-mel grid.
    pub fn analyze(&self, x: &[f64]) -> Result<(ComplexSpectrogram, Vec<f64>, MelSpectrogram)> {
        let spec = self.plan.forward(x)?;
        let mag = spec.magnitude();
        let energies = self.filterbank.apply(&mag, spec.frames);
        let values = energies.iter().map(|e| e.max(MEL_LOG_FLOOR).ln()).collect();
        let mel = MelSpectrogram {
            values,
            frames: spec.frames,
            n_mels: self.filterbank.n_mels,
            fmin: self.filterbank.fmin,
            fmax: self.filterbank.fmax,
        };
        Ok((spec, energies, mel))
    }

    pub fn log_mel(&self, x: &[f64]) -> Result<MelSpectrogram> {
        Ok(self.analyze(x)?.2)
    }
}

pub fn mel_spectrogram(x: &AudioBuffer, cfg: &MelConfig) -> Result<MelSpectrogram> {
    MelAnalyzer::new(cfg, x.sample_rate())?.log_mel(x.samples())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn htk_scale_round_trips() {
        for f in [0.0, 100.0, 700.0, 4000.0, 11025.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn filter_rows_cover_the_band() {
        let fb = MelFilterbank::new(22050, 1024, 80, 0.0, 11025.0).unwrap();
        for m in 0..80 {
            let row = fb.row(m);
            assert!(row.iter().all(|w| *w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0, "row {m} empty");
        }
        // no gap strictly inside (fmin, fmax)
        for b in 1..fb.bins - 1 {
            let total: f64 = (0..80).map(|m| fb.row(m)[b]).sum();
            assert!(total > 0.0, "bin {b} uncovered");
        }
    }

    #[test]
    fn invalid_band_edges() {
        assert!(MelFilterbank::new(22050, 1024, 80, 100.0, 50.0).is_err());
        assert!(MelFilterbank::new(22050, 1024, 80, 0.0, 12000.0).is_err());
        assert!(MelFilterbank::new(22050, 1024, 0, 0.0, 8000.0).is_err());
    }

    #[test]
    fn silence_sits_on_the_floor() {
        let x = AudioBuffer::silence(4096, 22050).unwrap();
        let mel = mel_spectrogram(&x, &MelConfig::default()).unwrap();
        assert!(mel.values.iter().all(|v| *v == MEL_LOG_FLOOR.ln()));
    }
}
