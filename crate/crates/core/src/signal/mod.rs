//! Audio buffers, WAV I/O, STFT/iSTFT and log-mel analysis.
//!
//! Everything here works in `f64`; conversion to and from 16-bit or 32-bit
//! float PCM happens only at the WAV boundary.

mod mel;
mod stft;
mod wav;

pub use mel::{
    hz_to_mel, mel_spectrogram, mel_to_hz, MelAnalyzer, MelConfig, MelFilterbank, MelSpectrogram,
    MEL_LOG_FLOOR,
};
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, StftPlan, WindowKind};
pub use wav::{load_wav, save_wav, WavFormat};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio with its sample rate.
///
/// Samples are nominally in `[-1, 1]` but the buffer only enforces finiteness.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidAudio(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same buffer multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Writes a frames × columns grid as CSV, one frame per row, 9 significant digits.
pub fn write_grid_csv<W: Write>(
    mut out: W,
    rows: usize,
    cols: usize,
    value: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    let mut line = String::new();
    for r in 0..rows {
        line.clear();
        for c in 0..cols {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&format_sig9(value(r, c)));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn write_grid_csv_file(
    path: &Path,
    rows: usize,
    cols: usize,
    value: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_grid_csv(file, rows, cols, value)
}

/// Scientific notation with nine significant digits.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.8e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(AudioBuffer::new(vec![0.0, f64::NAN], 16000).is_err());
        assert!(AudioBuffer::new(vec![0.0, f64::INFINITY], 16000).is_err());
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
        assert!(AudioBuffer::new(vec![], 8000).is_ok());
    }

    #[test]
    fn csv_has_nine_significant_digits() {
        let mut out = Vec::new();
        write_grid_csv(&mut out, 2, 2, |r, c| (r * 2 + c) as f64 / 3.0).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "0,3.33333333e-1");
        assert_eq!(lines[1], "6.66666667e-1,1.00000000e0");
    }
}
