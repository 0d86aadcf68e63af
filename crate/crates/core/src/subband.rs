//! Cosine-modulated pseudo-QMF bank and the low/mid/high band grouping.
//!
//! The prototype is a Kaiser-windowed sinc whose cutoff is tuned by a 1-D scan
//! for minimum round-trip error. Analysis filters carry a `2 * sqrt(K)` gain so
//! the decimated bands preserve signal energy; synthesis filters are their
//! time reverses. The `taps - 1` sample group delay of the cascade is split
//! between analysis (`taps / 2`) and synthesis so that band `m` is aligned
//! with input sample `m * K`.

use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::AudioBuffer;
use crate::upsample::windowed_sinc;

#[derive(Clone, Debug, PartialEq)]
pub struct PqmfBank {
    pub num_bands: usize,
    pub prototype: Vec<f64>,
    /// Prototype cutoff in cycles/sample.
    pub cutoff: f64,
    pub kaiser_beta: f64,
    pub analysis: Vec<Vec<f64>>,
    pub synthesis: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSignals {
    pub bands: Vec<Vec<f64>>,
    pub source_len: usize,
    /// Full-band sample rate the bands were taken from.
    pub sample_rate: u32,
}

impl SubbandSignals {
    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn band_len(&self) -> usize {
        self.bands.first().map_or(0, Vec::len)
    }

    pub fn band_energy(&self, k: usize) -> f64 {
        self.bands[k].iter().map(|v| v * v).sum()
    }

    pub fn total_energy(&self) -> f64 {
        (0..self.num_bands()).map(|k| self.band_energy(k)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.band_len();
        if self.bands.iter().any(|b| b.len() != n) {
            return Err(Error::ShapeMismatch(
                "sub-bands have different lengths".into(),
            ));
        }
        Ok(())
    }
}

fn modulated(prototype: &[f64], k: usize, num_bands: usize) -> Vec<f64> {
    let taps = prototype.len();
    let center = (taps as f64 - 1.0) / 2.0;
    let phase = if k % 2 == 0 { PI / 4.0 } else { -PI / 4.0 };
    let gain = 2.0 * (num_bands as f64).sqrt();
    prototype
        .iter()
        .enumerate()
        .map(|(n, p)| {
            gain * p
                * ((2 * k + 1) as f64 * PI / (2.0 * num_bands as f64) * (n as f64 - center) + phase)
                    .cos()
        })
        .collect()
}

impl PqmfBank {
    /// Bank for a fixed prototype cutoff (cycles/sample).
    pub fn with_cutoff(
        num_bands: usize,
        taps: usize,
        kaiser_beta: f64,
        cutoff: f64,
    ) -> Result<Self> {
        if num_bands < 2 {
            return Err(Error::InvalidConfig("PQMF needs at least two bands".into()));
        }
        if taps < 2 * num_bands {
            return Err(Error::InvalidConfig(format!(
                "{taps} taps is too short for {num_bands} bands (use at least {})",
                2 * num_bands
            )));
        }
        if !(cutoff > 0.0 && cutoff < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "prototype cutoff {cutoff} outside (0, 0.5)"
            )));
        }
        let prototype = windowed_sinc(cutoff, taps, kaiser_beta);
        let analysis: Vec<Vec<f64>> = (0..num_bands)
            .map(|k| modulated(&prototype, k, num_bands))
            .collect();
        let synthesis = analysis
            .iter()
            .map(|h| h.iter().rev().copied().collect())
            .collect();
        Ok(Self {
            num_bands,
            prototype,
            cutoff,
            kaiser_beta,
            analysis,
            synthesis,
        })
    }

    pub fn taps(&self) -> usize {
        self.prototype.len()
    }

    /// Samples of advance applied during analysis.
    fn analysis_advance(&self) -> usize {
        self.taps() / 2
    }

    fn synthesis_advance(&self) -> usize {
        self.taps() - 1 - self.analysis_advance()
    }

    /// Analysis on raw samples: band `m` sample aligned with input sample `m * K`.
    pub fn analyze(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.is_empty() {
            return Err(Error::Empty("PQMF analysis input"));
        }
        let k_bands = self.num_bands;
        let band_len = x.len().div_ceil(k_bands);
        let adv = self.analysis_advance() as isize;
        let n = x.len() as isize;
        let bands = self
            .analysis
            .iter()
            .map(|h| {
                (0..band_len)
                    .map(|m| {
                        let pos = (m * k_bands) as isize + adv;
                        h.iter()
                            .enumerate()
                            .filter_map(|(t, &w)| {
                                let i = pos - t as isize;
                                (i >= 0 && i < n).then(|| w * x[i as usize])
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(bands)
    }

    /// Adjoint of [`PqmfBank::analyze`] for a signal of `len` samples.
    pub fn analyze_backward(&self, len: usize, grad_bands: &[Vec<f64>]) -> Result<Vec<f64>> {
        let k_bands = self.num_bands;
        let band_len = len.div_ceil(k_bands);
        if grad_bands.len() != k_bands || grad_bands.iter().any(|g| g.len() != band_len) {
            return Err(Error::ShapeMismatch(
                "band gradients do not match the bank".into(),
            ));
        }
        let adv = self.analysis_advance() as isize;
        let mut grad = vec![0.0; len];
        for (h, g) in self.analysis.iter().zip(grad_bands) {
            for (m, &gm) in g.iter().enumerate() {
                if gm == 0.0 {
                    continue;
                }
                let pos = (m * k_bands) as isize + adv;
                for (t, &w) in h.iter().enumerate() {
                    let i = pos - t as isize;
                    if i >= 0 && i < len as isize {
                        grad[i as usize] += w * gm;
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Synthesis on raw bands, returning `source_len` samples.
    pub fn synthesize(&self, bands: &[Vec<f64>], source_len: usize) -> Result<Vec<f64>> {
        if bands.len() != self.num_bands {
            return Err(Error::ShapeMismatch(format!(
                "{} bands for a {}-band bank",
                bands.len(),
                self.num_bands
            )));
        }
        let band_len = bands[0].len();
        if bands.iter().any(|b| b.len() != band_len) {
            return Err(Error::ShapeMismatch(
                "sub-bands have different lengths".into(),
            ));
        }
        let k_bands = self.num_bands;
        let adv = self.synthesis_advance() as isize;
        let mut out = vec![0.0; source_len];
        for (f, b) in self.synthesis.iter().zip(bands) {
            for (m, &bm) in b.iter().enumerate() {
                if bm == 0.0 {
                    continue;
                }
                // zero-stuffed sample at m*K contributes to out[m*K + t - adv]
                let base = (m * k_bands) as isize - adv;
                for (t, &w) in f.iter().enumerate() {
                    let i = base + t as isize;
                    if i >= 0 && (i as usize) < source_len {
                        out[i as usize] += w * bm;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Relative round-trip error (dB) on `x`.
    pub fn round_trip_error_db(&self, x: &[f64]) -> Result<f64> {
        let y = self.synthesize(&self.analyze(x)?, x.len())?;
        Ok(relative_error_db(x, &y))
    }
}

pub(crate) fn relative_error_db(reference: &[f64], estimate: &[f64]) -> f64 {
    let err: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let e: f64 = reference.iter().map(|a| a * a).sum();
    10.0 * (err / e).log10()
}

const CUTOFF_SCAN_STEPS: usize = 121;

/// Designs a K-band bank, scanning the prototype cutoff over
/// `[0.3, 1.5] / (4K)` for the lowest round-trip error on a fixed noise probe.
pub fn design_pqmf(num_bands: usize, taps: usize, kaiser_beta: f64) -> Result<PqmfBank> {
    if num_bands < 2 {
        return Err(Error::InvalidConfig("PQMF needs at least two bands".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5051_4d46);
    let probe: Vec<f64> = (0..(64 * num_bands).max(2048))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let nominal = 1.0 / (4.0 * num_bands as f64);
    let mut best: Option<(f64, PqmfBank)> = None;
    for i in 0..CUTOFF_SCAN_STEPS {
        let cutoff = nominal * (0.3 + 1.2 * i as f64 / (CUTOFF_SCAN_STEPS - 1) as f64);
        let bank = PqmfBank::with_cutoff(num_bands, taps, kaiser_beta, cutoff)?;
        let err = bank.round_trip_error_db(&probe)?;
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, bank));
        }
    }
    Ok(best.expect("scan has candidates").1)
}

pub fn pqmf_analysis(x: &AudioBuffer, bank: &PqmfBank) -> Result<SubbandSignals> {
    Ok(SubbandSignals {
        bands: bank.analyze(x.samples())?,
        source_len: x.len(),
        sample_rate: x.sample_rate(),
    })
}

pub fn pqmf_synthesis(sb: &SubbandSignals, bank: &PqmfBank) -> Result<AudioBuffer> {
    sb.validate()?;
    AudioBuffer::new(bank.synthesize(&sb.bands, sb.source_len)?, sb.sample_rate)
}

/// Three contiguous band-index ranges feeding the low/mid/high discriminators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BandGrouping {
    pub low: Range<usize>,
    pub mid: Range<usize>,
    pub high: Range<usize>,
}

impl BandGrouping {
    /// Equal thirds of `num_bands` (remainder goes to the high group).
    pub fn thirds(num_bands: usize) -> Self {
        let third = num_bands / 3;
        Self {
            low: 0..third,
            mid: third..2 * third,
            high: 2 * third..num_bands,
        }
    }

    pub fn ranges(&self) -> [Range<usize>; 3] {
        [self.low.clone(), self.mid.clone(), self.high.clone()]
    }

    /// Checks that the ranges partition `0..num_bands`.
    pub fn validate(&self, num_bands: usize) -> Result<()> {
        let mut seen = vec![0usize; num_bands];
        for r in self.ranges() {
            if r.is_empty() {
                return Err(Error::InvalidConfig("empty band group".into()));
            }
            for i in r {
                if i >= num_bands {
                    return Err(Error::InvalidConfig(format!("band {i} out of range")));
                }
                seen[i] += 1;
            }
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(Error::InvalidConfig(format!(
                "band {i} covered {} times; groups must partition the bands",
                seen[i]
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupedBands {
    pub low: SubbandSignals,
    pub mid: SubbandSignals,
    pub high: SubbandSignals,
}

impl GroupedBands {
    pub fn groups(&self) -> [&SubbandSignals; 3] {
        [&self.low, &self.mid, &self.high]
    }
}

pub fn group_bands(sb: &SubbandSignals, grouping: &BandGrouping) -> Result<GroupedBands> {
    grouping.validate(sb.num_bands())?;
    let take = |r: &Range<usize>| SubbandSignals {
        bands: sb.bands[r.clone()].to_vec(),
        source_len: sb.source_len,
        sample_rate: sb.sample_rate,
    };
    Ok(GroupedBands {
        low: take(&grouping.low),
        mid: take(&grouping.mid),
        high: take(&grouping.high),
    })
}
