//! Objective quality measures: mel-cepstral distortion, log-spectral distance
//! (full band and per frequency third), a YIN-style F0 tracker with its RMSE,
//! and a spectral image-energy ratio for upsampling artifacts.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{AudioBuffer, MelAnalyzer, MelConfig, StftConfig, StftPlan};

/// `10 * sqrt(2) / ln 10`, the dB scaling of the cepstral distance.
pub const MCD_CONSTANT: f64 = 10.0 * std::f64::consts::SQRT_2 / std::f64::consts::LN_10;
/// Cepstral coefficients compared by MCD (c0 excluded).
pub const MCD_COEFFS: std::ops::RangeInclusive<usize> = 1..=13;
/// Magnitude floor applied before `log10` in LSD.
pub const LSD_FLOOR: f64 = 1e-8;

fn check_pair(x: &AudioBuffer, xhat: &AudioBuffer) -> Result<()> {
    if x.len() != xhat.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: xhat.len(),
        });
    }
    if x.sample_rate() != xhat.sample_rate() {
        return Err(Error::InvalidAudio(format!(
            "sample rates differ: {} vs {}",
            x.sample_rate(),
            xhat.sample_rate()
        )));
    }
    Ok(())
}

/// Orthonormal DCT-II of one row.
pub fn dct2_ortho(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    (0..v.len())
        .map(|k| {
            let s: f64 = v
                .iter()
                .enumerate()
                .map(|(i, x)| x * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .sum();
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            s * scale
        })
        .collect()
}

/// Mel-cepstral distortion in dB over the default 80-band log-mel analysis.
pub fn mcd(x: &AudioBuffer, xhat: &AudioBuffer) -> Result<f64> {
    mcd_with(x, xhat, &MelConfig::default())
}

pub fn mcd_with(x: &AudioBuffer, xhat: &AudioBuffer, cfg: &MelConfig) -> Result<f64> {
    check_pair(x, xhat)?;
    if cfg.n_mels <= *MCD_COEFFS.end() {
        return Err(Error::InvalidConfig(format!(
            "MCD needs more than {} mel bands",
            MCD_COEFFS.end()
        )));
    }
    let analyzer = MelAnalyzer::new(cfg, x.sample_rate())?;
    let a = analyzer.log_mel(x.samples())?;
    let b = analyzer.log_mel(xhat.samples())?;
    let mut total = 0.0;
    for t in 0..a.frames {
        let row =
            |m: &crate::signal::MelSpectrogram| m.values[t * m.n_mels..(t + 1) * m.n_mels].to_vec();
        let (ca, cb) = (dct2_ortho(&row(&a)), dct2_ortho(&row(&b)));
        let d2: f64 = MCD_COEFFS.map(|k| (ca[k] - cb[k]).powi(2)).sum();
        total += d2.sqrt();
    }
    Ok(MCD_CONSTANT * total / a.frames as f64)
}

/// Full-band LSD and the LSD of the lower, middle and upper thirds of the frequency axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsdBands {
    pub full: f64,
    pub low: f64,
    pub mid: f64,
    pub high: f64,
}

impl LsdBands {
    pub fn bands(&self) -> [f64; 3] {
        [self.low, self.mid, self.high]
    }
}

/// Band index (0 low, 1 mid, 2 high) of FFT bin `k` out of `bins` one-sided bins.
pub fn band_of_bin(k: usize, bins: usize) -> usize {
    let frac = k as f64 / (bins - 1) as f64;
    if frac < 1.0 / 3.0 {
        0
    } else if frac < 2.0 / 3.0 {
        1
    } else {
        2
    }
}

/// Log-spectral distance between two equal-length buffers with the analysis STFT.
pub fn lsd(x: &AudioBuffer, xhat: &AudioBuffer) -> Result<f64> {
    Ok(lsd_bands(x, xhat)?.full)
}

pub fn lsd_bands(x: &AudioBuffer, xhat: &AudioBuffer) -> Result<LsdBands> {
    check_pair(x, xhat)?;
    lsd_bands_with(
        x.samples(),
        xhat.samples(),
        &StftPlan::new(StftConfig::analysis())?,
    )
}

/// LSD with a caller-supplied STFT plan.
pub fn lsd_bands_with(x: &[f64], xhat: &[f64], plan: &StftPlan) -> Result<LsdBands> {
    if x.len() != xhat.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: xhat.len(),
        });
    }
    let a = plan.forward(x)?.magnitude();
    let b = plan.forward(xhat)?.magnitude();
    let bins = plan.config().num_bins();
    let frames = a.len() / bins;
    let mut counts = [0usize; 3];
    for k in 0..bins {
        counts[band_of_bin(k, bins)] += 1;
    }
    let mut full = 0.0;
    let mut band = [0.0; 3];
    for t in 0..frames {
        let mut sums = [0.0; 3];
        for k in 0..bins {
            let i = t * bins + k;
            let d = a[i].max(LSD_FLOOR).log10() - b[i].max(LSD_FLOOR).log10();
            sums[band_of_bin(k, bins)] += d * d;
        }
        full += (sums.iter().sum::<f64>() / bins as f64).sqrt();
        for j in 0..3 {
            band[j] += (sums[j] / counts[j] as f64).sqrt();
        }
    }
    let f = frames as f64;
    Ok(LsdBands {
        full: full / f,
        low: band[0] / f,
        mid: band[1] / f,
        high: band[2] / f,
    })
}

/// Pitch search bounds and tracker settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F0Config {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    pub fmax: f64,
    pub threshold: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            fmin: 50.0,
            fmax: 1000.0,
            threshold: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct F0Track {
    pub frame_times: Vec<f64>,
    /// Hz, 0 when unvoiced.
    pub f0: Vec<f64>,
    pub voicing: Vec<bool>,
}

impl F0Track {
    pub fn voiced_fraction(&self) -> f64 {
        if self.voicing.is_empty() {
            return 0.0;
        }
        self.voicing.iter().filter(|v| **v).count() as f64 / self.voicing.len() as f64
    }
}

/// YIN-style tracker. A frame is analysed only when its integration window plus the
/// longest lag fits inside the signal.
pub fn estimate_f0(x: &AudioBuffer, cfg: &F0Config) -> Result<F0Track> {
    let sr = x.sample_rate() as f64;
    if !(cfg.fmin > 0.0 && cfg.fmax > cfg.fmin && cfg.frame_ms > 0.0 && cfg.hop_ms > 0.0) {
        return Err(Error::InvalidConfig(
            "f0 tracker needs 0 < fmin < fmax and positive frame/hop".into(),
        ));
    }
    let w = (cfg.frame_ms * 1e-3 * sr).round() as usize;
    let hop = ((cfg.hop_ms * 1e-3 * sr).round() as usize).max(1);
    let tau_max = (sr / cfg.fmin).ceil() as usize;
    let tau_min = ((sr / cfg.fmax).floor() as usize).max(2);
    let s = x.samples();
    let mut track = F0Track {
        frame_times: vec![],
        f0: vec![],
        voicing: vec![],
    };
    if w == 0 || s.len() < w + tau_max + 1 {
        return Ok(track);
    }
    let frames = (s.len() - w - tau_max - 1) / hop + 1;
    let mut d = vec![0.0; tau_max + 1];
    let mut cmnd = vec![1.0; tau_max + 1];
    for f in 0..frames {
        let start = f * hop;
        let seg = &s[start..start + w + tau_max + 1];
        track.frame_times.push((start as f64 + w as f64 / 2.0) / sr);
        let energy: f64 = seg[..w].iter().map(|v| v * v).sum();
        let f0 = if energy <= 1e-12 * w as f64 {
            None
        } else {
            for (tau, dv) in d.iter_mut().enumerate().skip(1) {
                *dv = (0..w).map(|j| (seg[j] - seg[j + tau]).powi(2)).sum();
            }
            let mut running = 0.0;
            for tau in 1..=tau_max {
                running += d[tau];
                cmnd[tau] = if running > 0.0 {
                    d[tau] * tau as f64 / running
                } else {
                    1.0
                };
            }
            yin_pick(&cmnd, tau_min, tau_max, cfg.threshold).map(|tau| sr / tau)
        };
        match f0.filter(|f| (cfg.fmin..=cfg.fmax).contains(f)) {
            Some(f) => {
                track.f0.push(f);
                track.voicing.push(true);
            }
            None => {
                track.f0.push(0.0);
                track.voicing.push(false);
            }
        }
    }
    Ok(track)
}

/// First dip below the threshold, followed down to its local minimum and refined by a parabola.
fn yin_pick(cmnd: &[f64], tau_min: usize, tau_max: usize, threshold: f64) -> Option<f64> {
    let mut tau = tau_min;
    while tau < tau_max {
        if cmnd[tau] < threshold {
            while tau + 1 < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 1e-15 {
                0.5 * (a - c) / denom
            } else {
                0.0
            };
            return Some(tau as f64 + shift.clamp(-1.0, 1.0));
        }
        tau += 1;
    }
    None
}

/// RMSE in Hz over frames voiced in both tracks; `None` when there are none.
pub fn f0_rmse(x: &AudioBuffer, xhat: &AudioBuffer) -> Result<Option<f64>> {
    check_pair(x, xhat)?;
    let cfg = F0Config::default();
    let a = estimate_f0(x, &cfg)?;
    let b = estimate_f0(xhat, &cfg)?;
    Ok(track_rmse(&a, &b))
}

pub fn track_rmse(a: &F0Track, b: &F0Track) -> Option<f64> {
    let (sum, n) =
        a.f0.iter()
            .zip(&b.f0)
            .zip(a.voicing.iter().zip(&b.voicing))
            .filter(|(_, (va, vb))| **va && **vb)
            .fold((0.0, 0usize), |(s, n), ((fa, fb), _)| {
                (s + (fa - fb).powi(2), n + 1)
            });
    (n > 0).then(|| (sum / n as f64).sqrt())
}

fn hann_power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Complex64::new(
                v * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()),
                0.0,
            )
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Energy within ±2 bins of each image frequency relative to the energy around the fundamental, in dB.
pub fn aliasing_energy(x: &AudioBuffer, fundamental: f64, expected_images: &[f64]) -> Result<f64> {
    let nyquist = x.sample_rate() as f64 / 2.0;
    if x.len() < 16 {
        return Err(Error::TooShort {
            needed: 16,
            got: x.len(),
        });
    }
    if expected_images.is_empty() {
        return Err(Error::InvalidConfig("no image frequencies given".into()));
    }
    for &f in std::iter::once(&fundamental).chain(expected_images) {
        if !(0.0..=nyquist).contains(&f) {
            return Err(Error::InvalidConfig(format!(
                "frequency {f} Hz outside 0..={nyquist}"
            )));
        }
    }
    let p = hann_power_spectrum(x.samples());
    let hz_per_bin = x.sample_rate() as f64 / x.len() as f64;
    let around = |f: f64| {
        let c = (f / hz_per_bin).round() as isize;
        ((c - 2).max(0)..=(c + 2).min(p.len() as isize - 1))
            .map(|k| k as usize)
            .collect::<Vec<_>>()
    };
    let fund: f64 = around(fundamental).iter().map(|&k| p[k]).sum();
    if fund <= 0.0 {
        return Err(Error::InvalidAudio("no energy at the fundamental".into()));
    }
    let mut bins: Vec<usize> = expected_images.iter().flat_map(|&f| around(f)).collect();
    bins.sort_unstable();
    bins.dedup();
    let img: f64 = bins.iter().map(|&k| p[k]).sum();
    Ok(10.0 * (img.max(f64::MIN_POSITIVE) / fund).log10())
}

/// All metrics for one reference / estimate pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub mcd: f64,
    /// `None` when no frame is voiced in both signals.
    pub f0_rmse: Option<f64>,
    pub lsd: LsdBands,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "file,mcd,f0_rmse,lsd,lsd_L,lsd_M,lsd_H";

    pub fn csv_row(&self, file: &str) -> String {
        let f = crate::signal::format_sig9;
        format!(
            "{file},{},{},{},{},{},{}",
            f(self.mcd),
            self.f0_rmse.map_or_else(|| "NaN".to_string(), f),
            f(self.lsd.full),
            f(self.lsd.low),
            f(self.lsd.mid),
            f(self.lsd.high)
        )
    }
}

pub fn evaluate(x: &AudioBuffer, xhat: &AudioBuffer) -> Result<MetricReport> {
    Ok(MetricReport {
        mcd: mcd(x, xhat)?,
        f0_rmse: f0_rmse(x, xhat)?,
        lsd: lsd_bands(x, xhat)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(f: f64, secs: f64, sr: u32) -> AudioBuffer {
        let n = (secs * sr as f64) as usize;
        AudioBuffer::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * f * i as f64 / sr as f64).sin())
                .collect(),
            sr,
        )
        .unwrap()
    }

    fn noise(n: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), 22050).unwrap()
    }

    #[test]
    fn dct_is_orthonormal() {
        let v = [0.3, -1.0, 2.0, 0.5, 0.1];
        let c = dct2_ortho(&v);
        let e1: f64 = v.iter().map(|x| x * x).sum();
        let e2: f64 = c.iter().map(|x| x * x).sum();
        assert!((e1 - e2).abs() < 1e-12);
        let flat = dct2_ortho(&[2.0; 8]);
        assert!((flat[0] - 2.0 * 8f64.sqrt()).abs() < 1e-12);
        assert!(flat[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn identities() {
        let x = noise(8192, 1);
        assert_eq!(mcd(&x, &x).unwrap(), 0.0);
        assert_eq!(lsd(&x, &x).unwrap(), 0.0);
        let y = noise(8192, 2);
        assert!(mcd(&x, &y).unwrap() > 0.0);
        assert!((lsd(&x, &y).unwrap() - lsd(&y, &x).unwrap()).abs() < 1e-12);
        assert!(mcd(&x, &noise(8000, 2)).is_err());
    }

    #[test]
    fn gain_laws() {
        let x = noise(8192, 3);
        for g in [0.5, 2.0] {
            assert!(mcd(&x, &x.scaled(g).unwrap()).unwrap() <= 1e-9);
        }
        let l = lsd(&x, &x.scaled(2.0).unwrap()).unwrap();
        assert!((l - 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn band_split() {
        assert_eq!(band_of_bin(0, 513), 0);
        assert_eq!(band_of_bin(170, 513), 0);
        assert_eq!(band_of_bin(171, 513), 1);
        assert_eq!(band_of_bin(512, 513), 2);
        let x = noise(8192, 4);
        let y = noise(8192, 5);
        let b = lsd_bands(&x, &y).unwrap();
        let (lo, hi) = b
            .bands()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, c), v| (a.min(*v), c.max(*v)));
        assert!(b.full >= lo && b.full <= hi, "{b:?}");
    }

    #[test]
    fn pure_tone_is_tracked() {
        let x = tone(220.0, 0.5, 22050);
        let t = estimate_f0(&x, &F0Config::default()).unwrap();
        assert!(!t.f0.is_empty());
        for f in &t.f0 {
            assert!((f - 220.0).abs() <= 0.5, "{f}");
        }
    }

    #[test]
    fn noise_and_silence_are_unvoiced() {
        let t = estimate_f0(&noise(22050, 6), &F0Config::default()).unwrap();
        assert!(t.voiced_fraction() <= 0.1, "{}", t.voiced_fraction());
        let s = estimate_f0(
            &AudioBuffer::silence(11025, 22050).unwrap(),
            &F0Config::default(),
        )
        .unwrap();
        assert!(s.voicing.iter().all(|v| !v));
    }

    #[test]
    fn rmse_cases() {
        let a = tone(220.0, 0.5, 22050);
        assert_eq!(f0_rmse(&a, &a).unwrap(), Some(0.0));
        let b = tone(225.0, 0.5, 22050);
        let r = f0_rmse(&a, &b).unwrap().unwrap();
        assert!((r - 5.0).abs() <= 0.5, "{r}");
        assert_eq!(f0_rmse(&a, &noise(a.len(), 7)).unwrap(), None);
    }

    #[test]
    fn image_ratio() {
        let sr = 22050;
        let x = tone(1000.0, 1.0, sr);
        assert!(aliasing_energy(&x, 1000.0, &[10025.0]).unwrap() <= -60.0);
        // Zero-stuffing to twice the rate mirrors the tone around the old Nyquist.
        let mut z = vec![0.0; 2 * x.len()];
        for (i, v) in x.samples().iter().enumerate() {
            z[2 * i] = *v;
        }
        let z = AudioBuffer::new(z, 2 * sr).unwrap();
        let r = aliasing_energy(&z, 1000.0, &[sr as f64 - 1000.0]).unwrap();
        assert!(r.abs() <= 3.0, "{r}");
        assert!(aliasing_energy(&x, 1000.0, &[]).is_err());
    }

    #[test]
    fn csv_row_marks_undefined_pitch() {
        let r = MetricReport {
            mcd: 1.0,
            f0_rmse: None,
            lsd: LsdBands {
                full: 0.5,
                low: 0.25,
                mid: 0.5,
                high: 0.75,
            },
        };
        assert_eq!(
            MetricReport::CSV_HEADER.split(',').count(),
            r.csv_row("a.wav").split(',').count()
        );
        assert!(r.csv_row("a.wav").contains(",NaN,"));
    }
}
