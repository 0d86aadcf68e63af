//! Training objectives: real/imaginary spectral loss and its multi-resolution
//! mean, log-mel L1, least-squares adversarial terms, feature matching, and the
//! weighted generator / discriminator totals.
//!
//! The spectral losses also return their gradient with respect to the
//! generated waveform so the toy trainer can backpropagate without autodiff.
//!
//! The adversarial terms use the conventional least-squares roles: the
//! discriminator pushes real scores to 1 and fake scores to 0, the generator
//! pushes fake scores to 1.

use crate::error::{Error, Result};
use crate::signal::{
    AudioBuffer, ComplexSpectrogram, MelAnalyzer, MelConfig, StftConfig, StftPlan, MEL_LOG_FLOOR,
};

/// Per-term values of the real/imaginary loss at one resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiLossBreakdown {
    pub real_l1: f64,
    pub imag_l1: f64,
    pub magnitude_l1: f64,
    /// `None` when the reference spectrogram is all zero.
    pub spectral_convergence: Option<f64>,
    pub total: f64,
}

impl RiLossBreakdown {
    fn from_terms(real_l1: f64, imag_l1: f64, magnitude_l1: f64, sc: Option<f64>) -> Self {
        Self {
            real_l1,
            imag_l1,
            magnitude_l1,
            spectral_convergence: sc,
            total: real_l1 + imag_l1 + magnitude_l1 + sc.unwrap_or(0.0),
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Real/imaginary loss at a single STFT resolution.
#[derive(Clone, Debug)]
pub struct RiLoss {
    plan: StftPlan,
}

impl RiLoss {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        Ok(Self {
            plan: StftPlan::new(cfg)?,
        })
    }

    pub fn config(&self) -> &StftConfig {
        self.plan.config()
    }

    pub fn reference(&self, x: &[f64]) -> Result<ComplexSpectrogram> {
        self.plan.forward(x)
    }

    pub fn evaluate(&self, x: &[f64], xhat: &[f64]) -> Result<RiLossBreakdown> {
        check_lengths(x.len(), xhat.len())?;
        let s = self.plan.forward(x)?;
        Ok(self.terms(&s, &self.plan.forward(xhat)?, None))
    }

    /// Loss and `d total / d xhat`, with the reference spectrogram precomputed.
    pub fn evaluate_with_grad(
        &self,
        reference: &ComplexSpectrogram,
        xhat: &[f64],
    ) -> Result<(RiLossBreakdown, Vec<f64>)> {
        check_lengths(reference.signal_len, xhat.len())?;
        let shat = self.plan.forward(xhat)?;
        let cells = shat.real.len();
        let mut gr = vec![0.0; cells];
        let mut gi = vec![0.0; cells];
        let report = self.terms(reference, &shat, Some((&mut gr, &mut gi)));
        let grad = self.plan.backward(xhat.len(), &gr, &gi)?;
        Ok((report, grad))
    }

    fn terms(
        &self,
        s: &ComplexSpectrogram,
        shat: &ComplexSpectrogram,
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> RiLossBreakdown {
        let n = s.real.len() as f64;
        let (mut re, mut im, mut mag) = (0.0, 0.0, 0.0);
        let (mut ref_energy, mut diff_energy) = (0.0, 0.0);
        for i in 0..s.real.len() {
            let (r, j) = (s.real[i], s.imag[i]);
            let (rh, jh) = (shat.real[i], shat.imag[i]);
            re += (rh - r).abs();
            im += (jh - j).abs();
            mag += (rh.hypot(jh) - r.hypot(j)).abs();
            ref_energy += r * r + j * j;
            diff_energy += (rh - r) * (rh - r) + (jh - j) * (jh - j);
        }
        let sc = if ref_energy > 0.0 {
            Some((diff_energy / ref_energy).sqrt())
        } else {
            log::warn!(
                "silent reference: spectral convergence undefined, using the three L1 terms"
            );
            None
        };
        if let Some((gr, gi)) = grads {
            let sc_scale = match sc {
                Some(_) if diff_energy > 0.0 => 1.0 / (diff_energy.sqrt() * ref_energy.sqrt()),
                _ => 0.0,
            };
            for i in 0..s.real.len() {
                let (r, j) = (s.real[i], s.imag[i]);
                let (rh, jh) = (shat.real[i], shat.imag[i]);
                let mh = rh.hypot(jh);
                let dmag = sign(mh - r.hypot(j)) / n;
                let (mr, mi) = if mh > 0.0 {
                    (rh / mh, jh / mh)
                } else {
                    (0.0, 0.0)
                };
                gr[i] = sign(rh - r) / n + dmag * mr + sc_scale * (rh - r);
                gi[i] = sign(jh - j) / n + dmag * mi + sc_scale * (jh - j);
            }
        }
        RiLossBreakdown::from_terms(re / n, im / n, mag / n, sc)
    }
}

/// Real/imaginary loss of `xhat` against `x` at one resolution.
pub fn ri_loss(x: &AudioBuffer, xhat: &AudioBuffer, cfg: &StftConfig) -> Result<RiLossBreakdown> {
    RiLoss::new(*cfg)?.evaluate(x.samples(), xhat.samples())
}

/// The resolutions averaged by the multi-resolution loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiResConfig {
    pub resolutions: Vec<StftConfig>,
}

impl Default for MultiResConfig {
    /// Windows 2048/1024/512 with hops 240/120/50, FFT size equal to the window.
    fn default() -> Self {
        Self::from_windows(&[(2048, 240), (1024, 120), (512, 50)])
    }
}

impl MultiResConfig {
    pub fn from_windows(windows_hops: &[(usize, usize)]) -> Self {
        Self {
            resolutions: windows_hops
                .iter()
                .map(|&(w, h)| StftConfig::new(w, w, h))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(Error::InvalidConfig(
                "multi-resolution loss needs at least one resolution".into(),
            ));
        }
        for (i, a) in self.resolutions.iter().enumerate() {
            a.validate()?;
            if self.resolutions[..i]
                .iter()
                .any(|b| b.window_size == a.window_size)
            {
                return Err(Error::InvalidConfig(format!(
                    "duplicate window size {}",
                    a.window_size
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrRiReport {
    pub total: f64,
    pub per_resolution: Vec<RiLossBreakdown>,
}

#[derive(Clone, Debug)]
pub struct MrRiLoss {
    losses: Vec<RiLoss>,
}

impl MrRiLoss {
    pub fn new(cfg: &MultiResConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            losses: cfg
                .resolutions
                .iter()
                .map(|c| RiLoss::new(*c))
                .collect::<Result<_>>()?,
        })
    }

    pub fn resolutions(&self) -> &[RiLoss] {
        &self.losses
    }

    pub fn evaluate(&self, x: &[f64], xhat: &[f64]) -> Result<MrRiReport> {
        let per_resolution = self
            .losses
            .iter()
            .map(|l| l.evaluate(x, xhat))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::report(per_resolution))
    }

    fn report(per_resolution: Vec<RiLossBreakdown>) -> MrRiReport {
        let total =
            per_resolution.iter().map(|b| b.total).sum::<f64>() / per_resolution.len() as f64;
        MrRiReport {
            total,
            per_resolution,
        }
    }

    pub fn references(&self, x: &[f64]) -> Result<Vec<ComplexSpectrogram>> {
        self.losses.iter().map(|l| l.reference(x)).collect()
    }

    pub fn evaluate_with_grad(
        &self,
        references: &[ComplexSpectrogram],
        xhat: &[f64],
    ) -> Result<(MrRiReport, Vec<f64>)> {
        let m = self.losses.len() as f64;
        let mut grad = vec![0.0; xhat.len()];
        let mut per = Vec::with_capacity(self.losses.len());
        for (loss, reference) in self.losses.iter().zip(references) {
            let (b, g) = loss.evaluate_with_grad(reference, xhat)?;
            grad.iter_mut().zip(g).for_each(|(a, v)| *a += v / m);
            per.push(b);
        }
        Ok((Self::report(per), grad))
    }
}

pub fn mr_ri_loss(x: &AudioBuffer, xhat: &AudioBuffer, mrc: &MultiResConfig) -> Result<MrRiReport> {
    check_lengths(x.len(), xhat.len())?;
    MrRiLoss::new(mrc)?.evaluate(x.samples(), xhat.samples())
}

/// Mean absolute log-mel difference.
#[derive(Clone, Debug)]
pub struct MelLoss {
    analyzer: MelAnalyzer,
}

impl MelLoss {
    pub fn new(cfg: &MelConfig, sample_rate: u32) -> Result<Self> {
        Ok(Self {
            analyzer: MelAnalyzer::new(cfg, sample_rate)?,
        })
    }

    pub fn analyzer(&self) -> &MelAnalyzer {
        &self.analyzer
    }

    pub fn evaluate(&self, x: &[f64], xhat: &[f64]) -> Result<f64> {
        check_lengths(x.len(), xhat.len())?;
        let a = self.analyzer.log_mel(x)?;
        let b = self.analyzer.log_mel(xhat)?;
        Ok(a.values
            .iter()
            .zip(&b.values)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
            / a.values.len() as f64)
    }

    /// Loss and gradient w.r.t. `xhat`, given the reference log-mel values.
    pub fn evaluate_with_grad(
        &self,
        reference_log_mel: &[f64],
        xhat: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let (spec, energies, mel) = self.analyzer.analyze(xhat)?;
        if mel.values.len() != reference_log_mel.len() {
            return Err(Error::ShapeMismatch(
                "reference log-mel has a different shape".into(),
            ));
        }
        let n = mel.values.len() as f64;
        let fb = &self.analyzer.filterbank;
        let bins = fb.bins;
        let mut loss = 0.0;
        let mut gr = vec![0.0; spec.real.len()];
        let mut gi = vec![0.0; spec.imag.len()];
        let mut dmag = vec![0.0; bins];
        for t in 0..mel.frames {
            dmag.iter_mut().for_each(|v| *v = 0.0);
            for m in 0..fb.n_mels {
                let idx = t * fb.n_mels + m;
                let d = mel.values[idx] - reference_log_mel[idx];
                loss += d.abs();
                let e = energies[idx];
                if e > MEL_LOG_FLOOR && d != 0.0 {
                    let de = sign(d) / n / e;
                    for (acc, w) in dmag.iter_mut().zip(fb.row(m)) {
                        *acc += de * w;
                    }
                }
            }
            for b in 0..bins {
                let i = t * bins + b;
                let (r, j) = (spec.real[i], spec.imag[i]);
                let a = r.hypot(j);
                if a > 0.0 {
                    gr[i] = dmag[b] * r / a;
                    gi[i] = dmag[b] * j / a;
                }
            }
        }
        let grad = self.analyzer.plan.backward(xhat.len(), &gr, &gi)?;
        Ok((loss / n, grad))
    }
}

/// Log-mel L1 with the default 80-band, 1024/1024/256 analysis.
pub fn mel_loss(x: &AudioBuffer, xhat: &AudioBuffer) -> Result<f64> {
    check_lengths(x.len(), xhat.len())?;
    MelLoss::new(&MelConfig::default(), x.sample_rate())?.evaluate(x.samples(), xhat.samples())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversarialLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

fn mean<S: AsRef<[f64]>>(s: &S, f: impl Fn(f64) -> f64) -> f64 {
    let s = s.as_ref();
    s.iter().map(|&v| f(v)).sum::<f64>() / s.len() as f64
}

fn check_scores<S: AsRef<[f64]>>(real: &[S], fake: &[S]) -> Result<()> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(Error::Empty("discriminator score sets"));
    }
    if real.iter().chain(fake).any(|s| s.as_ref().is_empty()) {
        return Err(Error::Empty("discriminator score map"));
    }
    Ok(())
}

/// Least-squares GAN losses summed over discriminators; each score map is mean-reduced.
pub fn adversarial_losses<S: AsRef<[f64]>>(
    real_scores: &[S],
    fake_scores: &[S],
) -> Result<AdversarialLosses> {
    check_scores(real_scores, fake_scores)?;
    let d_loss = real_scores
        .iter()
        .zip(fake_scores)
        .map(|(r, f)| mean(r, |v| (1.0 - v) * (1.0 - v)) + mean(f, |v| v * v))
        .sum();
    let g_loss = fake_scores
        .iter()
        .map(|f| mean(f, |v| (1.0 - v) * (1.0 - v)))
        .sum();
    Ok(AdversarialLosses { d_loss, g_loss })
}

/// Gradients of `d_loss` w.r.t. the real and fake score maps.
pub fn discriminator_score_grads<S: AsRef<[f64]>>(
    real_scores: &[S],
    fake_scores: &[S],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_scores(real_scores, fake_scores)?;
    let real = real_scores
        .iter()
        .map(|r| {
            let n = r.as_ref().len() as f64;
            r.as_ref().iter().map(|v| -2.0 * (1.0 - v) / n).collect()
        })
        .collect();
    let fake = fake_scores
        .iter()
        .map(|f| {
            let n = f.as_ref().len() as f64;
            f.as_ref().iter().map(|v| 2.0 * v / n).collect()
        })
        .collect();
    Ok((real, fake))
}

/// Gradient of `g_loss` w.r.t. the fake score maps.
pub fn generator_score_grads<S: AsRef<[f64]>>(fake_scores: &[S]) -> Vec<Vec<f64>> {
    fake_scores
        .iter()
        .map(|f| {
            let n = f.as_ref().len() as f64;
            f.as_ref().iter().map(|v| -2.0 * (1.0 - v) / n).collect()
        })
        .collect()
}

/// Feature maps of one discriminator, ordered by layer.
pub type FeatureStack = Vec<Vec<f64>>;

/// Sum over discriminators of the mean over layers of the mean absolute difference.
pub fn feature_matching_loss(
    real_feats: &[FeatureStack],
    fake_feats: &[FeatureStack],
) -> Result<f64> {
    Ok(feature_matching_with_grad(real_feats, fake_feats)?.0)
}

/// Feature-matching loss and its gradient w.r.t. the fake feature maps.
pub fn feature_matching_with_grad(
    real_feats: &[FeatureStack],
    fake_feats: &[FeatureStack],
) -> Result<(f64, Vec<FeatureStack>)> {
    if real_feats.len() != fake_feats.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} discriminators",
            real_feats.len(),
            fake_feats.len()
        )));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(fake_feats.len());
    for (rs, fs) in real_feats.iter().zip(fake_feats) {
        if rs.len() != fs.len() || rs.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {} layers",
                rs.len(),
                fs.len()
            )));
        }
        let layers = rs.len() as f64;
        let mut disc = 0.0;
        let mut g = Vec::with_capacity(fs.len());
        for (r, f) in rs.iter().zip(fs) {
            if r.len() != f.len() || r.is_empty() {
                return Err(Error::ShapeMismatch(format!(
                    "feature map {} vs {}",
                    r.len(),
                    f.len()
                )));
            }
            let n = r.len() as f64;
            disc += r.iter().zip(f).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
            g.push(
                r.iter()
                    .zip(f)
                    .map(|(a, b)| sign(b - a) / n / layers)
                    .collect(),
            );
        }
        total += disc / layers;
        grads.push(g);
    }
    Ok((total, grads))
}

/// Balancing coefficients of the generator objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_g: f64,
    pub lambda_ri: f64,
    pub lambda_mel: f64,
    pub lambda_fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_g: 1.0,
            lambda_ri: 1.0,
            lambda_mel: 45.0,
            lambda_fm: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_g", self.lambda_g),
            ("lambda_ri", self.lambda_ri),
            ("lambda_mel", self.lambda_mel),
            ("lambda_fm", self.lambda_fm),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

pub fn total_generator_loss(
    adv_g: f64,
    mr_ri: f64,
    mel: f64,
    fm: f64,
    w: &LossWeights,
) -> Result<f64> {
    w.validate()?;
    Ok(w.lambda_g * adv_g + w.lambda_ri * mr_ri + w.lambda_mel * mel + w.lambda_fm * fm)
}

pub fn total_discriminator_loss(adv_d: f64) -> f64 {
    adv_d
}

/// Every term of one generator evaluation with the weights that combined them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub adv_g: f64,
    pub mr_ri: f64,
    pub mel: f64,
    pub fm: f64,
    pub weights: LossWeights,
    pub total: f64,
}

impl LossReport {
    pub fn new(adv_g: f64, mr_ri: f64, mel: f64, fm: f64, weights: LossWeights) -> Result<Self> {
        let total = total_generator_loss(adv_g, mr_ri, mel, fm, &weights)?;
        Ok(Self {
            adv_g,
            mr_ri,
            mel,
            fm,
            weights,
            total,
        })
    }
}
