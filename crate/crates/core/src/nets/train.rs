use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::discriminator::{DiscGrad, DiscriminatorBank, DiscriminatorConfig};
use super::generator::{GeneratorConfig, ToyGenerator};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_losses, discriminator_score_grads, feature_matching_with_grad,
    generator_score_grads, LossWeights, MelLoss, MrRiLoss, MultiResConfig,
};
use crate::metrics::lsd_bands_with;
use crate::signal::{format_sig9, ComplexSpectrogram, MelConfig, StftConfig, StftPlan};
use crate::upsample::TwinMode;

/// Synthetic signals: sums of 1..=`max_components` linear chirps with random phase and amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub sample_rate: u32,
    pub segment_len: usize,
    /// Extra samples synthesised on each side of a segment and seen only by the generator input.
    pub context: usize,
    pub min_freq: f64,
    /// Kept below the Nyquist frequency of the decimated input.
    pub max_freq: f64,
    pub max_components: usize,
    pub amplitude: (f64, f64),
    /// End frequency is the start frequency times a factor drawn from this range.
    pub chirp_ratio: (f64, f64),
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            segment_len: 4096,
            context: 512,
            min_freq: 60.0,
            max_freq: 300.0,
            max_components: 5,
            amplitude: (0.05, 0.3),
            chirp_ratio: (0.8, 1.25),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self, factor: usize) -> Result<()> {
        let low_nyquist = self.sample_rate as f64 / (2 * factor) as f64;
        if !(self.min_freq > 0.0 && self.min_freq < self.max_freq && self.max_freq < low_nyquist) {
            return Err(Error::InvalidConfig(format!(
                "corpus band {}..{} Hz must sit below the input Nyquist {low_nyquist} Hz",
                self.min_freq, self.max_freq
            )));
        }
        if !self.segment_len.is_multiple_of(factor)
            || self.segment_len == 0
            || !self.context.is_multiple_of(factor)
        {
            return Err(Error::InvalidConfig(format!(
                "segment length and context must be multiples of {factor}"
            )));
        }
        if self.max_components == 0
            || !(0.0 < self.amplitude.0 && self.amplitude.0 <= self.amplitude.1)
        {
            return Err(Error::InvalidConfig(
                "corpus needs components and positive amplitudes".into(),
            ));
        }
        Ok(())
    }

    /// Draws one signal of `segment_len + 2 * context` samples.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.segment_len + 2 * self.context;
        let sr = self.sample_rate as f64;
        let dur = n as f64 / sr;
        let mut x = vec![0.0; n];
        for _ in 0..rng.random_range(1..=self.max_components) {
            let f0 = rng.random_range(self.min_freq..self.max_freq);
            let f1 =
                (f0 * rng.random_range(self.chirp_ratio.0..self.chirp_ratio.1)).min(self.max_freq);
            let amp = rng.random_range(self.amplitude.0..=self.amplitude.1);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let rate = (f1 - f0) / dur;
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / sr;
                *v += amp * (phase + std::f64::consts::TAU * (f0 * t + 0.5 * rate * t * t)).sin();
            }
        }
        x
    }
}

/// A training pair: the target segment and the decimated input with its context.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub target: Vec<f64>,
    pub input: Vec<f64>,
}

impl Example {
    pub fn new(corpus: &CorpusConfig, factor: usize, rng: &mut ChaCha8Rng) -> Self {
        let x = corpus.sample(rng);
        let input = decimate(&x, factor);
        let c = corpus.context;
        Self {
            target: x[c..c + corpus.segment_len].to_vec(),
            input,
        }
    }
}

/// Keeps every `factor`-th sample.
pub fn decimate(x: &[f64], factor: usize) -> Vec<f64> {
    x.iter().step_by(factor).copied().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Mel and multi-resolution real/imaginary losses only.
    Regression,
    /// Full objective with the six discriminators.
    Adversarial,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
    pub held_out: usize,
    pub corpus: CorpusConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub use_mr_ri: bool,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Regression,
            steps: 2000,
            batch_size: 8,
            lr: 1e-3,
            betas: (0.8, 0.99),
            adam_eps: 1e-8,
            seed: 0,
            held_out: 8,
            corpus: CorpusConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            use_mr_ri: true,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.held_out == 0 {
            return Err(Error::InvalidConfig(
                "steps, batch size and held-out count must be positive".into(),
            ));
        }
        self.weights.validate()?;
        self.corpus.validate(self.generator.upsampling_factor())
    }
}

/// Loss terms of one optimisation step, averaged over the batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub total: f64,
    pub mel: f64,
    pub mr_ri: f64,
    pub adv_g: f64,
    pub fm: f64,
    pub adv_d: f64,
}

/// Held-out averages of the reconstruction metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeldOutMetrics {
    pub mel: f64,
    pub mr_ri: f64,
    pub lsd: f64,
    pub lsd_low: f64,
    pub lsd_mid: f64,
    pub lsd_high: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub steps: Vec<StepRecord>,
    pub initial: HeldOutMetrics,
    pub final_metrics: HeldOutMetrics,
    pub upsampler: TwinMode,
    pub used_mr_ri: bool,
    /// Trained generator parameters keyed by layer id.
    pub params: Vec<(String, Tensor)>,
}

impl TrainingReport {
    pub const CSV_HEADER: &'static str = "step,total,mel,mr_ri,adv_g,fm,adv_d";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.steps {
            let f = format_sig9;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.step,
                f(r.total),
                f(r.mel),
                f(r.mr_ri),
                f(r.adv_g),
                f(r.fm),
                f(r.adv_d)
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Mean training loss over the `window` steps ending at `step` (1-based count).
    pub fn moving_average(&self, step: usize, window: usize) -> f64 {
        let end = step.min(self.steps.len());
        let start = end.saturating_sub(window);
        let s = &self.steps[start..end];
        s.iter().map(|r| r.total).sum::<f64>() / s.len() as f64
    }
}

/// Target-side quantities reused across a training example.
struct Targets {
    log_mel: Vec<f64>,
    ri: Vec<ComplexSpectrogram>,
}

struct Objective {
    mel: MelLoss,
    mr_ri: MrRiLoss,
    lsd_plan: StftPlan,
    weights: LossWeights,
    use_mr_ri: bool,
}

impl Objective {
    fn new(cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            mel: MelLoss::new(&MelConfig::default(), cfg.corpus.sample_rate)?,
            mr_ri: MrRiLoss::new(&MultiResConfig::default())?,
            lsd_plan: StftPlan::new(StftConfig::analysis())?,
            weights: cfg.weights,
            use_mr_ri: cfg.use_mr_ri,
        })
    }

    fn targets(&self, x: &[f64]) -> Result<Targets> {
        Ok(Targets {
            log_mel: self.mel.analyzer().log_mel(x)?.values,
            ri: if self.use_mr_ri {
                self.mr_ri.references(x)?
            } else {
                vec![]
            },
        })
    }

    /// Weighted reconstruction loss, its parts and its gradient w.r.t. `y`.
    fn reconstruction(&self, t: &Targets, y: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        let (mel, gmel) = self.mel.evaluate_with_grad(&t.log_mel, y)?;
        let mut grad: Vec<f64> = gmel.iter().map(|g| self.weights.lambda_mel * g).collect();
        let mut mr_ri = 0.0;
        if self.use_mr_ri {
            let (rep, gri) = self.mr_ri.evaluate_with_grad(&t.ri, y)?;
            mr_ri = rep.total;
            grad.iter_mut()
                .zip(gri)
                .for_each(|(a, b)| *a += self.weights.lambda_ri * b);
        }
        Ok((mel, mr_ri, grad))
    }

    fn held_out(
        &self,
        gen: &ToyGenerator,
        set: &[Example],
        context: usize,
    ) -> Result<HeldOutMetrics> {
        let mut m = HeldOutMetrics::default();
        for ex in set {
            let x = &ex.target;
            let y_full = gen.forward(&ex.input)?;
            let y = &y_full[context..context + x.len()];
            m.mel += self.mel.evaluate(x, y)?;
            m.mr_ri += self.mr_ri.evaluate(x, y)?.total;
            let l = lsd_bands_with(x, y, &self.lsd_plan)?;
            m.lsd += l.full;
            m.lsd_low += l.low;
            m.lsd_mid += l.mid;
            m.lsd_high += l.high;
        }
        let n = set.len() as f64;
        Ok(HeldOutMetrics {
            mel: m.mel / n,
            mr_ri: m.mr_ri / n,
            lsd: m.lsd / n,
            lsd_low: m.lsd_low / n,
            lsd_mid: m.lsd_mid / n,
            lsd_high: m.lsd_high / n,
        })
    }
}

fn check_step(step: usize, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { step })
    }
}

fn grads_finite(params: &[&mut Tensor]) -> bool {
    params
        .iter()
        .all(|p| p.grad().iter().all(|g| g.is_finite()))
}

/// Trains the toy generator to undo 16x decimation of the synthetic corpus.
pub fn train_toy(cfg: &TrainConfig) -> Result<TrainingReport> {
    train_toy_with_progress(cfg, |_| {})
}

/// As [`train_toy`], calling `progress` after every step.
pub fn train_toy_with_progress(
    cfg: &TrainConfig,
    mut progress: impl FnMut(&StepRecord),
) -> Result<TrainingReport> {
    cfg.validate()?;
    let factor = cfg.generator.upsampling_factor();
    let objective = Objective::new(cfg)?;
    let mut gen = ToyGenerator::new(GeneratorConfig {
        seed: cfg.seed,
        ..cfg.generator.clone()
    })?;
    let mut g_opt = AdamState::new(cfg.lr, cfg.betas.0, cfg.betas.1, cfg.adam_eps)?;
    let mut bank = match cfg.mode {
        TrainMode::Adversarial => Some(DiscriminatorBank::new(DiscriminatorConfig {
            seed: cfg.seed,
            ..cfg.discriminator.clone()
        })?),
        TrainMode::Regression => None,
    };
    let mut d_opt = AdamState::new(cfg.lr, cfg.betas.0, cfg.betas.1, cfg.adam_eps)?;

    let mut held_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_f5e7);
    let held: Vec<Example> = (0..cfg.held_out)
        .map(|_| Example::new(&cfg.corpus, factor, &mut held_rng))
        .collect();
    let ctx = cfg.corpus.context;
    let seg = cfg.corpus.segment_len;
    let crop = |y: &[f64]| y[ctx..ctx + seg].to_vec();
    let embed = |g: &[f64], full: usize| {
        let mut out = vec![0.0; full];
        out[ctx..ctx + seg].copy_from_slice(g);
        out
    };
    let initial = objective.held_out(&gen, &held, ctx)?;
    log::info!("initial held-out mel loss {:.4}", initial.mel);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.steps);
    let b = cfg.batch_size as f64;
    for step in 0..cfg.steps {
        let batch: Vec<Example> = (0..cfg.batch_size)
            .map(|_| Example::new(&cfg.corpus, factor, &mut rng))
            .collect();
        let mut rec = StepRecord {
            step,
            ..Default::default()
        };
        gen.zero_grad();
        match bank.as_mut() {
            None => {
                for ex in &batch {
                    let t = objective.targets(&ex.target)?;
                    let trace = gen.forward_trace(&ex.input)?;
                    let (mel, mr_ri, grad) = objective.reconstruction(&t, &crop(trace.output()))?;
                    check_step(step, &[mel, mr_ri])?;
                    rec.mel += mel / b;
                    rec.mr_ri += mr_ri / b;
                    let grad: Vec<f64> = grad.iter().map(|g| g / b).collect();
                    gen.backward(&trace, &embed(&grad, trace.output().len()))?;
                }
            }
            Some(bank) => {
                let traces = batch
                    .iter()
                    .map(|ex| gen.forward_trace(&ex.input))
                    .collect::<Result<Vec<_>>>()?;
                let outputs: Vec<Vec<f64>> = traces.iter().map(|t| crop(t.output())).collect();
                // Discriminator update on real and detached generated signals.
                bank.zero_grad();
                for (ex, y) in batch.iter().zip(&outputs) {
                    let (real, real_trace) = bank.forward(&ex.target)?;
                    let (fake, fake_trace) = bank.forward(y)?;
                    let rs: Vec<&[f64]> = real.iter().map(|o| o.score_map.as_slice()).collect();
                    let fs: Vec<&[f64]> = fake.iter().map(|o| o.score_map.as_slice()).collect();
                    let adv = adversarial_losses(&rs, &fs)?;
                    check_step(step, &[adv.d_loss])?;
                    rec.adv_d += adv.d_loss / b;
                    let (gr, gf) = discriminator_score_grads(&rs, &fs)?;
                    let wrap = |g: Vec<Vec<f64>>, outs: &[super::DiscOutput]| -> Vec<DiscGrad> {
                        g.into_iter()
                            .zip(outs)
                            .map(|(s, o)| DiscGrad {
                                score: s.iter().map(|v| v / b).collect(),
                                features: o.features.iter().map(|f| vec![0.0; f.len()]).collect(),
                            })
                            .collect()
                    };
                    bank.backward(&real_trace, &wrap(gr, &real))?;
                    bank.backward(&fake_trace, &wrap(gf, &fake))?;
                }
                let mut dp = bank.params_mut();
                if !grads_finite(&dp) {
                    return Err(Error::Diverged { step });
                }
                adam_step(&mut dp, &mut d_opt)?;

                // Generator update through the refreshed discriminators.
                for ((ex, trace), y) in batch.iter().zip(&traces).zip(&outputs) {
                    let t = objective.targets(&ex.target)?;
                    let (mel, mr_ri, mut grad) = objective.reconstruction(&t, y)?;
                    let (real, _) = bank.forward(&ex.target)?;
                    let (fake, fake_trace) = bank.forward(y)?;
                    let fs: Vec<&[f64]> = fake.iter().map(|o| o.score_map.as_slice()).collect();
                    let rs: Vec<&[f64]> = real.iter().map(|o| o.score_map.as_slice()).collect();
                    let adv = adversarial_losses(&rs, &fs)?;
                    let rf: Vec<Vec<Vec<f64>>> = real.iter().map(|o| o.features.clone()).collect();
                    let ff: Vec<Vec<Vec<f64>>> = fake.iter().map(|o| o.features.clone()).collect();
                    let (fm, gfm) = feature_matching_with_grad(&rf, &ff)?;
                    check_step(step, &[mel, mr_ri, adv.g_loss, fm])?;
                    rec.mel += mel / b;
                    rec.mr_ri += mr_ri / b;
                    rec.adv_g += adv.g_loss / b;
                    rec.fm += fm / b;
                    let w = &objective.weights;
                    let grads: Vec<DiscGrad> = generator_score_grads(&fs)
                        .into_iter()
                        .zip(gfm)
                        .map(|(s, f)| DiscGrad {
                            score: s.iter().map(|v| w.lambda_g * v).collect(),
                            features: f
                                .into_iter()
                                .map(|l| l.iter().map(|v| w.lambda_fm * v).collect())
                                .collect(),
                        })
                        .collect();
                    let gy = bank.backward(&fake_trace, &grads)?;
                    grad.iter_mut().zip(gy).for_each(|(a, v)| *a += v);
                    let grad: Vec<f64> = grad.iter().map(|g| g / b).collect();
                    gen.backward(trace, &embed(&grad, trace.output().len()))?;
                }
                bank.zero_grad();
            }
        }
        let w = &objective.weights;
        rec.total = w.lambda_g * rec.adv_g
            + w.lambda_mel * rec.mel
            + w.lambda_fm * rec.fm
            + if cfg.use_mr_ri {
                w.lambda_ri * rec.mr_ri
            } else {
                0.0
            };
        check_step(step, &[rec.total])?;
        let mut gp = gen.params_mut();
        if !grads_finite(&gp) {
            return Err(Error::Diverged { step });
        }
        adam_step(&mut gp, &mut g_opt)?;
        progress(&rec);
        records.push(rec);
    }
    let final_metrics = objective.held_out(&gen, &held, ctx)?;
    log::info!("final held-out mel loss {:.4}", final_metrics.mel);
    Ok(TrainingReport {
        steps: records,
        initial,
        final_metrics,
        upsampler: cfg.generator.twin_mode,
        used_mr_ri: cfg.use_mr_ri,
        params: gen
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect(),
    })
}

/// Which component an ablation run removes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    /// Plain transposed convolutions instead of twin deconvolution.
    TwinDeconv,
    /// No multi-resolution real/imaginary term.
    MrRi,
}

impl Ablation {
    pub fn apply(self, cfg: &TrainConfig) -> TrainConfig {
        let mut c = cfg.clone();
        match self {
            Ablation::TwinDeconv => c.generator.twin_mode = TwinMode::None,
            Ablation::MrRi => c.use_mr_ri = false,
        }
        c
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::TwinDeconv => "w/o twin deconv",
            Ablation::MrRi => "w/o MR-RI loss",
        }
    }
}

/// Full and ablated runs with identical seeds and steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<(String, HeldOutMetrics)>,
}

impl AblationTable {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<18} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "variant", "mel", "mr_ri", "lsd", "lsd_L", "lsd_M", "lsd_H"
        );
        for (label, m) in &self.rows {
            s += &format!(
                "{:<18} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                label, m.mel, m.mr_ri, m.lsd, m.lsd_low, m.lsd_mid, m.lsd_high
            );
        }
        s
    }
}

pub fn ablation_table(
    full: &TrainingReport,
    ablation: Ablation,
    ablated: &TrainingReport,
) -> AblationTable {
    AblationTable {
        rows: vec![
            ("full".to_string(), full.final_metrics),
            (ablation.label().to_string(), ablated.final_metrics),
        ],
    }
}
