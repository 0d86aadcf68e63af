//! Subcommands of the `fagan` binary.
//!
//! Every command loads a [`RunConfig`] (`--config`, else `FAGAN_CONFIG`, else
//! defaults), echoes the effective configuration into `--out-dir` and writes
//! its artifacts there. Errors map to exit codes through [`Error::exit_code`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{
    add_noise, add_noise_random, harmonic_shift, lossy_compress_proxy, ExternalCodec,
    DEFAULT_COMPRESS_BITS, DEFAULT_COMPRESS_CUTOFF_HZ,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::losses::{mr_ri_loss, ri_loss, MultiResConfig};
use crate::metrics::{aliasing_energy, evaluate, MetricReport};
use crate::nets::{
    ablation_table, grad_check, save_checkpoint, train_toy_with_progress, Ablation,
    GradCheckReport, TrainingReport, DEFAULT_EPS, GRAD_TOLERANCE,
};
use crate::signal::{
    load_wav, mel_spectrogram, save_wav, stft, write_grid_csv_file, AudioBuffer, StftConfig,
    WavFormat,
};
use crate::subband::{pqmf_analysis, pqmf_synthesis, SubbandSignals};
use crate::upsample::{
    apply_fir, crop_centered, design_lowpass, transposed_conv1d, twin_deconv, DeconvSpec, TwinMode,
};

#[derive(Debug, Parser)]
#[command(
    name = "fagan",
    version,
    about = "Anti-aliased vocoder numerics: analysis, losses, metrics and toy training"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key=value configuration file; falls back to $FAGAN_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "fagan-out")]
    pub out_dir: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Complex STFT of a WAV file as real and imaginary CSV grids.
    Stft(InputArgs),
    /// Log-mel spectrogram of a WAV file as CSV.
    Mel(InputArgs),
    /// Log-magnitude spectrogram as a grayscale PGM image.
    SpectrogramImage {
        #[command(flatten)]
        input: InputArgs,
        /// Dynamic range mapped onto the 256 gray levels.
        #[arg(long, default_value_t = 80.0)]
        db_range: f64,
    },
    /// MCD, F0 RMSE and LSD between two files or two directories.
    Metrics(PairArgs),
    /// Spectral loss values.
    Loss {
        #[command(subcommand)]
        which: LossCommand,
    },
    /// PQMF sub-band split and merge.
    Pqmf {
        #[command(subcommand)]
        which: PqmfCommand,
    },
    /// Training-data augmentations.
    Augment {
        #[command(subcommand)]
        which: AugmentCommand,
    },
    /// Plain versus twin upsampling of test tones, with image-energy table.
    UpsampleDemo {
        /// Tone frequency in Hz; repeat for several tones.
        #[arg(long = "tone", default_values_t = vec![500.0, 1000.0, 2000.0])]
        tones: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        stride: usize,
    },
    /// Toy regression or adversarial training, optionally paired with an ablation.
    TrainToy {
        #[arg(long, value_enum)]
        ablate: Option<AblateArg>,
        /// Overrides train.steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Finite-difference check of every analytic gradient.
    GradCheck {
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input WAV file.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Reference WAV (or directory).
    #[arg(long = "ref", alias = "a")]
    pub reference: PathBuf,
    /// Generated WAV (or directory).
    #[arg(long = "gen", alias = "b")]
    pub generated: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum LossCommand {
    /// Real/imaginary loss breakdown at the configured STFT plus the multi-resolution total.
    Ri(PairArgs),
}

#[derive(Debug, Subcommand)]
pub enum PqmfCommand {
    /// Writes one float WAV per band plus `bands.txt`.
    Split(InputArgs),
    /// Rebuilds the full-band signal from a split directory.
    Merge {
        /// Directory written by `pqmf split`.
        #[arg(long)]
        input_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum AugmentCommand {
    /// Additive Gaussian noise at a given or random SNR.
    Noise {
        #[command(flatten)]
        input: InputArgs,
        /// Target SNR in dB; drawn from [28, 40] when omitted.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Resampling pitch shift.
    Pitch {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        ratio: f64,
    },
    /// Low-pass plus mu-law proxy, or an external codec command.
    Codec {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = DEFAULT_COMPRESS_CUTOFF_HZ)]
        cutoff: f64,
        #[arg(long, default_value_t = DEFAULT_COMPRESS_BITS)]
        bits: u32,
        /// Shell command with {input} and {output} placeholders; replaces the proxy.
        #[arg(long)]
        command: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblateArg {
    Tdconv,
    Mrri,
}

impl From<AblateArg> for Ablation {
    fn from(a: AblateArg) -> Self {
        match a {
            AblateArg::Tdconv => Ablation::TwinDeconv,
            AblateArg::Mrri => Ablation::MrRi,
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs one parsed command line; returns the text printed on stdout.
pub fn run(cli: Cli) -> Result<String> {
    let mut cfg = RunConfig::resolve(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    let out = &cli.global.out_dir;
    cfg.echo_to(out)?;
    match cli.command {
        Command::Stft(a) => cmd_stft(&cfg, &a.input, out),
        Command::Mel(a) => cmd_mel(&cfg, &a.input, out),
        Command::SpectrogramImage { input, db_range } => {
            cmd_image(&cfg, &input.input, db_range, out)
        }
        Command::Metrics(p) => cmd_metrics(&p.reference, &p.generated, out),
        Command::Loss {
            which: LossCommand::Ri(p),
        } => cmd_loss_ri(&cfg, &p.reference, &p.generated, out),
        Command::Pqmf {
            which: PqmfCommand::Split(a),
        } => cmd_pqmf_split(&cfg, &a.input, out),
        Command::Pqmf {
            which: PqmfCommand::Merge { input_dir },
        } => cmd_pqmf_merge(&cfg, &input_dir, out),
        Command::Augment { which } => cmd_augment(&cfg, which, out),
        Command::UpsampleDemo { tones, stride } => cmd_upsample_demo(&cfg, &tones, stride, out),
        Command::TrainToy { ablate, steps } => {
            cmd_train(&cfg, ablate.map(Ablation::from), steps, out)
        }
        Command::GradCheck { eps } => cmd_grad_check(&cfg, eps),
    }
}

fn cmd_stft(cfg: &RunConfig, input: &Path, out: &Path) -> Result<String> {
    let x = load_wav(input)?;
    let spec = stft(&x, &cfg.stft)?;
    let name = stem(input);
    let real = out.join(format!("{name}.stft_real.csv"));
    let imag = out.join(format!("{name}.stft_imag.csv"));
    write_grid_csv_file(&real, spec.frames, spec.bins, |t, k| {
        spec.real[t * spec.bins + k]
    })?;
    write_grid_csv_file(&imag, spec.frames, spec.bins, |t, k| {
        spec.imag[t * spec.bins + k]
    })?;
    Ok(format!(
        "{} frames x {} bins -> {}, {}\n",
        spec.frames,
        spec.bins,
        real.display(),
        imag.display()
    ))
}

fn cmd_mel(cfg: &RunConfig, input: &Path, out: &Path) -> Result<String> {
    let x = load_wav(input)?;
    let mel = mel_spectrogram(&x, &cfg.mel_config())?;
    let path = out.join(format!("{}.mel.csv", stem(input)));
    write_grid_csv_file(&path, mel.frames, mel.n_mels, |t, m| mel.at(t, m))?;
    Ok(format!(
        "{} frames x {} mels -> {}\n",
        mel.frames,
        mel.n_mels,
        path.display()
    ))
}

/// Binary PGM of the log-magnitude spectrogram: one column per frame, low frequencies at the bottom.
pub fn spectrogram_pgm(x: &AudioBuffer, cfg: &StftConfig, db_range: f64) -> Result<Vec<u8>> {
    if !(db_range.is_finite() && db_range > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "dB range must be positive, got {db_range}"
        )));
    }
    let spec = stft(x, cfg)?;
    let db: Vec<f64> = spec
        .magnitude()
        .iter()
        .map(|m| 20.0 * m.max(1e-12).log10())
        .collect();
    let top = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (w, h) = (spec.frames, spec.bins);
    let mut img = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in 0..h {
        let k = h - 1 - row;
        for t in 0..w {
            let v = ((db[t * h + k] - (top - db_range)) / db_range).clamp(0.0, 1.0);
            img.push((v * 255.0).round() as u8);
        }
    }
    Ok(img)
}

fn cmd_image(cfg: &RunConfig, input: &Path, db_range: f64, out: &Path) -> Result<String> {
    let x = load_wav(input)?;
    let img = spectrogram_pgm(&x, &cfg.stft, db_range)?;
    let path = out.join(format!("{}.pgm", stem(input)));
    std::fs::write(&path, img)?;
    Ok(format!("wrote {}\n", path.display()))
}

fn wav_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if path.is_file() && is_wav {
            map.insert(
                path.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                path,
            );
        }
    }
    Ok(map)
}

/// Metric rows for a file pair or for same-named files in two directories, sorted by name.
pub fn metric_rows(
    reference: &Path,
    generated: &Path,
) -> Result<(Vec<(String, MetricReport)>, Vec<String>)> {
    if reference.is_dir() && generated.is_dir() {
        let refs = wav_files(reference)?;
        let gens = wav_files(generated)?;
        let mut unmatched: Vec<String> = refs
            .keys()
            .filter(|k| !gens.contains_key(*k))
            .chain(gens.keys().filter(|k| !refs.contains_key(*k)))
            .cloned()
            .collect();
        unmatched.sort();
        let mut rows = Vec::new();
        for (name, rp) in &refs {
            if let Some(gp) = gens.get(name) {
                rows.push((name.clone(), evaluate(&load_wav(rp)?, &load_wav(gp)?)?));
            }
        }
        Ok((rows, unmatched))
    } else if reference.is_dir() || generated.is_dir() {
        Err(Error::InvalidConfig(
            "--ref and --gen must both be files or both be directories".into(),
        ))
    } else {
        let name = generated
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        Ok((
            vec![(
                name,
                evaluate(&load_wav(reference)?, &load_wav(generated)?)?,
            )],
            vec![],
        ))
    }
}

fn cmd_metrics(reference: &Path, generated: &Path, out: &Path) -> Result<String> {
    let (rows, unmatched) = metric_rows(reference, generated)?;
    for name in &unmatched {
        log::warn!("no counterpart for {name}; skipped");
        eprintln!("unmatched: {name}");
    }
    let mut csv = format!("{}\n", MetricReport::CSV_HEADER);
    for (name, r) in &rows {
        csv += &r.csv_row(name);
        csv.push('\n');
    }
    write_text(&out.join("metrics.csv"), &csv)?;
    Ok(csv)
}

fn cmd_loss_ri(cfg: &RunConfig, reference: &Path, generated: &Path, out: &Path) -> Result<String> {
    let x = load_wav(reference)?;
    let y = load_wav(generated)?;
    let b = ri_loss(&x, &y, &cfg.stft)?;
    let mr = mr_ri_loss(&x, &y, &MultiResConfig::default())?;
    let sc = b.spectral_convergence.unwrap_or(f64::NAN);
    let per: Vec<String> = mr
        .per_resolution
        .iter()
        .map(|v| format!("{:.9}", v.total))
        .collect();
    let csv = format!(
        "real_l1,imag_l1,magnitude_l1,spectral_convergence,total,mr_ri_total\n{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
        b.real_l1, b.imag_l1, b.magnitude_l1, sc, b.total, mr.total
    );
    write_text(&out.join("loss_ri.csv"), &csv)?;
    let mut text = csv.clone();
    writeln!(text, "\nreal L1             {:.6}", b.real_l1).ok();
    writeln!(text, "imaginary L1        {:.6}", b.imag_l1).ok();
    writeln!(text, "magnitude L1        {:.6}", b.magnitude_l1).ok();
    match b.spectral_convergence {
        Some(v) => writeln!(text, "spectral convergence {v:.6}").ok(),
        None => writeln!(text, "spectral convergence undefined (silent reference)").ok(),
    };
    writeln!(text, "RI total            {:.6}", b.total).ok();
    writeln!(
        text,
        "MR-RI total         {:.6}  (per resolution: {})",
        mr.total,
        per.join(", ")
    )
    .ok();
    Ok(text)
}

const BANDS_SIDECAR: &str = "bands.txt";

fn cmd_pqmf_split(cfg: &RunConfig, input: &Path, out: &Path) -> Result<String> {
    let x = load_wav(input)?;
    let bank = cfg.pqmf_bank()?;
    let sb = pqmf_analysis(&x, &bank)?;
    let band_rate = ((x.sample_rate() as f64 / bank.num_bands as f64).round() as u32).max(1);
    for (k, band) in sb.bands.iter().enumerate() {
        save_wav(
            &AudioBuffer::new(band.clone(), band_rate)?,
            out.join(format!("band_{k:02}.wav")),
            WavFormat::Float32,
        )?;
    }
    let side = format!(
        "num_bands = {}\nsource_len = {}\nsample_rate = {}\nband_len = {}\ntaps = {}\nbeta = {}\n",
        bank.num_bands,
        sb.source_len,
        sb.sample_rate,
        sb.band_len(),
        bank.taps(),
        bank.kaiser_beta
    );
    write_text(&out.join(BANDS_SIDECAR), &side)?;
    Ok(format!(
        "{} bands of {} samples -> {}\n",
        bank.num_bands,
        sb.band_len(),
        out.display()
    ))
}

fn sidecar_value(text: &str, key: &str) -> Result<u64> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .and_then(|(_, v)| v.trim().parse().ok())
        .ok_or_else(|| Error::InvalidAudio(format!("{BANDS_SIDECAR} lacks a valid '{key}'")))
}

fn cmd_pqmf_merge(cfg: &RunConfig, dir: &Path, out: &Path) -> Result<String> {
    let side = std::fs::read_to_string(dir.join(BANDS_SIDECAR))?;
    let k = sidecar_value(&side, "num_bands")? as usize;
    let bank = cfg.pqmf_bank()?;
    if k != bank.num_bands {
        return Err(Error::InvalidConfig(format!(
            "split has {k} bands but pqmf.k = {}",
            bank.num_bands
        )));
    }
    let bands = (0..k)
        .map(|i| load_wav(dir.join(format!("band_{i:02}.wav"))).map(AudioBuffer::into_samples))
        .collect::<Result<Vec<_>>>()?;
    let sb = SubbandSignals {
        bands,
        source_len: sidecar_value(&side, "source_len")? as usize,
        sample_rate: sidecar_value(&side, "sample_rate")? as u32,
    };
    let y = pqmf_synthesis(&sb, &bank)?;
    let path = out.join("merged.wav");
    save_wav(&y, &path, WavFormat::Float32)?;
    Ok(format!("{} samples -> {}\n", y.len(), path.display()))
}

fn cmd_augment(cfg: &RunConfig, which: AugmentCommand, out: &Path) -> Result<String> {
    let (input, y, params) = match which {
        AugmentCommand::Noise { input, snr } => {
            let x = load_wav(&input.input)?;
            let (y, snr) = match snr {
                Some(s) => (add_noise(&x, s, cfg.seed)?, s),
                None => add_noise_random(&x, cfg.seed)?,
            };
            (input.input, y, format!("kind = noise\nsnr_db = {snr}\n"))
        }
        AugmentCommand::Pitch { input, ratio } => {
            let x = load_wav(&input.input)?;
            (
                input.input,
                harmonic_shift(&x, ratio)?,
                format!("kind = pitch\nratio = {ratio}\n"),
            )
        }
        AugmentCommand::Codec {
            input,
            cutoff,
            bits,
            command,
        } => {
            let x = load_wav(&input.input)?;
            match command {
                Some(c) => {
                    let y = ExternalCodec::new(c.clone())?.run(&x)?;
                    (
                        input.input,
                        y,
                        format!("kind = external_codec\ncommand = {c}\n"),
                    )
                }
                None => {
                    let y = lossy_compress_proxy(&x, cutoff, bits)?;
                    (
                        input.input,
                        y,
                        format!("kind = codec_proxy\ncutoff_hz = {cutoff}\nbits = {bits}\n"),
                    )
                }
            }
        }
    };
    let name = stem(&input);
    let path = out.join(format!("{name}.aug.wav"));
    save_wav(&y, &path, WavFormat::Float32)?;
    let side = format!("input = {}\n{params}seed = {}\n", input.display(), cfg.seed);
    write_text(&out.join(format!("{name}.aug.txt")), &side)?;
    Ok(format!("wrote {}\n{side}", path.display()))
}

/// One pipeline's output in the upsampling demonstration.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoRow {
    pub pipeline: &'static str,
    pub tone_hz: f64,
    /// Image energy relative to the tone, dB.
    pub aliasing_db: f64,
    pub signal: AudioBuffer,
}

/// Taps of the demo low-pass; cutoff sits at the input Nyquist.
pub const DEMO_LOWPASS_TAPS: usize = 127;
pub const DEMO_LOWPASS_BETA: f64 = 9.0;
const DEMO_INPUT_LEN: usize = 2048;

/// Image frequencies `m·fs_in ± f` below the output Nyquist.
pub fn image_frequencies(tone_hz: f64, input_rate: f64, output_rate: f64) -> Vec<f64> {
    let nyquist = output_rate / 2.0;
    let mut v = Vec::new();
    let mut m = 1.0;
    while m * input_rate - tone_hz < nyquist {
        for f in [m * input_rate - tone_hz, m * input_rate + tone_hz] {
            if f > 0.0 && f < nyquist {
                v.push(f);
            }
        }
        m += 1.0;
    }
    v
}

/// Upsamples a tone by `stride` with a seeded random kernel of length `2·stride` through
/// plain, twin, plain+lowpass and twin+lowpass pipelines and measures image energy.
pub fn upsample_demo(
    tone_hz: f64,
    stride: usize,
    output_rate: u32,
    seed: u64,
) -> Result<Vec<DemoRow>> {
    if stride < 2 {
        return Err(Error::InvalidConfig(
            "demo stride must be at least 2".into(),
        ));
    }
    let input_rate = output_rate as f64 / stride as f64;
    if !(tone_hz > 0.0 && tone_hz < input_rate / 2.0) {
        return Err(Error::InvalidConfig(format!(
            "tone {tone_hz} Hz must lie below the input Nyquist {} Hz",
            input_rate / 2.0
        )));
    }
    let x: Vec<f64> = (0..DEMO_INPUT_LEN)
        .map(|n| 0.5 * (std::f64::consts::TAU * tone_hz * n as f64 / input_rate).sin())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel: Vec<f64> = (0..2 * stride)
        .map(|_| rng.random_range(0.1..1.0))
        .collect();
    let plain = crop_centered(&transposed_conv1d(&x, &kernel, stride)?, x.len(), stride);
    let twin = crop_centered(
        &twin_deconv(&x, &DeconvSpec::new(kernel, stride, TwinMode::Ones)?)?,
        x.len(),
        stride,
    );
    let lowpass = design_lowpass(0.5 / stride as f64, DEMO_LOWPASS_TAPS, DEMO_LOWPASS_BETA)?;
    let images = image_frequencies(tone_hz, input_rate, output_rate as f64);
    [
        ("plain", plain.clone()),
        ("twin", twin.clone()),
        ("plain+lowpass", apply_fir(&plain, &lowpass)),
        ("twin+lowpass", apply_fir(&twin, &lowpass)),
    ]
    .into_iter()
    .map(|(pipeline, y)| {
        let signal = AudioBuffer::new(y, output_rate)?;
        Ok(DemoRow {
            pipeline,
            tone_hz,
            aliasing_db: aliasing_energy(&signal, tone_hz, &images)?,
            signal,
        })
    })
    .collect()
}

fn cmd_upsample_demo(cfg: &RunConfig, tones: &[f64], stride: usize, out: &Path) -> Result<String> {
    let mut csv = String::from("tone_hz,pipeline,aliasing_db\n");
    let mut table = format!(
        "{:>8}  {:<14} {:>12}\n",
        "tone_hz", "pipeline", "aliasing_dB"
    );
    let mut margins = String::new();
    for &tone in tones {
        let rows = upsample_demo(tone, stride, cfg.sample_rate, cfg.seed)?;
        for r in &rows {
            writeln!(csv, "{},{},{:.6}", r.tone_hz, r.pipeline, r.aliasing_db).ok();
            writeln!(
                table,
                "{:>8}  {:<14} {:>12.2}",
                r.tone_hz, r.pipeline, r.aliasing_db
            )
            .ok();
            let name = format!("tone{}_{}", tone, r.pipeline.replace('+', "_"));
            save_wav(
                &r.signal,
                out.join(format!("{name}.wav")),
                WavFormat::Float32,
            )?;
            std::fs::write(
                out.join(format!("{name}.pgm")),
                spectrogram_pgm(&r.signal, &cfg.stft, 80.0)?,
            )?;
        }
        let plain = rows[0].aliasing_db;
        let best = rows[3].aliasing_db;
        writeln!(
            margins,
            "{tone} Hz: twin+lowpass is {:.1} dB below plain ({})",
            plain - best,
            if plain - best >= 20.0 {
                "ok"
            } else {
                "below 20 dB"
            }
        )
        .ok();
    }
    write_text(&out.join("aliasing.csv"), &csv)?;
    Ok(format!("{table}\n{margins}"))
}

fn run_training(
    cfg: &RunConfig,
    train: &crate::nets::TrainConfig,
    label: &str,
) -> Result<TrainingReport> {
    let every = (train.steps / 20).max(1);
    eprintln!("training [{label}] for {} steps", train.steps);
    train_toy_with_progress(train, |r| {
        if r.step % every == 0 {
            eprintln!(
                "  [{label}] step {:5}  loss {:.4}  mel {:.4}",
                r.step, r.total, r.mel
            );
        }
    })
    .inspect(|_| log::info!("finished {label} run, seed {}", cfg.seed))
}

fn save_run(report: &TrainingReport, out: &Path, tag: &str) -> Result<()> {
    report.write_csv_file(&out.join(format!("losses_{tag}.csv")))?;
    let params: Vec<(String, &crate::nets::Tensor)> =
        report.params.iter().map(|(n, t)| (n.clone(), t)).collect();
    save_checkpoint(&out.join(format!("generator_{tag}.fagn")), &params)
}

fn cmd_train(
    cfg: &RunConfig,
    ablation: Option<Ablation>,
    steps: Option<usize>,
    out: &Path,
) -> Result<String> {
    let mut train = cfg.train_config();
    if let Some(s) = steps {
        train.steps = s;
    }
    let full = run_training(cfg, &train, "full")?;
    save_run(&full, out, "full")?;
    let mut text = format!(
        "held-out mel loss {:.4} -> {:.4} ({:.1}% of initial)\n",
        full.initial.mel,
        full.final_metrics.mel,
        100.0 * full.final_metrics.mel / full.initial.mel
    );
    if let Some(a) = ablation {
        let ablated = run_training(cfg, &a.apply(&train), a.label())?;
        let tag = match a {
            Ablation::TwinDeconv => "no_tdconv",
            Ablation::MrRi => "no_mrri",
        };
        save_run(&ablated, out, tag)?;
        let table = ablation_table(&full, a, &ablated).render();
        write_text(&out.join("ablation.txt"), &table)?;
        text += &table;
    }
    Ok(text)
}

fn cmd_grad_check(cfg: &RunConfig, eps: f64) -> Result<String> {
    let reports: Vec<GradCheckReport> = grad_check(cfg.seed, eps)?;
    let mut text = format!(
        "{:<26} {:>12} {:>8} {:>8}  result\n",
        "check", "max_rel_err", "cells", "kinks"
    );
    for r in &reports {
        writeln!(
            text,
            "{:<26} {:>12.3e} {:>8} {:>8}  {}",
            r.label,
            r.max_rel_error,
            r.checked,
            r.skipped_kinks,
            if r.passes(GRAD_TOLERANCE) {
                "pass"
            } else {
                "FAIL"
            }
        )
        .ok();
    }
    if let Some(bad) = reports.iter().find(|r| !r.passes(GRAD_TOLERANCE)) {
        eprint!("{text}");
        return Err(Error::NonFinite(format!(
            "gradient check '{}' (max relative error {:.3e} > {GRAD_TOLERANCE:e})",
            bad.label, bad.max_rel_error
        )));
    }
    Ok(text)
}
