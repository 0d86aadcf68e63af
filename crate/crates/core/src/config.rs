//! `key = value` run configuration shared by every CLI subcommand.
//!
//! Lines are UTF-8, `#` starts a comment, blank lines are ignored and unknown
//! keys are rejected. [`RunConfig::to_text`] writes every key, so the echoed
//! file reloads to the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nets::{TrainConfig, TrainMode};
use crate::signal::{MelConfig, StftConfig, WindowKind};
use crate::subband::{design_pqmf, PqmfBank};
use crate::upsample::TwinMode;

/// Environment variable consulted when no `--config` flag is given.
pub const CONFIG_ENV: &str = "FAGAN_CONFIG";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub mel_n_mels: usize,
    pub mel_fmin: f64,
    /// `None` is Nyquist.
    pub mel_fmax: Option<f64>,
    pub pqmf_k: usize,
    pub pqmf_taps: usize,
    pub pqmf_beta: f64,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mel = MelConfig::default();
        Self {
            sample_rate: 22050,
            stft: mel.stft,
            mel_n_mels: mel.n_mels,
            mel_fmin: mel.fmin,
            mel_fmax: mel.fmax,
            pqmf_k: 12,
            pqmf_taps: 96,
            pqmf_beta: 9.0,
            loss: LossWeights::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true/false, got '{v}'")),
    }
}

fn twin_name(m: TwinMode) -> &'static str {
    match m {
        TwinMode::None => "none",
        TwinMode::Ones => "ones",
        TwinMode::AbsWeight => "abs_weight",
    }
}

pub fn parse_twin_mode(v: &str) -> std::result::Result<TwinMode, String> {
    match v {
        "none" | "plain" => Ok(TwinMode::None),
        "ones" => Ok(TwinMode::Ones),
        "abs_weight" => Ok(TwinMode::AbsWeight),
        _ => Err(format!(
            "twin mode must be none, ones or abs_weight, got '{v}'"
        )),
    }
}

impl RunConfig {
    /// Parses configuration text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::ConfigFile {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate().map_err(|e| Error::ConfigFile {
            path: origin.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Loads `explicit`, else the file named by `FAGAN_CONFIG`, else the defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        match path {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "sample_rate" => self.sample_rate = parse_num(v)?,
            "stft.fft_size" => self.stft.fft_size = parse_num(v)?,
            "stft.window_size" => self.stft.window_size = parse_num(v)?,
            "stft.hop_size" => self.stft.hop_size = parse_num(v)?,
            "stft.window" => {
                self.stft.window = match v {
                    "hann" => WindowKind::Hann,
                    "rectangular" => WindowKind::Rectangular,
                    _ => return Err(format!("window must be hann or rectangular, got '{v}'")),
                }
            }
            "stft.center" => self.stft.center = parse_bool(v)?,
            "mel.n_mels" => self.mel_n_mels = parse_num(v)?,
            "mel.fmin" => self.mel_fmin = parse_num(v)?,
            "mel.fmax" => {
                self.mel_fmax = if v == "nyquist" {
                    None
                } else {
                    Some(parse_num(v)?)
                }
            }
            "pqmf.k" => self.pqmf_k = parse_num(v)?,
            "pqmf.taps" => self.pqmf_taps = parse_num(v)?,
            "pqmf.beta" => self.pqmf_beta = parse_num(v)?,
            "loss.lambda_g" => self.loss.lambda_g = parse_num(v)?,
            "loss.lambda_ri" => self.loss.lambda_ri = parse_num(v)?,
            "loss.lambda_mel" => self.loss.lambda_mel = parse_num(v)?,
            "loss.lambda_fm" => self.loss.lambda_fm = parse_num(v)?,
            "train.steps" => self.train.steps = parse_num(v)?,
            "train.batch_size" => self.train.batch_size = parse_num(v)?,
            "train.lr" => self.train.lr = parse_num(v)?,
            "train.held_out" => self.train.held_out = parse_num(v)?,
            "train.mode" => {
                self.train.mode = match v {
                    "regression" => TrainMode::Regression,
                    "adversarial" => TrainMode::Adversarial,
                    _ => {
                        return Err(format!(
                            "train.mode must be regression or adversarial, got '{v}'"
                        ))
                    }
                }
            }
            "train.mr_ri" => self.train.use_mr_ri = parse_bool(v)?,
            "train.min_freq" => self.train.corpus.min_freq = parse_num(v)?,
            "train.max_freq" => self.train.corpus.max_freq = parse_num(v)?,
            "train.upsample_kernel" => self.train.generator.upsample_kernel = parse_num(v)?,
            "train.twin_mode" => self.train.generator.twin_mode = parse_twin_mode(v)?,
            "seed" => self.seed = parse_num(v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        self.stft.validate()?;
        let mel = self.mel_config();
        if mel.n_mels == 0 {
            return Err(Error::InvalidConfig("mel.n_mels must be positive".into()));
        }
        let fmax = mel.resolved_fmax(self.sample_rate);
        if !(mel.fmin >= 0.0 && mel.fmin < fmax && fmax <= self.sample_rate as f64 / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "mel band {}..{fmax} Hz invalid at {} Hz",
                mel.fmin, self.sample_rate
            )));
        }
        self.pqmf_bank()?;
        self.loss.validate()?;
        self.train_config().validate()
    }

    pub fn mel_config(&self) -> MelConfig {
        MelConfig {
            stft: self.stft,
            n_mels: self.mel_n_mels,
            fmin: self.mel_fmin,
            fmax: self.mel_fmax,
        }
    }

    pub fn pqmf_bank(&self) -> Result<PqmfBank> {
        design_pqmf(self.pqmf_k, self.pqmf_taps, self.pqmf_beta)
    }

    /// Training configuration with the shared seed, loss weights, sample rate and PQMF design applied.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = self.seed;
        t.weights = self.loss;
        t.corpus.sample_rate = self.sample_rate;
        t.discriminator.num_bands = self.pqmf_k;
        t.discriminator.pqmf_taps = self.pqmf_taps;
        t.discriminator.pqmf_beta = self.pqmf_beta;
        t
    }

    /// Every key with its effective value.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::from("# effective configuration\n");
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");
        kv("sample_rate", self.sample_rate.to_string());
        kv("stft.fft_size", self.stft.fft_size.to_string());
        kv("stft.window_size", self.stft.window_size.to_string());
        kv("stft.hop_size", self.stft.hop_size.to_string());
        kv(
            "stft.window",
            match self.stft.window {
                WindowKind::Hann => "hann",
                WindowKind::Rectangular => "rectangular",
            }
            .into(),
        );
        kv("stft.center", self.stft.center.to_string());
        kv("mel.n_mels", self.mel_n_mels.to_string());
        kv("mel.fmin", self.mel_fmin.to_string());
        kv(
            "mel.fmax",
            self.mel_fmax.map_or("nyquist".into(), |f| f.to_string()),
        );
        kv("pqmf.k", self.pqmf_k.to_string());
        kv("pqmf.taps", self.pqmf_taps.to_string());
        kv("pqmf.beta", self.pqmf_beta.to_string());
        kv("loss.lambda_g", self.loss.lambda_g.to_string());
        kv("loss.lambda_ri", self.loss.lambda_ri.to_string());
        kv("loss.lambda_mel", self.loss.lambda_mel.to_string());
        kv("loss.lambda_fm", self.loss.lambda_fm.to_string());
        kv("train.steps", t.steps.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.lr", t.lr.to_string());
        kv("train.held_out", t.held_out.to_string());
        kv(
            "train.mode",
            match t.mode {
                TrainMode::Regression => "regression",
                TrainMode::Adversarial => "adversarial",
            }
            .into(),
        );
        kv("train.mr_ri", t.use_mr_ri.to_string());
        kv("train.min_freq", t.corpus.min_freq.to_string());
        kv("train.max_freq", t.corpus.max_freq.to_string());
        kv(
            "train.upsample_kernel",
            t.generator.upsample_kernel.to_string(),
        );
        kv("train.twin_mode", twin_name(t.generator.twin_mode).into());
        kv("seed", self.seed.to_string());
        s
    }

    /// Writes [`Self::to_text`] to `dir/config.txt`.
    pub fn echo_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("config.txt");
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn keys_are_applied() {
        let c = parse("seed = 7\nmel.fmax = 8000 # trailing comment\ntrain.mode=adversarial\nloss.lambda_mel = 30\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.mel_fmax, Some(8000.0));
        assert_eq!(c.train.mode, TrainMode::Adversarial);
        assert_eq!(c.train_config().weights.lambda_mel, 30.0);
        assert_eq!(c.train_config().seed, 7);
    }

    #[test]
    fn unknown_key_reports_line() {
        match parse("seed = 1\n\nbogus = 3\n") {
            Err(Error::ConfigFile { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invariants_checked_at_load() {
        assert!(parse("stft.hop_size = 2048\n").is_err());
        assert!(parse("mel.fmax = 20000\n").is_err());
        assert!(parse("pqmf.taps = 4\n").is_err());
        assert!(parse("loss.lambda_fm = -1\n").is_err());
        assert!(parse("train.max_freq = 5000\n").is_err());
        assert!(parse("seed\n").is_err());
        assert!(parse("train.steps = many\n").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c =
            parse("seed = 3\ntrain.lr = 0.00031\nmel.fmin = 12.5\ntrain.twin_mode = abs_weight\n")
                .unwrap();
        assert_eq!(parse(&c.to_text()).unwrap(), c);
        assert_eq!(
            parse(&RunConfig::default().to_text()).unwrap(),
            RunConfig::default()
        );
    }
}
