//! Parses a key = value run configuration, derives the training setup and writes a checkpoint.
//!
//! `cargo run --release --example run_config`

use std::path::Path;

use fagan::config::RunConfig;
use fagan::nets::{load_checkpoint, save_checkpoint, GeneratorConfig, ToyGenerator};

const TEXT: &str = "
# toy run
sample_rate = 22050
stft.fft_size = 1024
mel.n_mels = 80
pqmf.k = 12
loss.lambda_mel = 45
train.steps = 50
train.twin_mode = abs_weight
seed = 3
";

fn main() -> anyhow::Result<()> {
    let cfg = RunConfig::parse(TEXT, Path::new("inline"))?;
    cfg.validate()?;
    let train = cfg.train_config();
    println!(
        "steps {} seed {} twin {:?} mel weight {}",
        train.steps, train.seed, train.generator.twin_mode, train.weights.lambda_mel
    );
    println!("--- resolved configuration ---\n{}", cfg.to_text());

    let gen = ToyGenerator::new(GeneratorConfig {
        seed: train.seed,
        ..train.generator.clone()
    })?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("generator.fagn");
    let params = gen.named_params();
    save_checkpoint(&path, &params)?;
    let back = load_checkpoint(&path)?;
    println!(
        "checkpoint holds {} tensors, {} bytes",
        back.len(),
        std::fs::metadata(&path)?.len()
    );
    Ok(())
}
