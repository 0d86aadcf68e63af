//! STFT round trip and log-mel analysis of a two-tone signal.
//!
//! `cargo run --release --example spectral_analysis`

use fagan::signal::{istft, mel_spectrogram, stft, AudioBuffer, MelConfig, StftConfig};

fn main() -> anyhow::Result<()> {
    let sr = 22050;
    let samples: Vec<f64> = (0..sr)
        .map(|n| {
            let t = n as f64 / sr as f64;
            0.4 * (std::f64::consts::TAU * 440.0 * t).sin()
                + 0.2 * (std::f64::consts::TAU * 3000.0 * t).sin()
        })
        .collect();
    let x = AudioBuffer::new(samples, sr as u32)?;

    let cfg = StftConfig::analysis();
    let spec = stft(&x, &cfg)?;
    println!("stft: {} frames x {} bins", spec.frames, cfg.num_bins());
    let y = istft(&spec, x.sample_rate())?;
    let interior = cfg.window_size..x.len() - cfg.window_size;
    let err: f64 = interior
        .clone()
        .map(|i| (x.samples()[i] - y.samples()[i]).powi(2))
        .sum();
    let norm: f64 = interior.map(|i| x.samples()[i].powi(2)).sum();
    println!(
        "istft relative error on interior samples: {:.2e}",
        (err / norm).sqrt()
    );

    let mel = mel_spectrogram(&x, &MelConfig::default())?;
    let frame = mel.frames / 2;
    let peak = (0..mel.n_mels)
        .max_by(|&a, &b| mel.at(frame, a).total_cmp(&mel.at(frame, b)))
        .unwrap_or(0);
    println!(
        "log-mel: {} frames x {} bands, loudest band {peak} at frame {frame}",
        mel.frames, mel.n_mels
    );

    let louder = mel_spectrogram(&x.scaled(2.0)?, &MelConfig::default())?;
    println!(
        "doubling the gain shifts that cell by {:.9} (ln 2 = {:.9})",
        louder.at(frame, peak) - mel.at(frame, peak),
        std::f64::consts::LN_2
    );
    Ok(())
}
