//! Noise at a requested SNR, harmonic pitch shift and the compression proxy.
//!
//! `cargo run --release --example augmentation`

use fagan::augment::{
    add_noise, harmonic_shift, lossy_compress_proxy, measured_snr_db, ExternalCodec,
};
use fagan::metrics::{estimate_f0, F0Config};
use fagan::signal::AudioBuffer;

fn median_f0(x: &AudioBuffer) -> anyhow::Result<f64> {
    let t = estimate_f0(x, &F0Config::default())?;
    let mut v: Vec<f64> =
        t.f0.iter()
            .zip(&t.voicing)
            .filter(|(_, &on)| on)
            .map(|(f, _)| *f)
            .collect();
    v.sort_by(f64::total_cmp);
    Ok(v.get(v.len() / 2).copied().unwrap_or(f64::NAN))
}

fn main() -> anyhow::Result<()> {
    let sr = 22050;
    let x = AudioBuffer::new(
        (0..sr)
            .map(|n| 0.5 * (std::f64::consts::TAU * 220.0 * n as f64 / sr as f64).sin())
            .collect(),
        sr as u32,
    )?;

    for snr in [28.0, 34.0, 40.0] {
        let noisy = add_noise(&x, snr, 1)?;
        println!(
            "requested {snr:.1} dB SNR, realised {:.3} dB",
            measured_snr_db(&x, &noisy)?
        );
    }

    let shifted = harmonic_shift(&x, 1.5)?;
    println!(
        "harmonic shift x1.5: {:.2} Hz -> {:.2} Hz",
        median_f0(&x)?,
        median_f0(&shifted)?
    );

    let coded = lossy_compress_proxy(&x, 4000.0, 6)?;
    let err: f64 = x
        .samples()
        .iter()
        .zip(coded.samples())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    println!(
        "mu-law 6-bit proxy: SNR {:.2} dB",
        10.0 * (x.energy() / err).log10()
    );

    let codec = ExternalCodec::new("cp {input} {output}")?;
    let passthrough = codec.run(&x)?;
    println!(
        "external pass-through codec returned {} samples",
        passthrough.len()
    );
    Ok(())
}
