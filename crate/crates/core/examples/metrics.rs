//! Objective metrics on tone pairs: MCD, LSD by band, F0 RMSE and aliasing energy.
//!
//! `cargo run --release --example metrics`

use fagan::metrics::{aliasing_energy, estimate_f0, evaluate, f0_rmse, F0Config};
use fagan::signal::AudioBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tone(freq: f64, amp: f64, sr: u32, secs: f64) -> anyhow::Result<AudioBuffer> {
    let n = (secs * sr as f64) as usize;
    let v = (0..n)
        .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / sr as f64).sin())
        .collect();
    Ok(AudioBuffer::new(v, sr)?)
}

fn main() -> anyhow::Result<()> {
    let sr = 22050;
    let a = tone(220.0, 0.5, sr, 1.0)?;
    let b = tone(225.0, 0.5, sr, 1.0)?;

    let same = evaluate(&a, &a)?;
    println!(
        "identical: mcd {} lsd {} f0_rmse {:?}",
        same.mcd, same.lsd.full, same.f0_rmse
    );
    // Gain laws need a signal with energy in every band; a bare tone sits on the log floor.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let broadband = AudioBuffer::new((0..sr).map(|_| rng.random_range(-0.5..0.5)).collect(), sr)?;
    let louder = evaluate(&broadband, &broadband.scaled(2.0)?)?;
    println!(
        "x vs 2x:   mcd {:.2e} lsd {:.9} (log10 2 = {:.9})",
        louder.mcd,
        louder.lsd.full,
        2f64.log10()
    );

    let r = evaluate(&a, &b)?;
    println!(
        "220 vs 225 Hz: mcd {:.4} lsd {:.4} (L {:.4} M {:.4} H {:.4})",
        r.mcd, r.lsd.full, r.lsd.low, r.lsd.mid, r.lsd.high
    );
    println!("F0 RMSE {:.3} Hz", f0_rmse(&a, &b)?.unwrap_or(f64::NAN));
    let track = estimate_f0(&a, &F0Config::default())?;
    println!(
        "voiced fraction of the 220 Hz tone: {:.2}",
        track.voiced_fraction()
    );

    let mut mixed = tone(1000.0, 0.5, sr, 1.0)?.into_samples();
    let image = tone(4512.5, 0.005, sr, 1.0)?;
    mixed
        .iter_mut()
        .zip(image.samples())
        .for_each(|(m, v)| *m += v);
    let mixed = AudioBuffer::new(mixed, sr)?;
    println!(
        "image 40 dB down -> aliasing energy {:.2} dB",
        aliasing_energy(&mixed, 1000.0, &[4512.5])?
    );
    Ok(())
}
