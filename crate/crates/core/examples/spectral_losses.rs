//! Real/imaginary spectral loss, its multi-resolution mean, the mel loss and the
//! least-squares adversarial identities.
//!
//! `cargo run --release --example spectral_losses`

use fagan::losses::{adversarial_losses, mel_loss, mr_ri_loss, ri_loss, MultiResConfig};
use fagan::signal::{AudioBuffer, StftConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sr = 22050;
    let x: Vec<f64> = (0..8192).map(|_| rng.random_range(-0.5..0.5)).collect();
    let noisy: Vec<f64> = x
        .iter()
        .map(|v| v + rng.random_range(-0.05..0.05))
        .collect();
    let x = AudioBuffer::new(x, sr)?;
    let xhat = AudioBuffer::new(noisy, sr)?;
    let silence = AudioBuffer::silence(x.len(), sr)?;

    let cfg = StftConfig::new(1024, 1024, 120);
    println!(
        "ri_loss(x, x)      total = {}",
        ri_loss(&x, &x, &cfg)?.total
    );
    let r = ri_loss(&x, &xhat, &cfg)?;
    println!(
        "ri_loss(x, noisy)  real {:.4}  imag {:.4}  mag {:.4}  sc {:.4}  total {:.4}",
        r.real_l1,
        r.imag_l1,
        r.magnitude_l1,
        r.spectral_convergence.unwrap_or(f64::NAN),
        r.total
    );
    let sc = ri_loss(&x, &silence, &cfg)?.spectral_convergence;
    println!("spectral convergence against silence = {sc:?}");

    let mr = mr_ri_loss(&x, &xhat, &MultiResConfig::default())?;
    let totals: Vec<f64> = mr.per_resolution.iter().map(|r| r.total).collect();
    println!(
        "multi-resolution: per-resolution {totals:.4?}, mean {:.6}",
        mr.total
    );
    println!("mel loss = {:.6}", mel_loss(&x, &xhat)?);

    let real = [vec![1.0; 4], vec![1.0; 4]];
    let fake = [vec![0.0; 4], vec![0.0; 4]];
    let ideal = adversarial_losses(&real, &fake)?;
    println!(
        "LSGAN with an ideal discriminator: d_loss {} g_loss {}",
        ideal.d_loss, ideal.g_loss
    );
    let fooled = adversarial_losses(&real, &real)?;
    println!(
        "LSGAN with a fooled discriminator: g_loss {}",
        fooled.g_loss
    );
    Ok(())
}
