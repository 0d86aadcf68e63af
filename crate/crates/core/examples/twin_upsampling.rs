//! Checkerboard ripple of a plain transposed convolution versus twin deconvolution,
//! and image suppression of the upsampling pipelines on a pure tone.
//!
//! `cargo run --release --example twin_upsampling`

use fagan::cli::upsample_demo;
use fagan::upsample::{crop_centered, transposed_conv1d, twin_deconv, DeconvSpec, TwinMode};

fn ripple(y: &[f64]) -> f64 {
    let max = y.iter().cloned().fold(f64::MIN, f64::max);
    let min = y.iter().cloned().fold(f64::MAX, f64::min);
    max - min
}

fn main() -> anyhow::Result<()> {
    let x = vec![1.0; 32];
    println!("stride kernel  plain ripple  twin ripple");
    for (stride, k) in [(2, 3), (2, 4), (3, 7), (4, 6), (4, 8), (8, 12)] {
        let kernel = vec![0.5; k];
        let plain = crop_centered(&transposed_conv1d(&x, &kernel, stride)?, x.len(), stride);
        let twin = crop_centered(
            &twin_deconv(&x, &DeconvSpec::new(kernel, stride, TwinMode::Ones)?)?,
            x.len(),
            stride,
        );
        println!(
            "{stride:6} {k:6}  {:12.3e}  {:11.3e}",
            ripple(&plain),
            ripple(&twin)
        );
    }

    println!("\ntone Hz  pipeline          image energy dB");
    for tone in [500.0, 1000.0, 2000.0] {
        for row in upsample_demo(tone, 4, 22050, 0)? {
            println!("{:7}  {:16}  {:8.2}", tone, row.pipeline, row.aliasing_db);
        }
    }
    Ok(())
}
