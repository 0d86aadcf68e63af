//! Splits a chirp into 12 pseudo-QMF sub-bands, groups them into low/mid/high and merges them back.
//!
//! `cargo run --release --example pqmf_bands`

use fagan::signal::AudioBuffer;
use fagan::subband::{design_pqmf, group_bands, pqmf_analysis, pqmf_synthesis, BandGrouping};

fn main() -> anyhow::Result<()> {
    let sr = 22050u32;
    let n = 2 * sr as usize;
    let dur = n as f64 / sr as f64;
    let chirp: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr as f64;
            let (f0, f1) = (50.0, 10_000.0);
            0.5 * (std::f64::consts::TAU * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)).sin()
        })
        .collect();
    let x = AudioBuffer::new(chirp, sr)?;

    let bank = design_pqmf(12, 96, 9.0)?;
    println!(
        "prototype cutoff {:.5} cycles/sample, {} taps",
        bank.cutoff,
        bank.taps()
    );
    let sb = pqmf_analysis(&x, &bank)?;
    let total = sb.total_energy();
    for k in 0..sb.num_bands() {
        println!(
            "band {k:2}: {:5.1}% of sub-band energy",
            100.0 * sb.band_energy(k) / total
        );
    }
    let groups = group_bands(&sb, &BandGrouping::thirds(12))?;
    for (name, g) in ["low", "mid", "high"].iter().zip(groups.groups()) {
        println!("{name:4} group: {} bands", g.num_bands());
    }
    let y = pqmf_synthesis(&sb, &bank)?;
    println!(
        "merged {} samples; round-trip error {:.1} dB",
        y.len(),
        bank.round_trip_error_db(x.samples())?
    );
    Ok(())
}
