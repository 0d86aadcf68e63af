//! Spectral losses against a straight-line reference built on a naive DFT.

mod common;

use common::{naive_ri_total, noise, rel};
use fagan::losses::{mr_ri_loss, ri_loss, MultiResConfig};
use fagan::signal::{AudioBuffer, StftConfig};

#[test]
fn ri_loss_matches_naive_dft_reference() {
    for (seed, (fft, win, hop)) in [
        (1, (256, 256, 64)),
        (2, (512, 400, 100)),
        (3, (128, 128, 50)),
    ] {
        let x = noise(seed, 1500, 1.0);
        let y = noise(seed + 100, 1500, 1.0);
        let a = AudioBuffer::new(x.clone(), 22050).unwrap();
        let b = AudioBuffer::new(y.clone(), 22050).unwrap();
        let got = ri_loss(&a, &b, &StftConfig::new(fft, win, hop))
            .unwrap()
            .total;
        let want = naive_ri_total(&x, &y, fft, win, hop);
        assert!(rel(got, want) <= 1e-10, "fft {fft}: {got} vs {want}");
    }
}

#[test]
fn multi_resolution_default_matches_naive_reference() {
    let x = noise(11, 4096, 1.0);
    let y = noise(12, 4096, 1.0);
    let a = AudioBuffer::new(x.clone(), 22050).unwrap();
    let b = AudioBuffer::new(y.clone(), 22050).unwrap();
    let report = mr_ri_loss(&a, &b, &MultiResConfig::default()).unwrap();
    let want: f64 = [(2048, 240), (1024, 120), (512, 50)]
        .iter()
        .map(|&(w, h)| naive_ri_total(&x, &y, w, w, h))
        .sum::<f64>()
        / 3.0;
    assert!(
        rel(report.total, want) <= 1e-10,
        "{} vs {want}",
        report.total
    );
}
