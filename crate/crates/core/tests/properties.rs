//! Property tests over random inputs.

mod common;

use common::noise;
use fagan::augment::{add_noise, measured_snr_db};
use fagan::config::RunConfig;
use fagan::losses::{mr_ri_loss, MultiResConfig};
use fagan::metrics::{lsd, mcd};
use fagan::nets::{read_checkpoint, write_checkpoint, Tensor};
use fagan::signal::{
    istft, mel_spectrogram, stft, AudioBuffer, MelConfig, StftConfig, MEL_LOG_FLOOR,
};
use fagan::subband::design_pqmf;
use fagan::upsample::{crop_centered, twin_deconv, DeconvSpec, TwinMode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn twin_deconv_of_constants_is_flat(stride in 1usize..9, extra in 0usize..12, c in 0.1f64..3.0, w in 0.1f64..2.0) {
        let k = stride + extra;
        let x = vec![c; 40];
        for mode in [TwinMode::Ones, TwinMode::AbsWeight] {
            let y = twin_deconv(&x, &DeconvSpec::new(vec![w; k], stride, mode).unwrap()).unwrap();
            let y = crop_centered(&y, x.len(), stride);
            let expected = if mode == TwinMode::Ones { c * w } else { c };
            for v in y {
                prop_assert!((v - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn stft_round_trip_on_interior(seed in any::<u64>(), len in 3000usize..6000) {
        let x = AudioBuffer::new(noise(seed, len, 1.0), 22050).unwrap();
        let cfg = StftConfig::new(512, 512, 128);
        let y = istft(&stft(&x, &cfg).unwrap(), 22050).unwrap();
        let r = 512..len - 512;
        let num: f64 = r.clone().map(|i| (x.samples()[i] - y.samples()[i]).powi(2)).sum();
        let den: f64 = r.map(|i| x.samples()[i].powi(2)).sum();
        prop_assert!((num / den).sqrt() <= 1e-6);
    }

    #[test]
    fn mel_gain_shift_law(seed in any::<u64>(), gain in 0.1f64..10.0) {
        let x = AudioBuffer::new(noise(seed, 4096, 0.5), 22050).unwrap();
        let a = mel_spectrogram(&x, &MelConfig::default()).unwrap();
        let b = mel_spectrogram(&x.scaled(gain).unwrap(), &MelConfig::default()).unwrap();
        let floor = MEL_LOG_FLOOR.ln();
        for (u, v) in a.values.iter().zip(&b.values) {
            if *u > floor + 1e-6 && *v > floor + 1e-6 {
                prop_assert!((v - u - gain.ln()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn mr_ri_is_the_mean_of_resolutions(seed in any::<u64>()) {
        let x = AudioBuffer::new(noise(seed, 4096, 1.0), 22050).unwrap();
        let y = AudioBuffer::new(noise(seed ^ 1, 4096, 1.0), 22050).unwrap();
        let r = mr_ri_loss(&x, &y, &MultiResConfig::default()).unwrap();
        let mean = r.per_resolution.iter().map(|p| p.total).sum::<f64>() / r.per_resolution.len() as f64;
        prop_assert_eq!(r.total, mean);
    }

    #[test]
    fn lsd_of_doubled_signal_is_log10_2(seed in any::<u64>()) {
        let x = AudioBuffer::new(noise(seed, 8192, 0.5), 22050).unwrap();
        let d = lsd(&x, &x.scaled(2.0).unwrap()).unwrap();
        prop_assert!((d - 2f64.log10()).abs() <= 1e-9);
    }

    #[test]
    fn mcd_is_gain_invariant(seed in any::<u64>(), gain in 0.2f64..5.0) {
        let x = AudioBuffer::new(noise(seed, 8192, 0.5), 22050).unwrap();
        prop_assert!(mcd(&x, &x.scaled(gain).unwrap()).unwrap() <= 1e-9);
    }

    #[test]
    fn realised_snr_matches_request(seed in any::<u64>(), snr in 28.0f64..40.0) {
        let x = AudioBuffer::new(noise(seed, 22050, 0.5), 22050).unwrap();
        let y = add_noise(&x, snr, seed).unwrap();
        prop_assert!((measured_snr_db(&x, &y).unwrap() - snr).abs() <= 0.5);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..9) {
        let t = Tensor::new(vec![rows, cols], noise(seed, rows * cols, 3.0)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("layer.weight".to_string(), &t)]).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        prop_assert_eq!(back, vec![("layer.weight".to_string(), t)]);
    }

    #[test]
    fn config_text_round_trip(seed in any::<u64>(), steps in 1usize..5000, lr in 1e-5f64..1e-2) {
        let mut cfg = RunConfig::default();
        cfg.seed = seed;
        cfg.train.steps = steps;
        cfg.train.lr = lr;
        let back = RunConfig::parse(&cfg.to_text(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn pqmf_round_trip_on_noise_seeds() {
    let bank = design_pqmf(12, 96, 9.0).unwrap();
    for seed in 0..4 {
        let db = bank.round_trip_error_db(&noise(seed, 22050, 0.5)).unwrap();
        assert!(db <= -35.0, "seed {seed}: {db} dB");
    }
}
