//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance -- --nocapture`

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{chirp, naive_ri_total, noise, rel, speech_like, tone};
use fagan::augment::{add_noise, harmonic_shift, measured_snr_db};
use fagan::cli::upsample_demo;
use fagan::losses::{adversarial_losses, mr_ri_loss, ri_loss, MultiResConfig};
use fagan::metrics::{estimate_f0, f0_rmse, lsd, mcd, F0Config};
use fagan::nets::{
    grad_check, train_toy, Ablation, TrainConfig, TrainMode, DEFAULT_EPS, GRAD_TOLERANCE,
};
use fagan::signal::{
    istft, mel_spectrogram, stft, AudioBuffer, MelConfig, StftConfig, MEL_LOG_FLOOR,
};
use fagan::subband::design_pqmf;
use fagan::upsample::{transposed_conv1d, twin_deconv, DeconvSpec, TwinMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SR: u32 = 22050;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn buffer(v: Vec<f64>) -> AudioBuffer {
    AudioBuffer::new(v, SR).unwrap()
}

fn spread(y: &[f64]) -> f64 {
    let max = y.iter().cloned().fold(f64::MIN, f64::max);
    let min = y.iter().cloned().fold(f64::MAX, f64::min);
    max - min
}

fn median_f0(x: &AudioBuffer) -> f64 {
    let t = estimate_f0(x, &F0Config::default()).unwrap();
    let mut v: Vec<f64> =
        t.f0.iter()
            .zip(&t.voicing)
            .filter(|(_, &on)| on)
            .map(|(f, _)| *f)
            .collect();
    v.sort_by(f64::total_cmp);
    v.get(v.len() / 2).copied().unwrap_or(f64::NAN)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let reports = grad_check(0, DEFAULT_EPS).unwrap();
    let elapsed = start.elapsed();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failing: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passes(GRAD_TOLERANCE))
        .map(|r| r.label.as_str())
        .collect();
    let has_generator = reports.iter().any(|r| r.label.starts_with("generator"));
    outcome(
        failing.is_empty() && has_generator && elapsed <= Duration::from_secs(120),
        format!(
            "{} cases, worst {worst:.2e}, failing {failing:?}, {:.1?}",
            reports.len(),
            elapsed
        ),
    )
}

fn twin_flatness() -> Outcome {
    let mut worst_twin = 0.0f64;
    let mut ripple_ok = true;
    for s in [2usize, 3, 4, 8] {
        for l in [s, 2 * s, 2 * s + 1] {
            let x = vec![0.7; 16];
            let k = vec![1.3; l];
            for mode in [TwinMode::Ones, TwinMode::AbsWeight] {
                let y = twin_deconv(&x, &DeconvSpec::new(k.clone(), s, mode).unwrap()).unwrap();
                worst_twin = worst_twin.max(spread(&y));
            }
            let plain = transposed_conv1d(&x, &k, s).unwrap();
            let counts: Vec<usize> = (0..plain.len())
                .map(|j| {
                    (0..x.len())
                        .filter(|&i| j >= i * s && j - i * s < l)
                        .count()
                })
                .collect();
            let counts_vary = counts.iter().any(|&c| c != counts[0]);
            let ripple = spread(&plain);
            ripple_ok &= if counts_vary {
                ripple > 0.0
            } else {
                ripple <= 1e-12
            };
        }
    }
    outcome(
        worst_twin <= 1e-12 && ripple_ok,
        format!("twin max-min {worst_twin:.1e} over 12 (stride, length) pairs, plain ripple tracks overlap counts: {ripple_ok}"),
    )
}

fn aliasing_suppression() -> Outcome {
    let mut margins = Vec::new();
    for tone_hz in [500.0, 1000.0, 2000.0] {
        let rows = upsample_demo(tone_hz, 4, SR, 0).unwrap();
        let db = |name: &str| {
            rows.iter()
                .find(|r| r.pipeline == name)
                .unwrap()
                .aliasing_db
        };
        margins.push(db("plain") - db("twin+lowpass"));
    }
    outcome(
        margins.iter().all(|&m| m >= 20.0),
        format!("twin+lowpass below plain by {margins:.1?} dB at 500/1000/2000 Hz"),
    )
}

fn pqmf_round_trip() -> Outcome {
    let bank = design_pqmf(12, 96, 9.0).unwrap();
    let n = SR as usize;
    let signals = [
        ("noise", noise(3, n, 0.5)),
        ("speech", speech_like(SR, n, 5)),
        ("chirp", chirp(40.0, 10_500.0, SR, n)),
    ];
    let errs: Vec<f64> = signals
        .iter()
        .map(|(_, x)| bank.round_trip_error_db(x).unwrap())
        .collect();
    let mut worst_conc = 1.0f64;
    for k in 0..12 {
        let f = (2 * k + 1) as f64 / 48.0 * SR as f64;
        let bands = bank.analyze(&tone(f, 0.5, SR, n)).unwrap();
        let e: Vec<f64> = bands
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum())
            .collect();
        worst_conc = worst_conc.min(e[k] / e.iter().sum::<f64>());
    }
    outcome(
        errs.iter().all(|&e| e <= -35.0) && worst_conc >= 0.95,
        format!(
            "noise/speech/chirp {errs:.1?} dB, worst in-band share {:.2}%",
            100.0 * worst_conc
        ),
    )
}

fn stft_and_mel() -> Outcome {
    let mut worst_rt = 0.0f64;
    for (x, cfg) in [
        (noise(1, 8000, 1.0), StftConfig::analysis()),
        (speech_like(SR, 8000, 2), StftConfig::new(512, 512, 128)),
        (noise(4, 8000, 1.0), StftConfig::new(2048, 2048, 240)),
    ] {
        let a = buffer(x);
        let y = istft(&stft(&a, &cfg).unwrap(), SR).unwrap();
        let r = cfg.window_size..a.len() - cfg.window_size;
        let num: f64 = r
            .clone()
            .map(|i| (a.samples()[i] - y.samples()[i]).powi(2))
            .sum();
        let den: f64 = r.map(|i| a.samples()[i].powi(2)).sum();
        worst_rt = worst_rt.max((num / den).sqrt());
    }
    let x = buffer(speech_like(SR, 8192, 9));
    let floor = MEL_LOG_FLOOR.ln() + 1e-6;
    let mut worst_shift = 0.0f64;
    let base = mel_spectrogram(&x, &MelConfig::default()).unwrap();
    for g in [0.25, 0.5, 2.0, 3.0] {
        let m = mel_spectrogram(&x.scaled(g).unwrap(), &MelConfig::default()).unwrap();
        for (u, v) in base.values.iter().zip(&m.values) {
            if *u > floor && *v > floor {
                worst_shift = worst_shift.max((v - u - f64::ln(g)).abs());
            }
        }
    }
    outcome(
        worst_rt <= 1e-6 && worst_shift <= 1e-9,
        format!("interior round-trip {worst_rt:.1e}, mel gain-shift deviation {worst_shift:.1e}"),
    )
}

fn loss_identities() -> Outcome {
    let x = buffer(noise(21, 6000, 0.8));
    let cfg = StftConfig::new(1024, 1024, 256);
    let self_loss = ri_loss(&x, &x, &cfg).unwrap().total;
    let sc = ri_loss(&x, &AudioBuffer::silence(x.len(), SR).unwrap(), &cfg)
        .unwrap()
        .spectral_convergence
        .unwrap_or(f64::NAN);
    let y = buffer(noise(22, 6000, 0.8));
    let mr = mr_ri_loss(&x, &y, &MultiResConfig::default()).unwrap();
    let mean =
        mr.per_resolution.iter().map(|r| r.total).sum::<f64>() / mr.per_resolution.len() as f64;
    let defaults: Vec<(usize, usize)> = MultiResConfig::default()
        .resolutions
        .iter()
        .map(|c| (c.window_size, c.hop_size))
        .collect();
    let mut worst_oracle = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for (fft, win, hop) in [(256, 256, 64), (512, 512, 50), (1024, 1024, 120)] {
        let len = rng.random_range(2000..3000);
        let a = noise(rng.random(), len, 1.0);
        let b = noise(rng.random(), len, 1.0);
        let got = ri_loss(
            &buffer(a.clone()),
            &buffer(b.clone()),
            &StftConfig::new(fft, win, hop),
        )
        .unwrap()
        .total;
        worst_oracle = worst_oracle.max(rel(got, naive_ri_total(&a, &b, fft, win, hop)));
    }
    outcome(
        self_loss == 0.0
            && (sc - 1.0).abs() <= 1e-12
            && mr.total == mean
            && defaults == [(2048, 240), (1024, 120), (512, 50)]
            && worst_oracle <= 1e-10,
        format!(
            "ri(x,x)={self_loss}, sc(x,0)={sc}, mr mean exact: {}, resolutions {defaults:?}, oracle {worst_oracle:.1e}",
            mr.total == mean
        ),
    )
}

fn metric_identities() -> Outcome {
    let x = buffer(speech_like(SR, SR as usize, 13));
    let self_ok = mcd(&x, &x).unwrap() == 0.0 && lsd(&x, &x).unwrap() == 0.0;
    let a = buffer(tone(220.0, 0.5, SR, SR as usize));
    let b = buffer(tone(225.0, 0.5, SR, SR as usize));
    let f0_self = f0_rmse(&a, &a).unwrap();
    let fixtures: Vec<AudioBuffer> = [0.3, 0.0]
        .iter()
        .enumerate()
        .map(|(i, &voice)| {
            let n = noise(40 + i as u64, SR as usize, 0.05);
            let v = speech_like(SR, SR as usize, 17);
            buffer(n.iter().zip(&v).map(|(a, b)| a + voice * b).collect())
        })
        .collect();
    let floor = MEL_LOG_FLOOR.ln();
    let unclamped = fixtures.iter().all(|f| {
        let quiet = mel_spectrogram(&f.scaled(0.5).unwrap(), &MelConfig::default()).unwrap();
        quiet.values.iter().all(|&v| v > floor)
    });
    let gain = fixtures
        .iter()
        .flat_map(|f| [0.5, 2.0].map(|g| mcd(f, &f.scaled(g).unwrap()).unwrap().abs()))
        .fold(0.0, f64::max);
    let lsd2 = (lsd(&x, &x.scaled(2.0).unwrap()).unwrap() - 2f64.log10()).abs();
    let f0 = f0_rmse(&a, &b).unwrap().unwrap_or(f64::NAN);
    outcome(
        self_ok && f0_self == Some(0.0) && unclamped && gain <= 1e-9 && lsd2 <= 1e-9 && (f0 - 5.0).abs() <= 0.5,
        format!("self-distances zero: {}, mcd gain {gain:.1e} (no floor cells: {unclamped}), lsd(x,2x) off by {lsd2:.1e}, f0_rmse 220/225 = {f0:.3} Hz", self_ok && f0_self == Some(0.0)),
    )
}

fn augmentation() -> Outcome {
    let x = buffer(speech_like(SR, SR as usize, 17));
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let snr = rng.random_range(28.0..=40.0);
        let y = add_noise(&x, snr, seed).unwrap();
        worst = worst.max((measured_snr_db(&x, &y).unwrap() - snr).abs());
    }
    let shifted =
        median_f0(&harmonic_shift(&buffer(tone(220.0, 0.5, SR, SR as usize)), 1.5).unwrap());
    outcome(
        worst <= 0.5 && (shifted - 330.0).abs() <= 1.0,
        format!("worst SNR deviation {worst:.3} dB over 100 draws, 220 Hz x1.5 -> {shifted:.2} Hz"),
    )
}

fn toy_training(
    full: &fagan::nets::TrainingReport,
    rerun_equal: bool,
    elapsed: Duration,
) -> Outcome {
    let ratio = full.final_metrics.mel / full.initial.mel;
    let trend = full.moving_average(2000, 100) < full.moving_average(200, 100);
    outcome(
        ratio <= 0.1 && rerun_equal && trend && elapsed <= Duration::from_secs(900),
        format!(
            "held-out mel {:.4} -> {:.4} (ratio {ratio:.4}), re-run identical: {rerun_equal}, loss trend down: {trend}, {:.0?}",
            full.initial.mel, full.final_metrics.mel, elapsed
        ),
    )
}

fn ablation_directions(full: &fagan::nets::TrainingReport, full_time: Duration) -> Outcome {
    let base = TrainConfig::default();
    let t = Instant::now();
    let plain = train_toy(&Ablation::TwinDeconv.apply(&base)).unwrap();
    let plain_time = t.elapsed();
    let t = Instant::now();
    let no_ri = train_toy(&Ablation::MrRi.apply(&base)).unwrap();
    let no_ri_time = t.elapsed();
    let a = plain.final_metrics.lsd_high >= full.final_metrics.lsd_high;
    let b = no_ri.final_metrics.lsd > full.final_metrics.lsd;
    let budget = Duration::from_secs(1800);
    outcome(
        a && b && full_time + plain_time <= budget && full_time + no_ri_time <= budget,
        format!(
            "(a) high-band LSD plain {:.4} vs twin {:.4}; (b) LSD without MR-RI {:.4} vs full {:.4}; pairs {:.0?} / {:.0?}",
            plain.final_metrics.lsd_high,
            full.final_metrics.lsd_high,
            no_ri.final_metrics.lsd,
            full.final_metrics.lsd,
            full_time + plain_time,
            full_time + no_ri_time
        ),
    )
}

fn adversarial_mode() -> Outcome {
    let cfg = TrainConfig {
        mode: TrainMode::Adversarial,
        steps: 500,
        batch_size: 1,
        held_out: 2,
        ..Default::default()
    };
    let t = Instant::now();
    let run = train_toy(&cfg);
    let elapsed = t.elapsed();
    let finite = match &run {
        Ok(r) => {
            r.steps.len() == 500
                && r.steps
                    .iter()
                    .all(|s| s.total.is_finite() && s.adv_d.is_finite())
        }
        Err(_) => false,
    };
    let ones = vec![vec![1.0; 5]; 6];
    let zeros = vec![vec![0.0; 5]; 6];
    let perfect = adversarial_losses(&ones, &zeros).unwrap();
    let fooled = adversarial_losses(&ones, &ones).unwrap();
    let scalar = adversarial_losses(&[vec![0.8]], &[vec![0.3]]).unwrap();
    let lsgan = perfect.d_loss == 0.0
        && perfect.g_loss == 6.0
        && fooled.g_loss == 0.0
        && (scalar.d_loss - 0.13).abs() <= 1e-12
        && (scalar.g_loss - 0.49).abs() <= 1e-12;
    outcome(
        finite && lsgan,
        format!(
            "500 steps finite: {finite}{}, LSGAN identities: {lsgan}, {:.0?}",
            run.as_ref()
                .err()
                .map(|e| format!(" ({e})"))
                .unwrap_or_default(),
            elapsed
        ),
    )
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    let mut record = |n: &str, name: &str, o: Outcome| {
        let line = format!(
            "[{}] {n:>2}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        writeln!(std::io::stdout(), "{line}").unwrap();
        lines.push((o.pass, line));
    };
    record("1", "gradient correctness", gradient_correctness());
    record("2", "twin-deconvolution flatness", twin_flatness());
    record("3", "aliasing suppression", aliasing_suppression());
    record("4", "PQMF round trip", pqmf_round_trip());
    record("5", "STFT round trip and mel gain law", stft_and_mel());
    record("6", "loss identities", loss_identities());
    record("7", "metric identities", metric_identities());

    let t = Instant::now();
    let full = train_toy(&TrainConfig::default()).unwrap();
    let full_time = t.elapsed();
    let rerun = train_toy(&TrainConfig::default()).unwrap();
    record(
        "8",
        "toy training",
        toy_training(&full, rerun == full, full_time),
    );
    record(
        "9",
        "ablation directions",
        ablation_directions(&full, full_time),
    );
    record("10", "augmentation contracts", augmentation());
    record("11", "adversarial toy mode", adversarial_mode());

    let failed: Vec<&String> = lines.iter().filter(|(p, _)| !p).map(|(_, l)| l).collect();
    assert!(
        failed.is_empty(),
        "failing criteria:\n{}",
        failed
            .iter()
            .map(|l| l.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
