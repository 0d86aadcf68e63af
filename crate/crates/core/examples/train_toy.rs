//! Short regression run of the toy generator on the synthetic chirp corpus.
//!
//! `cargo run --release --example train_toy -- 200`

use std::time::Instant;

use fagan::nets::{train_toy_with_progress, TrainConfig};

fn main() -> anyhow::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(200);
    let cfg = TrainConfig {
        steps,
        ..Default::default()
    };
    let start = Instant::now();
    let report = train_toy_with_progress(&cfg, |r| {
        if r.step % 50 == 0 {
            println!(
                "step {:5}  total {:.4}  mel {:.4}  mr_ri {:.4}",
                r.step, r.total, r.mel, r.mr_ri
            );
        }
    })?;
    println!(
        "held-out mel {:.4} -> {:.4} (ratio {:.3}) in {:.1?}",
        report.initial.mel,
        report.final_metrics.mel,
        report.final_metrics.mel / report.initial.mel,
        start.elapsed()
    );
    Ok(())
}
