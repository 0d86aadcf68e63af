//! Finite-difference check of every layer kind, both spectral losses and the toy generator.
//!
//! `cargo run --release --example grad_check`

use fagan::nets::{grad_check, DEFAULT_EPS, GRAD_TOLERANCE};

fn main() -> anyhow::Result<()> {
    println!(
        "{:28} {:>12} {:>8} {:>6}",
        "case", "max rel err", "cells", "kinks"
    );
    for r in grad_check(0, DEFAULT_EPS)? {
        println!(
            "{:28} {:12.3e} {:8} {:6} {}",
            r.label,
            r.max_rel_error,
            r.checked,
            r.skipped_kinks,
            if r.passes(GRAD_TOLERANCE) {
                "ok"
            } else {
                "FAIL"
            }
        );
    }
    Ok(())
}
