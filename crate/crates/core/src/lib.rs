//! Numerical core of an anti-aliased, phase-aware GAN vocoder.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: WAV I/O, STFT/iSTFT and log-mel analysis in double precision.
//! - [`upsample`]: reference transposed convolution, twin deconvolution, snake
//!   activation, Kaiser low-pass design and the AMP residual block.
//! - [`subband`]: cosine-modulated PQMF analysis/synthesis and L/M/H grouping.
//! - [`losses`]: real/imaginary spectral loss, its multi-resolution mean, mel,
//!   least-squares adversarial and feature-matching terms.
//! - [`nets`]: a small manual-backprop layer library, the toy generator and
//!   discriminators, Adam, finite-difference checking and the toy trainer.
//! - [`metrics`] and [`augment`]: MCD, LSD, F0 RMSE, aliasing energy and the
//!   noise / pitch / codec augmentations.
//! - [`cli`]: the command implementations behind the `fagan` binary.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod augment;
pub mod cli;
pub mod config;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod signal;
pub mod subband;
pub mod upsample;

pub use error::{Error, Result};
pub use signal::{AudioBuffer, ComplexSpectrogram, MelSpectrogram, StftConfig, WindowKind};
