//! Reference (non-learned) upsampling arithmetic.
//!
//! The trainable layers in [`crate::nets`] are checked against these
//! functions, so they favour clarity over speed.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// How the twin branch of a twin deconvolution is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum TwinMode {
    /// Plain transposed convolution, no normalisation.
    None,
    /// Divide by the overlap count: ones input through an all-ones kernel.
    #[default]
    Ones,
    /// Divide by the transposed convolution of a ones input with `|kernel|`.
    AbsWeight,
}

/// Below this the twin denominator is treated as a degenerate kernel.
pub const TWIN_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DeconvSpec {
    pub kernel: Vec<f64>,
    pub stride: usize,
    pub twin_mode: TwinMode,
}

impl DeconvSpec {
    pub fn new(kernel: Vec<f64>, stride: usize, twin_mode: TwinMode) -> Result<Self> {
        let spec = Self {
            kernel,
            stride,
            twin_mode,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if self.kernel.len() < self.stride {
            return Err(Error::InvalidConfig(format!(
                "kernel length {} shorter than stride {}",
                self.kernel.len(),
                self.stride
            )));
        }
        Ok(())
    }
}

pub fn transposed_output_len(input_len: usize, kernel_len: usize, stride: usize) -> usize {
    (input_len - 1) * stride + kernel_len
}

/// `out[j] = sum_i x[i] * k[j - i*stride]`, full length `(n-1)*stride + k`.
pub fn transposed_conv1d(x: &[f64], kernel: &[f64], stride: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("transposed convolution input"));
    }
    if stride == 0 || kernel.is_empty() {
        return Err(Error::InvalidConfig(
            "stride and kernel must be non-empty".into(),
        ));
    }
    let mut out = vec![0.0; transposed_output_len(x.len(), kernel.len(), stride)];
    for (i, &xi) in x.iter().enumerate() {
        let base = i * stride;
        for (t, &k) in kernel.iter().enumerate() {
            out[base + t] += xi * k;
        }
    }
    Ok(out)
}

/// The twin branch alone: the per-position normaliser for an input of `len` samples.
pub fn twin_denominator(len: usize, spec: &DeconvSpec) -> Result<Vec<f64>> {
    let ones = vec![1.0; len];
    match spec.twin_mode {
        TwinMode::None => Ok(vec![
            1.0;
            transposed_output_len(
                len,
                spec.kernel.len(),
                spec.stride
            )
        ]),
        TwinMode::Ones => transposed_conv1d(&ones, &vec![1.0; spec.kernel.len()], spec.stride),
        TwinMode::AbsWeight => {
            let abs: Vec<f64> = spec.kernel.iter().map(|k| k.abs()).collect();
            transposed_conv1d(&ones, &abs, spec.stride)
        }
    }
}

/// Transposed convolution divided elementwise by its twin branch.
pub fn twin_deconv(x: &[f64], spec: &DeconvSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.twin_mode == TwinMode::None {
        return Err(Error::InvalidConfig("twin_deconv needs a twin mode".into()));
    }
    let num = transposed_conv1d(x, &spec.kernel, spec.stride)?;
    let den = twin_denominator(x.len(), spec)?;
    num.iter()
        .zip(&den)
        .enumerate()
        .map(|(j, (n, d))| {
            if d.abs() < TWIN_EPS {
                Err(Error::DegenerateKernel {
                    position: j,
                    value: *d,
                })
            } else {
                Ok(n / d)
            }
        })
        .collect()
}

/// Centered crop of a full transposed-conv output to exactly `input_len * stride` samples.
pub fn crop_centered(full: &[f64], input_len: usize, stride: usize) -> Vec<f64> {
    let want = input_len * stride;
    let off = (full.len().saturating_sub(want)) / 2;
    full[off..off + want.min(full.len() - off)].to_vec()
}

/// `x + sin^2(x)`.
#[inline]
pub fn snake_scalar(x: f64) -> f64 {
    let s = x.sin();
    x + s * s
}

/// Derivative `1 + sin(2x)`.
#[inline]
pub fn snake_derivative(x: f64) -> f64 {
    1.0 + (2.0 * x).sin()
}

pub fn snake(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| snake_scalar(v)).collect()
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

pub fn kaiser_window(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let r = 2.0 * i as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Symmetric FIR low-pass.
#[derive(Clone, Debug, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    /// Normalised cutoff in cycles/sample, in (0, 0.5).
    pub cutoff: f64,
}

/// Kaiser-windowed sinc with unit DC gain. Taps are mirror-symmetric by construction.
pub fn design_lowpass(cutoff: f64, num_taps: usize, kaiser_beta: f64) -> Result<FirFilter> {
    if !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "cutoff {cutoff} outside (0, 0.5)"
        )));
    }
    if num_taps == 0 || num_taps % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "num_taps {num_taps} must be odd"
        )));
    }
    let taps = windowed_sinc(cutoff, num_taps, kaiser_beta);
    Ok(FirFilter { taps, cutoff })
}

/// Kaiser-windowed sinc of any length, normalised to unit DC gain.
pub(crate) fn windowed_sinc(cutoff: f64, num_taps: usize, kaiser_beta: f64) -> Vec<f64> {
    let window = kaiser_window(num_taps, kaiser_beta);
    let center = (num_taps - 1) as f64 / 2.0;
    let half = num_taps / 2;
    let mut taps = vec![0.0; num_taps];
    // Fill one half and mirror so symmetry is exact.
    for i in 0..num_taps - half {
        let t = i as f64 - center;
        let sinc = if t == 0.0 {
            2.0 * cutoff
        } else {
            (2.0 * PI * cutoff * t).sin() / (PI * t)
        };
        taps[i] = sinc * window[i];
    }
    for i in 0..half {
        taps[num_taps - 1 - i] = taps[i];
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Reflect index into `0..len` (no edge repetition).
pub(crate) fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Zero-phase filtering with reflect-padded edges; output length equals input length.
pub fn apply_fir(x: &[f64], filter: &FirFilter) -> Vec<f64> {
    let half = (filter.taps.len() / 2) as isize;
    (0..x.len() as isize)
        .map(|n| {
            filter
                .taps
                .iter()
                .enumerate()
                .map(|(t, &h)| h * x[reflect(n + half - t as isize, x.len())])
                .sum()
        })
        .collect()
}

/// Same-length dilated convolution with zero padding (cross-correlation form).
pub fn conv1d_same(x: &[f64], kernel: &[f64], dilation: usize) -> Vec<f64> {
    let k = kernel.len() as isize;
    let pad = dilation as isize * (k - 1) / 2;
    (0..x.len() as isize)
        .map(|n| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(t, &w)| {
                    let idx = n - pad + t as isize * dilation as isize;
                    (idx >= 0 && (idx as usize) < x.len()).then(|| w * x[idx as usize])
                })
                .sum()
        })
        .collect()
}

/// Residual stack `x <- x + conv_d(snake(x))` over the given dilations.
///
/// `kernels[i]` is used with `dilations[i]`; kernel lengths must be odd.
pub fn amp_block(x: &[f64], dilations: &[usize], kernels: &[Vec<f64>]) -> Result<Vec<f64>> {
    if dilations.is_empty() {
        return Err(Error::InvalidConfig(
            "AMP block needs at least one dilation".into(),
        ));
    }
    if kernels.len() != dilations.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} kernels for {} dilations",
            kernels.len(),
            dilations.len()
        )));
    }
    let mut y = x.to_vec();
    for (&d, k) in dilations.iter().zip(kernels) {
        if k.len() % 2 == 0 || d == 0 {
            return Err(Error::InvalidConfig(
                "AMP kernels need odd length and dilation >= 1".into(),
            ));
        }
        let branch = conv1d_same(&snake(&y), k, d);
        y.iter_mut().zip(branch).for_each(|(a, b)| *a += b);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlap_enumeration_example() {
        let y = transposed_conv1d(&[1.0, 1.0, 1.0], &[1.0; 4], 2).unwrap();
        assert_eq!(y, vec![1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn transposed_conv_trivial_cases() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(transposed_conv1d(&x, &[1.0], 1).unwrap(), x.to_vec());
        let k = [0.5, -0.25, 2.0];
        assert_eq!(transposed_conv1d(&[1.0], &k, 3).unwrap(), k.to_vec());
        assert!(transposed_conv1d(&[], &k, 2).is_err());
    }

    #[test]
    fn twin_divides_out_overlap() {
        let spec = DeconvSpec::new(vec![1.0; 4], 2, TwinMode::Ones).unwrap();
        assert_eq!(twin_deconv(&[1.0, 1.0, 1.0], &spec).unwrap(), vec![1.0; 8]);
    }

    #[test]
    fn twin_without_overlap_matches_plain() {
        let k = vec![0.4, -0.7, 1.1];
        let x = [0.2, 0.9, -0.5, 0.1];
        let spec = DeconvSpec::new(k.clone(), 3, TwinMode::Ones).unwrap();
        assert_eq!(
            twin_deconv(&x, &spec).unwrap(),
            transposed_conv1d(&x, &k, 3).unwrap()
        );
    }

    #[test]
    fn twin_degenerate_kernel() {
        let spec = DeconvSpec::new(vec![0.0, 1.0, 0.0, 1.0], 2, TwinMode::AbsWeight).unwrap();
        assert!(matches!(
            twin_deconv(&[1.0, 2.0], &spec),
            Err(Error::DegenerateKernel { position: 0, .. })
        ));
        assert!(DeconvSpec::new(vec![1.0], 2, TwinMode::Ones).is_err());
    }

    #[test]
    fn flatness_grid() {
        for s in [2usize, 3, 4, 8] {
            for l in [s, 2 * s, 2 * s + 1] {
                let spec = DeconvSpec::new(vec![0.7; l], s, TwinMode::Ones).unwrap();
                let x = vec![1.3; 9];
                let y = twin_deconv(&x, &spec).unwrap();
                assert!(y.iter().all(|v| (v - 0.7 * 1.3).abs() < 1e-12));
                let plain = transposed_conv1d(&x, &spec.kernel, s).unwrap();
                let counts = twin_denominator(x.len(), &spec).unwrap();
                let spread = |v: &[f64]| {
                    let (lo, hi) = v
                        .iter()
                        .fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
                    hi - lo
                };
                assert_eq!(
                    spread(&plain) > 0.0,
                    spread(&counts) > 0.0,
                    "stride {s} kernel {l}"
                );
            }
        }
    }

    #[test]
    fn snake_values() {
        assert_eq!(snake_scalar(0.0), 0.0);
        assert!((snake_scalar(PI) - PI).abs() < 1e-15);
        assert!((snake_scalar(PI / 2.0) - (PI / 2.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn lowpass_contract() {
        let f = design_lowpass(0.25, 127, 9.0).unwrap();
        for i in 0..f.taps.len() {
            assert_eq!(f.taps[i], f.taps[f.taps.len() - 1 - i]);
        }
        let dc = apply_fir(&vec![1.0; 300], &f);
        assert!(dc.iter().all(|v| (v - 1.0).abs() < 1e-6));

        let n = 4000;
        let tone: Vec<f64> = (0..n).map(|i| (2.0 * PI * 0.45 * i as f64).sin()).collect();
        let out = apply_fir(&tone, &f);
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        let inner = 200..n - 200;
        let att = 20.0 * (rms(&out[inner.clone()]) / rms(&tone[inner])).log10();
        assert!(att <= -60.0, "attenuation {att}");

        assert!(design_lowpass(0.5, 11, 9.0).is_err());
        assert!(design_lowpass(0.2, 10, 9.0).is_err());
    }

    #[test]
    fn amp_block_cases() {
        let x = [0.1, -0.4, 0.9, 1.7, -2.2];
        assert_eq!(
            amp_block(&x, &[1, 3], &[vec![0.0; 3], vec![0.0; 3]]).unwrap(),
            x.to_vec()
        );
        let y = amp_block(&x, &[1], &[vec![0.0, 1.0, 0.0]]).unwrap();
        for (a, b) in x.iter().zip(&y) {
            let s = a.sin();
            assert!((b - (a + a + s * s)).abs() < 1e-15);
        }
        let z = amp_block(&x, &[1, 3, 5], &[vec![0.2; 3], vec![-0.1; 5], vec![0.3; 3]]).unwrap();
        assert_eq!(z.len(), x.len());
        assert!(amp_block(&x, &[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn snake_shift_by_pi(x in -50.0f64..50.0) {
            prop_assert!((snake_scalar(x + PI) - (snake_scalar(x) + PI)).abs() < 1e-9);
        }

        #[test]
        fn snake_is_monotone(mut xs in prop::collection::vec(-20.0f64..20.0, 2..40)) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let ys = snake(&xs);
            for w in ys.windows(2) {
                prop_assert!(w[0] <= w[1] + 1e-12);
            }
        }

        #[test]
        fn constant_kernel_twin_is_flat(s in 1usize..9, extra in 0usize..12, v in -3.0f64..3.0, c in 0.1f64..2.0) {
            let l = s + extra;
            let spec = DeconvSpec::new(vec![c; l], s, TwinMode::Ones).unwrap();
            let y = twin_deconv(&vec![v; 7], &spec).unwrap();
            for o in y {
                prop_assert!((o - c * v).abs() < 1e-12);
            }
        }
    }
}
