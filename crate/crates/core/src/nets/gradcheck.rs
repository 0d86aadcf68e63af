//! Central finite-difference verification of every analytic gradient.
//!
//! A cell that fails the three-point central difference is re-measured with
//! the five-point central stencil before it is judged.
//!
//! A cell whose central difference disagrees with the analytic value is
//! counted as a kink crossing, and skipped, only when the two one-sided
//! differences disagree with each other and one of them matches the analytic
//! value. Anything else counts towards the reported maximum error.
//!
//! The end-to-end generator check evaluates its real/imaginary loss head as a
//! compensated double-double total, so that differences of nearby loss values
//! keep their low-order digits, and fingerprints the sign pattern of every L1
//! argument: a stencil over which that pattern changes straddles a kink and
//! the cell is skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::generator::{GeneratorConfig, ToyGenerator};
use super::layers::{Layer, LayerKind, LayerSpec};
use super::tensor::Tensor;
use crate::error::Result;
use crate::losses::{MelLoss, RiLoss};
use crate::signal::{ComplexSpectrogram, MelConfig, StftConfig};
use crate::upsample::TwinMode;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;
const ONE_SIDED_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub label: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// One objective evaluation: a double-double value and a fingerprint of the L1 sign pattern.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Probe {
    hi: f64,
    lo: f64,
    kinks: u64,
}

impl From<f64> for Probe {
    fn from(v: f64) -> Self {
        Self {
            hi: v,
            lo: 0.0,
            kinks: 0,
        }
    }
}

impl Probe {
    fn minus(self, other: Probe) -> f64 {
        (self.hi - other.hi) + (self.lo - other.lo)
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Double-double accumulator.
#[derive(Clone, Copy, Debug, Default)]
struct Dd(f64, f64);

impl Dd {
    fn add(self, v: f64) -> Dd {
        let (s, e) = two_sum(self.0, v);
        let (hi, lo) = two_sum(s, e + self.1);
        Dd(hi, lo)
    }

    fn add_dd(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.0, o.0);
        let (hi, lo) = two_sum(s, e + self.1 + o.1);
        Dd(hi, lo)
    }

    fn div(self, o: Dd) -> Dd {
        let q = self.0 / o.0;
        let r = (-q).mul_add(o.0, self.0) + self.1 - q * o.1;
        let (hi, lo) = two_sum(q, r / o.0);
        Dd(hi, lo)
    }

    fn sqrt(self) -> Dd {
        if self.0 <= 0.0 {
            return Dd(0.0, 0.0);
        }
        let s = self.0.sqrt();
        let r = (-s).mul_add(s, self.0) + self.1;
        let (hi, lo) = two_sum(s, r / (2.0 * s));
        Dd(hi, lo)
    }
}

/// Exact product `a * b` as a double-double.
fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd(p, a.mul_add(b, -p))
}

fn fold_sign(h: u64, v: f64) -> u64 {
    let bit = if v > 0.0 {
        1
    } else if v < 0.0 {
        2
    } else {
        3
    };
    (h ^ bit).wrapping_mul(0x0100_0000_01b3)
}

/// Real/imaginary loss total of `shat` against `s` in double-double arithmetic, with the L1 sign fingerprint.
fn precise_ri_total(s: &ComplexSpectrogram, shat: &ComplexSpectrogram) -> Probe {
    let (mut re, mut im, mut mag) = (Dd::default(), Dd::default(), Dd::default());
    let (mut num, mut den) = (Dd::default(), Dd::default());
    let mut kinks = 0xcbf2_9ce4_8422_2325u64;
    for i in 0..s.real.len() {
        let (r, j) = (s.real[i], s.imag[i]);
        let (rh, jh) = (shat.real[i], shat.imag[i]);
        let (dr, dr_lo) = two_sum(rh, -r);
        let (di, di_lo) = two_sum(jh, -j);
        let dm = rh.hypot(jh) - r.hypot(j);
        kinks = fold_sign(fold_sign(fold_sign(kinks, dr), di), dm);
        let bin = i % shat.bins;
        if bin == 0 || bin == shat.bins - 1 {
            kinks = fold_sign(kinks, rh);
        }
        re = re.add(dr.abs()).add(dr_lo * dr.signum());
        im = im.add(di.abs()).add(di_lo * di.signum());
        mag = mag.add(dm.abs());
        num = num.add_dd(two_prod(dr, dr)).add(2.0 * dr * dr_lo);
        num = num.add_dd(two_prod(di, di)).add(2.0 * di * di_lo);
        den = den.add_dd(two_prod(r, r)).add_dd(two_prod(j, j));
    }
    let n = Dd(s.real.len() as f64, 0.0);
    let mut total = re.div(n).add_dd(im.div(n)).add_dd(mag.div(n));
    if den.0 > 0.0 {
        total = total.add_dd(num.div(den).sqrt());
    }
    Probe {
        hi: total.0,
        lo: total.1,
        kinks,
    }
}

/// Compares `analytic[i]` with central differences of `eval(i, delta)`, the loss with cell `i` shifted by `delta`.
fn check_cells<P: Into<Probe>>(
    label: String,
    eps: f64,
    analytic: &[f64],
    mut eval: impl FnMut(Option<(usize, f64)>) -> Result<P>,
) -> Result<GradCheckReport> {
    let mut eval = move |cell| eval(cell).map(Into::<Probe>::into);
    let base = eval(None)?;
    let mut report = GradCheckReport {
        label,
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let plus = eval(Some((i, eps)))?;
        let minus = eval(Some((i, -eps)))?;
        let central = plus.minus(minus) / (2.0 * eps);
        let mut rel = relative_error(a, central);
        let mut straddles = plus.kinks != base.kinks || minus.kinks != base.kinks;
        if rel > GRAD_TOLERANCE {
            // Near a stationary point the O(eps^2) truncation term dominates; the five-point stencil removes it.
            let plus2 = eval(Some((i, 2.0 * eps)))?;
            let minus2 = eval(Some((i, -2.0 * eps)))?;
            let five_point = (8.0 * plus.minus(minus) - plus2.minus(minus2)) / (12.0 * eps);
            rel = rel.min(relative_error(a, five_point));
            straddles = straddles || plus2.kinks != base.kinks || minus2.kinks != base.kinks;
        }
        if rel > GRAD_TOLERANCE {
            let fwd = plus.minus(base) / eps;
            let bwd = base.minus(minus) / eps;
            let kink = straddles
                || relative_error(fwd, bwd) > GRAD_TOLERANCE
                    && relative_error(a, fwd).min(relative_error(a, bwd)) <= ONE_SIDED_TOLERANCE;
            if kink {
                report.skipped_kinks += 1;
                continue;
            }
        }
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(rel);
    }
    Ok(report)
}

fn uniform(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn param_cell(params: Vec<&mut Tensor>, mut j: usize) -> &mut f64 {
    for p in params {
        if j < p.len() {
            return &mut p.data_mut()[j];
        }
        j -= p.len();
    }
    panic!("cell index beyond the parameter count");
}

/// Neumaier-compensated dot product, so unperturbed terms cancel in differences.
fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let v = x * y;
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn layer_objective(layer: &Layer, x: &Tensor, r: &[f64]) -> Result<f64> {
    Ok(compensated_dot(layer.forward(x)?.data(), r))
}

/// Checks input and parameter gradients of one layer under a random linear objective.
pub fn grad_check_layer(
    label: &str,
    spec: LayerSpec,
    input_shape: &[usize],
    seed: u64,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Layer::new(spec.with_seed(seed))?;
    if let Some(b) = layer.bias.as_mut() {
        let v = uniform(b.len(), 0.5, &mut rng);
        b.data_mut().copy_from_slice(&v);
    }
    let n: usize = input_shape.iter().product();
    let mut x = Tensor::new(input_shape.to_vec(), uniform(n, 1.0, &mut rng))?;
    let out_len: usize = spec.output_shape(input_shape)?.iter().product();
    let r = uniform(out_len, 1.0, &mut rng);

    let mut analytic = layer.backward(&x, &r)?;
    for p in layer.params() {
        analytic.extend_from_slice(p.grad());
    }
    check_cells(label.to_string(), eps, &analytic, |cell| {
        let Some((i, d)) = cell else {
            return layer_objective(&layer, &x, &r);
        };
        if i < n {
            let old = x.data()[i];
            x.data_mut()[i] = old + d;
            let l = layer_objective(&layer, &x, &r);
            x.data_mut()[i] = old;
            l
        } else {
            let old = *param_cell(layer.params_mut(), i - n);
            *param_cell(layer.params_mut(), i - n) = old + d;
            let l = layer_objective(&layer, &x, &r);
            *param_cell(layer.params_mut(), i - n) = old;
            l
        }
    })
}

/// One representative configuration per layer kind, all dimensions at most 32.
pub fn layer_cases() -> Vec<(&'static str, LayerSpec, Vec<usize>)> {
    vec![
        ("conv1d", LayerSpec::conv1d(3, 4, 5, 2), vec![3, 20]),
        (
            "conv1d_strided",
            LayerSpec::strided_conv1d(3, 2, 5, 2),
            vec![3, 17],
        ),
        ("tconv1d", LayerSpec::tconv1d(3, 2, 8, 4), vec![3, 6]),
        (
            "twin_tconv1d_ones",
            LayerSpec::twin_tconv1d(3, 2, 8, 4, TwinMode::Ones),
            vec![3, 6],
        ),
        (
            "twin_tconv1d_abs_weight",
            LayerSpec::twin_tconv1d(3, 2, 9, 4, TwinMode::AbsWeight),
            vec![3, 6],
        ),
        ("dense", LayerSpec::dense(12, 5), vec![12]),
        (
            "snake",
            LayerSpec::activation(LayerKind::Snake, 2),
            vec![2, 16],
        ),
        (
            "leaky_relu",
            LayerSpec::activation(LayerKind::LeakyRelu, 2),
            vec![2, 16],
        ),
        (
            "tanh",
            LayerSpec::activation(LayerKind::Tanh, 2),
            vec![2, 16],
        ),
        (
            "conv2d",
            LayerSpec::conv2d(2, 3, (3, 5), (2, 2)),
            vec![2, 7, 11],
        ),
    ]
}

/// Toy generator followed by a single-resolution real/imaginary loss against a random target.
pub fn grad_check_generator(
    config: GeneratorConfig,
    input_len: usize,
    seed: u64,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ToyGenerator::new(config)?;
    let mut x = uniform(input_len, 0.5, &mut rng);
    let out_len = input_len * g.config().upsampling_factor();
    let target = uniform(out_len, 0.5, &mut rng);
    let loss = RiLoss::new(StftConfig::new(256, 256, 64))?;
    let reference = loss.reference(&target)?;

    let trace = g.forward_trace(&x)?;
    let (_, dy) = loss.evaluate_with_grad(&reference, trace.output())?;
    let mut analytic = g.backward(&trace, &dy)?;
    for (_, p) in g.named_params() {
        analytic.extend_from_slice(p.grad());
    }
    let n = x.len();
    let objective = |g: &ToyGenerator, x: &[f64]| -> Result<Probe> {
        Ok(precise_ri_total(
            &reference,
            &loss.reference(&g.forward(x)?)?,
        ))
    };
    check_cells("generator+ri_loss".into(), eps, &analytic, |cell| {
        let Some((i, d)) = cell else {
            return objective(&g, &x);
        };
        if i < n {
            let old = x[i];
            x[i] = old + d;
            let l = objective(&g, &x);
            x[i] = old;
            return l;
        }
        let old = *param_cell(g.params_mut(), i - n);
        *param_cell(g.params_mut(), i - n) = old + d;
        let l = objective(&g, &x);
        *param_cell(g.params_mut(), i - n) = old;
        l
    })
}

fn check_signal_loss(
    label: &str,
    eps: f64,
    mut xhat: Vec<f64>,
    analytic: Vec<f64>,
    objective: impl Fn(&[f64]) -> Result<f64>,
) -> Result<GradCheckReport> {
    check_cells(label.into(), eps, &analytic, |cell| {
        let Some((i, d)) = cell else {
            return objective(&xhat);
        };
        let old = xhat[i];
        xhat[i] = old + d;
        let l = objective(&xhat);
        xhat[i] = old;
        l
    })
}

/// Gradient of the real/imaginary loss w.r.t. a 64-sample estimate.
pub fn grad_check_ri_loss(seed: u64, eps: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(64, 0.5, &mut rng);
    let xhat = uniform(64, 0.5, &mut rng);
    let loss = RiLoss::new(StftConfig::new(32, 32, 8))?;
    let (_, grad) = loss.evaluate_with_grad(&loss.reference(&x)?, &xhat)?;
    check_signal_loss("ri_loss", eps, xhat, grad, |v| {
        Ok(loss.evaluate(&x, v)?.total)
    })
}

/// Gradient of the log-mel L1 loss w.r.t. a 64-sample estimate.
pub fn grad_check_mel_loss(seed: u64, eps: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(64, 0.5, &mut rng);
    let xhat = uniform(64, 0.5, &mut rng);
    let cfg = MelConfig {
        stft: StftConfig::new(32, 32, 8),
        n_mels: 8,
        fmin: 0.0,
        fmax: None,
    };
    let loss = MelLoss::new(&cfg, 22050)?;
    let reference = loss.analyzer().log_mel(&x)?.values;
    let (_, grad) = loss.evaluate_with_grad(&reference, &xhat)?;
    check_signal_loss("mel_loss", eps, xhat, grad, |v| loss.evaluate(&x, v))
}

/// Every layer kind, both losses and the end-to-end generator at one seed.
pub fn grad_check(seed: u64, eps: f64) -> Result<Vec<GradCheckReport>> {
    let mut out = Vec::new();
    for (label, spec, shape) in layer_cases() {
        out.push(grad_check_layer(label, spec, &shape, seed, eps)?);
    }
    out.push(grad_check_ri_loss(seed, eps)?);
    out.push(grad_check_mel_loss(seed, eps)?);
    out.push(grad_check_generator(
        GeneratorConfig::default(),
        64,
        seed,
        eps,
    )?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_conv_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = Layer::new(LayerSpec::conv1d(1, 1, 3, 1)).unwrap();
        layer.weight = Some(Tensor::new(vec![1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap());
        let x = Tensor::new(vec![1, 8], uniform(8, 1.0, &mut rng)).unwrap();
        let r = uniform(8, 1.0, &mut rng);
        let analytic = layer.backward(&x, &r).unwrap();
        let mut xv = x.data().to_vec();
        let rep = check_cells("identity".into(), DEFAULT_EPS, &analytic, |cell| {
            if let Some((i, d)) = cell {
                xv[i] += d;
            }
            let t = Tensor::new(vec![1, 8], xv.clone()).unwrap();
            let l = layer_objective(&layer, &t, &r);
            xv.copy_from_slice(x.data());
            l
        })
        .unwrap();
        assert!(rep.max_rel_error <= 1e-10, "{rep:?}");
    }

    #[test]
    fn precise_total_matches_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = uniform(600, 0.5, &mut rng);
        let y = uniform(600, 0.5, &mut rng);
        let loss = RiLoss::new(StftConfig::new(128, 128, 32)).unwrap();
        let direct = loss.evaluate(&x, &y).unwrap().total;
        let p = precise_ri_total(&loss.reference(&x).unwrap(), &loss.reference(&y).unwrap());
        assert!(
            (p.hi + p.lo - direct).abs() <= 1e-12 * direct,
            "{} vs {direct}",
            p.hi
        );
    }

    #[test]
    fn every_layer_kind_over_seeds() {
        for seed in 0..20 {
            for (label, spec, shape) in layer_cases() {
                let r = grad_check_layer(label, spec, &shape, seed, DEFAULT_EPS).unwrap();
                assert!(r.passes(GRAD_TOLERANCE), "seed {seed}: {r:?}");
                assert!(r.skipped_kinks * 100 <= r.checked, "{r:?}");
            }
        }
    }

    #[test]
    fn snake_is_near_exact() {
        let (label, spec, shape) = layer_cases().into_iter().find(|c| c.0 == "snake").unwrap();
        let r = grad_check_layer(label, spec, &shape, 0, DEFAULT_EPS).unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn loss_gradients() {
        for seed in 0..3 {
            for r in [
                grad_check_ri_loss(seed, DEFAULT_EPS).unwrap(),
                grad_check_mel_loss(seed, DEFAULT_EPS).unwrap(),
            ] {
                assert!(r.passes(GRAD_TOLERANCE), "{r:?}");
                assert!(r.checked >= 60, "{r:?}");
            }
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}
