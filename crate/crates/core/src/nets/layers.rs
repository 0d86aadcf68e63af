use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::upsample::{snake_derivative, snake_scalar, TwinMode, TWIN_EPS};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv1d,
    Tconv1d,
    TwinTconv1d,
    Dense,
    Snake,
    LeakyRelu,
    Tanh,
    /// 2-D convolution over `[channels, time, frequency]`, used by the spectrogram discriminators.
    Conv2d,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv1d,
        LayerKind::Tconv1d,
        LayerKind::TwinTconv1d,
        LayerKind::Dense,
        LayerKind::Snake,
        LayerKind::LeakyRelu,
        LayerKind::Tanh,
        LayerKind::Conv2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::Tconv1d => "tconv1d",
            LayerKind::TwinTconv1d => "twin_tconv1d",
            LayerKind::Dense => "dense",
            LayerKind::Snake => "snake",
            LayerKind::LeakyRelu => "leaky_relu",
            LayerKind::Tanh => "tanh",
            LayerKind::Conv2d => "conv2d",
        }
    }

    pub fn has_params(self) -> bool {
        !matches!(
            self,
            LayerKind::Snake | LayerKind::LeakyRelu | LayerKind::Tanh
        )
    }
}

/// Hyper-parameters of one layer. The `freq_*` fields only apply to [`LayerKind::Conv2d`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub freq_kernel: usize,
    pub freq_stride: usize,
    pub twin_mode: TwinMode,
    pub init_seed: u64,
}

impl LayerSpec {
    fn base(kind: LayerKind, in_ch: usize, out_ch: usize) -> Self {
        Self {
            kind,
            in_ch,
            out_ch,
            kernel_size: 1,
            stride: 1,
            dilation: 1,
            freq_kernel: 1,
            freq_stride: 1,
            twin_mode: TwinMode::None,
            init_seed: 0,
        }
    }

    /// Stride-1 convolution with "same" zero padding.
    pub fn conv1d(in_ch: usize, out_ch: usize, kernel_size: usize, dilation: usize) -> Self {
        Self {
            kernel_size,
            dilation,
            ..Self::base(LayerKind::Conv1d, in_ch, out_ch)
        }
    }

    pub fn strided_conv1d(in_ch: usize, out_ch: usize, kernel_size: usize, stride: usize) -> Self {
        Self {
            kernel_size,
            stride,
            ..Self::base(LayerKind::Conv1d, in_ch, out_ch)
        }
    }

    pub fn tconv1d(in_ch: usize, out_ch: usize, kernel_size: usize, stride: usize) -> Self {
        Self {
            kernel_size,
            stride,
            ..Self::base(LayerKind::Tconv1d, in_ch, out_ch)
        }
    }

    pub fn twin_tconv1d(
        in_ch: usize,
        out_ch: usize,
        kernel_size: usize,
        stride: usize,
        twin_mode: TwinMode,
    ) -> Self {
        Self {
            kernel_size,
            stride,
            twin_mode,
            ..Self::base(LayerKind::TwinTconv1d, in_ch, out_ch)
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        Self::base(LayerKind::Dense, in_features, out_features)
    }

    pub fn activation(kind: LayerKind, channels: usize) -> Self {
        Self::base(kind, channels, channels)
    }

    pub fn conv2d(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Self {
        Self {
            kernel_size: kernel.0,
            stride: stride.0,
            freq_kernel: kernel.1,
            freq_stride: stride.1,
            ..Self::base(LayerKind::Conv2d, in_ch, out_ch)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.in_ch,
            self.out_ch,
            self.kernel_size,
            self.stride,
            self.dilation,
            self.freq_kernel,
            self.freq_stride,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "{}: all dimensions must be positive",
                self.kind.name()
            )));
        }
        match self.kind {
            LayerKind::Tconv1d | LayerKind::TwinTconv1d if self.kernel_size < self.stride => {
                Err(Error::InvalidConfig(format!(
                    "{}: kernel {} shorter than stride {}",
                    self.kind.name(),
                    self.kernel_size,
                    self.stride
                )))
            }
            LayerKind::TwinTconv1d if self.twin_mode == TwinMode::None => Err(
                Error::InvalidConfig("twin_tconv1d needs a twin mode".into()),
            ),
            LayerKind::Snake | LayerKind::LeakyRelu | LayerKind::Tanh
                if self.in_ch != self.out_ch =>
            {
                Err(Error::InvalidConfig(format!(
                    "{}: in and out channels differ",
                    self.kind.name()
                )))
            }
            _ => Ok(()),
        }
    }

    fn padding(&self) -> usize {
        self.dilation * (self.kernel_size - 1) / 2
    }

    fn freq_padding(&self) -> usize {
        (self.freq_kernel - 1) / 2
    }

    fn weight_shape(&self) -> Option<Vec<usize>> {
        match self.kind {
            LayerKind::Conv1d => Some(vec![self.out_ch, self.in_ch, self.kernel_size]),
            LayerKind::Tconv1d | LayerKind::TwinTconv1d => {
                Some(vec![self.in_ch, self.out_ch, self.kernel_size])
            }
            LayerKind::Dense => Some(vec![self.out_ch, self.in_ch]),
            LayerKind::Conv2d => Some(vec![
                self.out_ch * self.in_ch,
                self.kernel_size,
                self.freq_kernel,
            ]),
            _ => None,
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv2d => self.in_ch * self.kernel_size * self.freq_kernel,
            _ => self.in_ch * self.kernel_size,
        }
    }

    /// Output shape for a given input shape, or a shape error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let err = || {
            Error::ShapeMismatch(format!(
                "{} with {} input channels cannot take {input:?}",
                self.kind.name(),
                self.in_ch
            ))
        };
        match self.kind {
            LayerKind::Conv1d => {
                let [c, l] = input else { return Err(err()) };
                if *c != self.in_ch {
                    return Err(err());
                }
                let span = self.dilation * (self.kernel_size - 1) + 1;
                let padded = l + 2 * self.padding();
                if padded < span {
                    return Err(err());
                }
                Ok(vec![self.out_ch, (padded - span) / self.stride + 1])
            }
            LayerKind::Tconv1d | LayerKind::TwinTconv1d => {
                let [c, l] = input else { return Err(err()) };
                if *c != self.in_ch {
                    return Err(err());
                }
                Ok(vec![self.out_ch, l * self.stride])
            }
            LayerKind::Dense => {
                if input.iter().product::<usize>() != self.in_ch {
                    return Err(err());
                }
                Ok(vec![self.out_ch])
            }
            LayerKind::Snake | LayerKind::LeakyRelu | LayerKind::Tanh => Ok(input.to_vec()),
            LayerKind::Conv2d => {
                let [c, t, f] = input else { return Err(err()) };
                if *c != self.in_ch {
                    return Err(err());
                }
                let pt = t + 2 * self.padding();
                let pf = f + 2 * self.freq_padding();
                if pt < self.kernel_size || pf < self.freq_kernel {
                    return Err(err());
                }
                Ok(vec![
                    self.out_ch,
                    (pt - self.kernel_size) / self.stride + 1,
                    (pf - self.freq_kernel) / self.freq_stride + 1,
                ])
            }
        }
    }
}

/// Output positions `t` with `0 <= t*stride + offset < len_in`, clipped to `len_out`.
fn valid_range(offset: isize, stride: usize, len_in: usize, len_out: usize) -> Range<usize> {
    let s = stride as isize;
    let lo = if offset >= 0 {
        0
    } else {
        ((-offset + s - 1) / s) as usize
    };
    let last = len_in as isize - 1 - offset;
    let hi = if last < 0 { 0 } else { (last / s + 1) as usize };
    lo.min(len_out)..hi.min(len_out)
}

/// Dot product with four independent partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for q in 0..4 {
            acc[q] += x[q] * y[q];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Output start and kernel-tap range of input sample `t` in a cropped transposed convolution.
fn tap_window(
    t: usize,
    stride: usize,
    off: isize,
    kernel: usize,
    n: usize,
) -> (usize, Range<usize>) {
    let start = (t * stride) as isize - off;
    let j0 = (-start).max(0) as usize;
    let j1 = ((n as isize - start).max(0) as usize).min(kernel);
    let j0 = j0.min(j1);
    ((start + j0 as isize) as usize, j0..j1)
}

/// A layer with its parameters. Activation layers carry no parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

impl Layer {
    /// Weights drawn from uniform(-k, k), k = 1/sqrt(fan_in), seeded by `spec.init_seed`; biases zero.
    pub fn new(spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        let (weight, bias) = match spec.weight_shape() {
            Some(shape) => {
                let k = 1.0 / (spec.fan_in() as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
                let n = shape.iter().product();
                let w = (0..n).map(|_| rng.random_range(-k..k)).collect();
                (
                    Some(Tensor::new(shape, w)?),
                    Some(Tensor::zeros(vec![spec.out_ch])?),
                )
            }
            None => (None, None),
        };
        Ok(Self { spec, weight, bias })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.weight.iter().chain(self.bias.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weight.iter_mut().chain(self.bias.iter_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    fn w(&self) -> &[f64] {
        self.weight.as_ref().map_or(&[], |t| t.data())
    }

    fn b(&self) -> &[f64] {
        self.bias.as_ref().map_or(&[], |t| t.data())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.spec.output_shape(x.shape())?;
        let s = &self.spec;
        let data = match s.kind {
            LayerKind::Conv1d => self.conv1d_forward(x.data(), x.shape()[1], out_shape[1]),
            LayerKind::Tconv1d | LayerKind::TwinTconv1d => {
                let l = x.shape()[1];
                let mut y = self.tconv_numerator(x.data(), l);
                if s.kind == LayerKind::TwinTconv1d {
                    let den = self.twin_denominator(l)?;
                    y.iter_mut().zip(&den).for_each(|(v, d)| *v /= d);
                }
                let n = l * s.stride;
                for (o, b) in self.b().iter().enumerate() {
                    y[o * n..(o + 1) * n].iter_mut().for_each(|v| *v += b);
                }
                y
            }
            LayerKind::Dense => {
                let (w, b) = (self.w(), self.b());
                (0..s.out_ch)
                    .map(|o| {
                        b[o] + w[o * s.in_ch..(o + 1) * s.in_ch]
                            .iter()
                            .zip(x.data())
                            .map(|(a, c)| a * c)
                            .sum::<f64>()
                    })
                    .collect()
            }
            LayerKind::Snake => x.data().iter().map(|&v| snake_scalar(v)).collect(),
            LayerKind::LeakyRelu => x
                .data()
                .iter()
                .map(|&v| if v >= 0.0 { v } else { LEAKY_SLOPE * v })
                .collect(),
            LayerKind::Tanh => x.data().iter().map(|v| v.tanh()).collect(),
            LayerKind::Conv2d => self.conv2d_forward(x.data(), x.shape(), &out_shape),
        };
        let y = Tensor::new(out_shape, data).map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("{} output, {m}", s.kind.name())),
            e => e,
        })?;
        Ok(y)
    }

    /// Accumulates parameter gradients for `d loss / d output = upstream` and returns `d loss / d input`.
    pub fn backward(&mut self, x: &Tensor, upstream: &[f64]) -> Result<Vec<f64>> {
        let out_shape = self.spec.output_shape(x.shape())?;
        if upstream.len() != out_shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} backward: upstream has {} values, output shape {out_shape:?}",
                self.spec.kind.name(),
                upstream.len()
            )));
        }
        let s = self.spec;
        let (gx, gw, gb) = match s.kind {
            LayerKind::Conv1d => {
                self.conv1d_backward(x.data(), x.shape()[1], out_shape[1], upstream)
            }
            LayerKind::Tconv1d | LayerKind::TwinTconv1d => {
                self.tconv_backward(x.data(), x.shape()[1], upstream)?
            }
            LayerKind::Dense => {
                let w = self.w();
                let mut gx = vec![0.0; s.in_ch];
                let mut gw = vec![0.0; w.len()];
                for (o, &g) in upstream.iter().enumerate() {
                    for i in 0..s.in_ch {
                        gx[i] += w[o * s.in_ch + i] * g;
                        gw[o * s.in_ch + i] = g * x.data()[i];
                    }
                }
                (gx, gw, upstream.to_vec())
            }
            LayerKind::Snake => (
                x.data()
                    .iter()
                    .zip(upstream)
                    .map(|(&v, g)| snake_derivative(v) * g)
                    .collect(),
                vec![],
                vec![],
            ),
            LayerKind::LeakyRelu => (
                x.data()
                    .iter()
                    .zip(upstream)
                    .map(|(&v, g)| if v >= 0.0 { *g } else { LEAKY_SLOPE * g })
                    .collect(),
                vec![],
                vec![],
            ),
            LayerKind::Tanh => (
                x.data()
                    .iter()
                    .zip(upstream)
                    .map(|(&v, g)| {
                        let t = v.tanh();
                        (1.0 - t * t) * g
                    })
                    .collect(),
                vec![],
                vec![],
            ),
            LayerKind::Conv2d => self.conv2d_backward(x.data(), x.shape(), &out_shape, upstream),
        };
        if let Some(w) = self.weight.as_mut() {
            w.accumulate_grad(&gw)?;
        }
        if let Some(b) = self.bias.as_mut() {
            b.accumulate_grad(&gb)?;
        }
        Ok(gx)
    }

    fn conv1d_forward(&self, x: &[f64], l: usize, lout: usize) -> Vec<f64> {
        let s = &self.spec;
        let (w, b) = (self.w(), self.b());
        let k = s.kernel_size;
        let mut y = vec![0.0; s.out_ch * lout];
        for o in 0..s.out_ch {
            let yo = &mut y[o * lout..(o + 1) * lout];
            yo.iter_mut().for_each(|v| *v = b[o]);
            for i in 0..s.in_ch {
                let xi = &x[i * l..(i + 1) * l];
                for j in 0..k {
                    let wv = w[(o * s.in_ch + i) * k + j];
                    let off = (j * s.dilation) as isize - s.padding() as isize;
                    let r = valid_range(off, s.stride, l, lout);
                    if s.stride == 1 {
                        let start = (r.start as isize + off) as usize;
                        for (yv, xv) in yo[r.clone()].iter_mut().zip(&xi[start..start + r.len()]) {
                            *yv += wv * xv;
                        }
                    } else {
                        for t in r {
                            yo[t] += wv * xi[(t as isize * s.stride as isize + off) as usize];
                        }
                    }
                }
            }
        }
        y
    }

    fn conv1d_backward(
        &self,
        x: &[f64],
        l: usize,
        lout: usize,
        g: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = &self.spec;
        let w = self.w();
        let k = s.kernel_size;
        let mut gx = vec![0.0; s.in_ch * l];
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; s.out_ch];
        for o in 0..s.out_ch {
            let go = &g[o * lout..(o + 1) * lout];
            gb[o] = go.iter().sum();
            for i in 0..s.in_ch {
                let xi = &x[i * l..(i + 1) * l];
                let gxi = &mut gx[i * l..(i + 1) * l];
                for j in 0..k {
                    let widx = (o * s.in_ch + i) * k + j;
                    let wv = w[widx];
                    let off = (j * s.dilation) as isize - s.padding() as isize;
                    let r = valid_range(off, s.stride, l, lout);
                    let mut acc = 0.0;
                    if s.stride == 1 {
                        let start = (r.start as isize + off) as usize;
                        let n = r.len();
                        acc = dot(&go[r.clone()], &xi[start..start + n]);
                        for (gv, gxv) in go[r].iter().zip(&mut gxi[start..start + n]) {
                            *gxv += wv * gv;
                        }
                    } else {
                        for t in r {
                            let idx = (t as isize * s.stride as isize + off) as usize;
                            acc += go[t] * xi[idx];
                            gxi[idx] += wv * go[t];
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
        (gx, gw, gb)
    }

    fn crop_offset(&self, l: usize) -> usize {
        let s = &self.spec;
        ((l - 1) * s.stride + s.kernel_size - l * s.stride) / 2
    }

    /// Cropped transposed-convolution sum without bias, `[out_ch, l*stride]`.
    fn tconv_numerator(&self, x: &[f64], l: usize) -> Vec<f64> {
        let s = &self.spec;
        let w = self.w();
        let (k, n) = (s.kernel_size, l * s.stride);
        let row = s.out_ch * k;
        let off = self.crop_offset(l) as isize;
        let mut y = vec![0.0; s.out_ch * n];
        // Per input sample: z[o, j] = sum_i w[i, o, j] x[i, t], then scatter into the output window.
        let mut z = vec![0.0; row];
        for t in 0..l {
            z.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..s.in_ch {
                let xv = x[i * l + t];
                z.iter_mut()
                    .zip(&w[i * row..(i + 1) * row])
                    .for_each(|(a, b)| *a += xv * b);
            }
            let (base, taps) = tap_window(t, s.stride, off, k, n);
            for o in 0..s.out_ch {
                let zo = &z[o * k..(o + 1) * k];
                let yo = &mut y[o * n + base..o * n + base + taps.len()];
                yo.iter_mut()
                    .zip(&zo[taps.clone()])
                    .for_each(|(a, b)| *a += b);
            }
        }
        y
    }

    /// Twin denominator `[out_ch, l*stride]`: overlap count (ones) or summed |weight| (abs_weight).
    fn twin_denominator(&self, l: usize) -> Result<Vec<f64>> {
        let s = &self.spec;
        let w = self.w();
        let n = l * s.stride;
        let off = self.crop_offset(l) as isize;
        let mut den = vec![0.0; s.out_ch * n];
        for o in 0..s.out_ch {
            let d = &mut den[o * n..(o + 1) * n];
            for j in 0..s.kernel_size {
                let tap = match s.twin_mode {
                    TwinMode::AbsWeight => (0..s.in_ch)
                        .map(|i| w[(i * s.out_ch + o) * s.kernel_size + j].abs())
                        .sum(),
                    _ => 1.0,
                };
                let r = valid_range(j as isize - off, s.stride, n, l);
                if r.is_empty() {
                    continue;
                }
                let p0 = (r.start * s.stride + j) - off as usize;
                d[p0..]
                    .iter_mut()
                    .step_by(s.stride)
                    .take(r.len())
                    .for_each(|v| *v += tap);
            }
        }
        match den.iter().position(|d| d.abs() < TWIN_EPS) {
            Some(p) => Err(Error::DegenerateKernel {
                position: p,
                value: den[p],
            }),
            None => Ok(den),
        }
    }

    fn tconv_backward(
        &self,
        x: &[f64],
        l: usize,
        g: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let s = &self.spec;
        let w = self.w();
        let n = l * s.stride;
        let off = self.crop_offset(l) as isize;
        let twin = s.kind == LayerKind::TwinTconv1d;
        let mut gb = vec![0.0; s.out_ch];
        for o in 0..s.out_ch {
            gb[o] = g[o * n..(o + 1) * n].iter().sum();
        }
        // Gradient flowing into the numerator, and for abs_weight the quotient-rule term.
        let (gnum, gden) = if twin {
            let den = self.twin_denominator(l)?;
            let gnum: Vec<f64> = g.iter().zip(&den).map(|(a, d)| a / d).collect();
            let gden = if s.twin_mode == TwinMode::AbsWeight {
                let num = self.tconv_numerator(x, l);
                Some(
                    g.iter()
                        .zip(&num)
                        .zip(&den)
                        .map(|((a, u), d)| -a * u / (d * d))
                        .collect::<Vec<f64>>(),
                )
            } else {
                None
            };
            (gnum, gden)
        } else {
            (g.to_vec(), None)
        };
        let k = s.kernel_size;
        let row = s.out_ch * k;
        let mut gx = vec![0.0; s.in_ch * l];
        let mut gw = vec![0.0; w.len()];
        let mut gz = vec![0.0; row];
        let mut gd_sum = vec![0.0; row];
        for t in 0..l {
            let (base, taps) = tap_window(t, s.stride, off, k, n);
            gz.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..s.out_ch {
                gz[o * k + taps.start..o * k + taps.end]
                    .copy_from_slice(&gnum[o * n + base..o * n + base + taps.len()]);
                if let Some(gd) = gden.as_ref() {
                    gd_sum[o * k + taps.start..o * k + taps.end]
                        .iter_mut()
                        .zip(&gd[o * n + base..o * n + base + taps.len()])
                        .for_each(|(a, b)| *a += b);
                }
            }
            for i in 0..s.in_ch {
                let wi = &w[i * row..(i + 1) * row];
                gx[i * l + t] = dot(&gz, wi);
                let xv = x[i * l + t];
                gw[i * row..(i + 1) * row]
                    .iter_mut()
                    .zip(&gz)
                    .for_each(|(a, b)| *a += xv * b);
            }
        }
        if gden.is_some() {
            // d|w|/dw with subgradient 0 at exactly zero.
            for (i, gwv) in gw.iter_mut().enumerate() {
                let wv = w[i];
                let sgn = if wv > 0.0 {
                    1.0
                } else if wv < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *gwv += sgn * gd_sum[i % row];
            }
        }
        Ok((gx, gw, gb))
    }

    fn conv2d_forward(&self, x: &[f64], ishape: &[usize], oshape: &[usize]) -> Vec<f64> {
        let s = &self.spec;
        let (w, b) = (self.w(), self.b());
        let (ti, fi) = (ishape[1], ishape[2]);
        let (to, fo) = (oshape[1], oshape[2]);
        let (pt, pf) = (s.padding() as isize, s.freq_padding() as isize);
        let mut y = vec![0.0; s.out_ch * to * fo];
        for o in 0..s.out_ch {
            let yo = &mut y[o * to * fo..(o + 1) * to * fo];
            yo.iter_mut().for_each(|v| *v = b[o]);
            for i in 0..s.in_ch {
                let xi = &x[i * ti * fi..(i + 1) * ti * fi];
                let wk = &w[(o * s.in_ch + i) * s.kernel_size * s.freq_kernel..]
                    [..s.kernel_size * s.freq_kernel];
                for u in 0..s.kernel_size {
                    let rows = valid_range(u as isize - pt, s.stride, ti, to);
                    for v in 0..s.freq_kernel {
                        let wv = wk[u * s.freq_kernel + v];
                        let foff = v as isize - pf;
                        let cols = valid_range(foff, s.freq_stride, fi, fo);
                        for a in rows.clone() {
                            let xr = &xi[(a * s.stride + u - pt as usize) * fi..][..fi];
                            let yr = &mut yo[a * fo..(a + 1) * fo];
                            for c in cols.clone() {
                                yr[c] +=
                                    wv * xr[(c as isize * s.freq_stride as isize + foff) as usize];
                            }
                        }
                    }
                }
            }
        }
        y
    }

    fn conv2d_backward(
        &self,
        x: &[f64],
        ishape: &[usize],
        oshape: &[usize],
        g: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = &self.spec;
        let w = self.w();
        let (ti, fi) = (ishape[1], ishape[2]);
        let (to, fo) = (oshape[1], oshape[2]);
        let (pt, pf) = (s.padding() as isize, s.freq_padding() as isize);
        let ksz = s.kernel_size * s.freq_kernel;
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; s.out_ch];
        for o in 0..s.out_ch {
            let go = &g[o * to * fo..(o + 1) * to * fo];
            gb[o] = go.iter().sum();
            for i in 0..s.in_ch {
                let xi = &x[i * ti * fi..(i + 1) * ti * fi];
                let gxi = &mut gx[i * ti * fi..(i + 1) * ti * fi];
                let base = (o * s.in_ch + i) * ksz;
                for u in 0..s.kernel_size {
                    let rows = valid_range(u as isize - pt, s.stride, ti, to);
                    for v in 0..s.freq_kernel {
                        let wv = w[base + u * s.freq_kernel + v];
                        let foff = v as isize - pf;
                        let cols = valid_range(foff, s.freq_stride, fi, fo);
                        let mut acc = 0.0;
                        for a in rows.clone() {
                            let r = (a * s.stride + u - pt as usize) * fi;
                            let gr = &go[a * fo..(a + 1) * fo];
                            for c in cols.clone() {
                                let idx = r + (c as isize * s.freq_stride as isize + foff) as usize;
                                acc += gr[c] * xi[idx];
                                gxi[idx] += wv * gr[c];
                            }
                        }
                        gw[base + u * s.freq_kernel + v] = acc;
                    }
                }
            }
        }
        (gx, gw, gb)
    }
}
