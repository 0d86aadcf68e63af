use super::layers::{Layer, LayerKind, LayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::signal::{AudioBuffer, StftConfig, StftPlan};
use crate::subband::{BandGrouping, PqmfBank};

/// Conv / leaky-ReLU stack whose hidden activations are exposed as feature maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvStack {
    layers: Vec<Layer>,
}

impl ConvStack {
    /// Every spec but the last is followed by a leaky ReLU; the last produces the score map.
    pub fn new(specs: &[LayerSpec]) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, s) in specs.iter().enumerate() {
            layers.push(Layer::new(*s)?);
            if i + 1 < specs.len() {
                layers.push(Layer::new(LayerSpec::activation(
                    LayerKind::LeakyRelu,
                    s.out_ch,
                ))?);
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Shapes of every feature map and of the score map for an input shape.
    pub fn shapes(&self, input: &[usize]) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
        let mut cur = input.to_vec();
        let mut feats = Vec::new();
        for l in &self.layers {
            cur = l.spec().output_shape(&cur)?;
            if l.spec().kind == LayerKind::LeakyRelu {
                feats.push(cur.clone());
            }
        }
        Ok((feats, cur))
    }

    /// Returns every layer input plus the score map.
    fn forward(&self, x: Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for l in &self.layers {
            let next = l.forward(&cur)?;
            inputs.push(cur);
            cur = next;
        }
        Ok((inputs, cur))
    }

    fn features<'a>(&self, inputs: &'a [Tensor]) -> Vec<&'a Tensor> {
        // The output of leaky ReLU i is the input of layer i + 1.
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.spec().kind == LayerKind::LeakyRelu)
            .map(|(i, _)| &inputs[i + 1])
            .collect()
    }

    fn backward(
        &mut self,
        inputs: &[Tensor],
        score_grad: &[f64],
        feature_grads: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let mut g = score_grad.to_vec();
        let mut fg = feature_grads.iter().rev();
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            if l.spec().kind == LayerKind::LeakyRelu {
                let f = fg
                    .next()
                    .ok_or_else(|| Error::ShapeMismatch("too few feature gradients".into()))?;
                if f.len() != g.len() {
                    return Err(Error::ShapeMismatch(
                        "feature gradient has the wrong size".into(),
                    ));
                }
                g.iter_mut().zip(f).for_each(|(a, b)| *a += b);
            }
            g = l.backward(&inputs[i], &g)?;
        }
        Ok(g)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }
}

/// Widths and resolutions of the six sub-discriminators.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    /// (window, hop) of each complex-spectrogram discriminator.
    pub resolutions: Vec<(usize, usize)>,
    pub global_channels: usize,
    pub local_channels: usize,
    /// Dilations of the low, mid and high sub-band discriminators.
    pub local_dilations: [[usize; 3]; 3],
    pub num_bands: usize,
    pub pqmf_taps: usize,
    pub pqmf_beta: f64,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![(2048, 240), (1024, 120), (512, 50)],
            global_channels: 8,
            local_channels: 16,
            local_dilations: [[1, 2, 3], [2, 3, 5], [3, 5, 7]],
            num_bands: 12,
            pqmf_taps: 96,
            pqmf_beta: 9.0,
            seed: 0,
        }
    }
}

/// Score map and ordered feature maps of one sub-discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscOutput {
    pub name: String,
    pub score_map: Vec<f64>,
    pub score_shape: Vec<usize>,
    pub features: Vec<Vec<f64>>,
}

/// Gradients w.r.t. one sub-discriminator's score map and features.
#[derive(Clone, Debug, Default)]
pub struct DiscGrad {
    pub score: Vec<f64>,
    pub features: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
struct StackTrace {
    inputs: Vec<Tensor>,
}

/// Activations of one bank forward pass.
#[derive(Clone, Debug)]
pub struct BankTrace {
    len: usize,
    stacks: Vec<StackTrace>,
}

/// Three complex-spectrogram discriminators and three grouped sub-band discriminators.
#[derive(Clone, Debug)]
pub struct DiscriminatorBank {
    config: DiscriminatorConfig,
    plans: Vec<StftPlan>,
    global: Vec<ConvStack>,
    local: Vec<ConvStack>,
    pqmf: PqmfBank,
    grouping: BandGrouping,
}

impl DiscriminatorBank {
    pub fn new(config: DiscriminatorConfig) -> Result<Self> {
        let c = config.global_channels;
        let seed = config.seed.wrapping_mul(1000) + 500;
        let mut plans = Vec::new();
        let mut global = Vec::new();
        for (r, &(win, hop)) in config.resolutions.iter().enumerate() {
            plans.push(StftPlan::new(StftConfig::new(win, win, hop))?);
            let s = seed + 10 * r as u64;
            global.push(ConvStack::new(&[
                LayerSpec::conv2d(2, c, (3, 5), (1, 2)).with_seed(s),
                LayerSpec::conv2d(c, c, (3, 5), (2, 2)).with_seed(s + 1),
                LayerSpec::conv2d(c, c, (3, 5), (2, 2)).with_seed(s + 2),
                LayerSpec::conv2d(c, c, (3, 3), (1, 1)).with_seed(s + 3),
                LayerSpec::conv2d(c, 1, (3, 3), (1, 1)).with_seed(s + 4),
            ])?);
        }
        let grouping = BandGrouping::thirds(config.num_bands);
        grouping.validate(config.num_bands)?;
        let pqmf =
            crate::subband::design_pqmf(config.num_bands, config.pqmf_taps, config.pqmf_beta)?;
        let c = config.local_channels;
        let mut local = Vec::new();
        for (g, range) in grouping.ranges().iter().enumerate() {
            let s = seed + 100 + 10 * g as u64;
            let d = config.local_dilations[g];
            local.push(ConvStack::new(&[
                LayerSpec::conv1d(range.len(), c, 5, 1).with_seed(s),
                LayerSpec::conv1d(c, c, 3, d[0]).with_seed(s + 1),
                LayerSpec::conv1d(c, c, 3, d[1]).with_seed(s + 2),
                LayerSpec::conv1d(c, c, 3, d[2]).with_seed(s + 3),
                LayerSpec::strided_conv1d(c, c, 5, 2).with_seed(s + 4),
                LayerSpec::conv1d(c, 1, 3, 1).with_seed(s + 5),
            ])?);
        }
        Ok(Self {
            config,
            plans,
            global,
            local,
            pqmf,
            grouping,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.global.len() + self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .config
            .resolutions
            .iter()
            .map(|(w, _)| format!("global_{w}"))
            .collect();
        names.extend(["local_low", "local_mid", "local_high"].map(String::from));
        names
    }

    pub fn min_len(&self) -> usize {
        self.config
            .resolutions
            .iter()
            .map(|r| r.0)
            .max()
            .unwrap_or(0)
    }

    /// Input shape of every sub-discriminator for a signal of `len` samples.
    pub fn input_shapes(&self, len: usize) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::new();
        for p in &self.plans {
            shapes.push(vec![2, p.config().num_frames(len)?, p.config().num_bins()]);
        }
        let band_len = len.div_ceil(self.config.num_bands);
        for r in self.grouping.ranges() {
            shapes.push(vec![r.len(), band_len]);
        }
        Ok(shapes)
    }

    pub fn stacks(&self) -> impl Iterator<Item = &ConvStack> {
        self.global.iter().chain(&self.local)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<DiscOutput>, BankTrace)> {
        if x.len() < self.min_len() {
            return Err(Error::TooShort {
                needed: self.min_len(),
                got: x.len(),
            });
        }
        let mut inputs = Vec::new();
        for p in &self.plans {
            let s = p.forward(x)?;
            let mut data = s.real.clone();
            data.extend_from_slice(&s.imag);
            inputs.push(Tensor::new(vec![2, s.frames, s.bins], data)?);
        }
        let bands = self.pqmf.analyze(x)?;
        for r in self.grouping.ranges() {
            let data: Vec<f64> = bands[r.clone()].iter().flatten().copied().collect();
            inputs.push(Tensor::new(vec![r.len(), bands[0].len()], data)?);
        }
        let names = self.names();
        let mut outputs = Vec::new();
        let mut stacks = Vec::new();
        for ((stack, input), name) in self.global.iter().chain(&self.local).zip(inputs).zip(names) {
            let (acts, score) = stack.forward(input)?;
            outputs.push(DiscOutput {
                name,
                score_shape: score.shape().to_vec(),
                score_map: score.into_data(),
                features: stack
                    .features(&acts)
                    .into_iter()
                    .map(|t| t.data().to_vec())
                    .collect(),
            });
            stacks.push(StackTrace { inputs: acts });
        }
        Ok((
            outputs,
            BankTrace {
                len: x.len(),
                stacks,
            },
        ))
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input signal.
    pub fn backward(&mut self, trace: &BankTrace, grads: &[DiscGrad]) -> Result<Vec<f64>> {
        if grads.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradient sets for {} discriminators",
                grads.len(),
                self.len()
            )));
        }
        let ng = self.global.len();
        let mut gx = vec![0.0; trace.len];
        for (i, stack) in self.global.iter_mut().enumerate() {
            let gin =
                stack.backward(&trace.stacks[i].inputs, &grads[i].score, &grads[i].features)?;
            let half = gin.len() / 2;
            let g = self.plans[i].backward(trace.len, &gin[..half], &gin[half..])?;
            gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        let band_len = trace.len.div_ceil(self.config.num_bands);
        let mut band_grads = vec![vec![0.0; band_len]; self.config.num_bands];
        for (j, (stack, range)) in self
            .local
            .iter_mut()
            .zip(self.grouping.ranges())
            .enumerate()
        {
            let i = ng + j;
            let gin =
                stack.backward(&trace.stacks[i].inputs, &grads[i].score, &grads[i].features)?;
            for (b, chunk) in range.zip(gin.chunks(band_len)) {
                band_grads[b]
                    .iter_mut()
                    .zip(chunk)
                    .for_each(|(a, v)| *a += v);
            }
        }
        let g = self.pqmf.analyze_backward(trace.len, &band_grads)?;
        gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        Ok(gx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.global
            .iter_mut()
            .chain(self.local.iter_mut())
            .flat_map(|s| s.params_mut())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }
}

/// Scores and features of every sub-discriminator for `x`.
pub fn discriminate(bank: &DiscriminatorBank, x: &AudioBuffer) -> Result<Vec<DiscOutput>> {
    Ok(bank.forward(x.samples())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> DiscriminatorBank {
        DiscriminatorBank::new(DiscriminatorConfig::default()).unwrap()
    }

    #[test]
    fn zero_input_zero_scores() {
        let b = bank();
        let out = discriminate(&b, &AudioBuffer::silence(4096, 22050).unwrap()).unwrap();
        assert_eq!(out.len(), 6);
        for o in &out {
            assert!(o.score_map.iter().all(|&v| v == 0.0), "{}", o.name);
            assert!(o.features.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn too_short_input() {
        let b = bank();
        assert!(matches!(
            b.forward(&[0.0; 2047]),
            Err(Error::TooShort {
                needed: 2048,
                got: 2047
            })
        ));
    }

    #[test]
    fn score_lengths_follow_the_stride_chain() {
        let b = bank();
        let len = 4100;
        let x: Vec<f64> = (0..len).map(|i| (i as f64 * 0.01).sin() * 0.3).collect();
        let (out, _) = b.forward(&x).unwrap();
        let inputs = b.input_shapes(len).unwrap();
        for (o, input) in out.iter().zip(&inputs) {
            // Time axis: ceil over each stride in the chain.
            let strides: &[usize] = if input.len() == 3 {
                &[1, 2, 2, 1, 1]
            } else {
                &[1, 1, 1, 1, 2, 1]
            };
            let t = strides.iter().fold(input[1], |l, s| l.div_ceil(*s));
            assert_eq!(o.score_shape[1], t, "{}", o.name);
            assert_eq!(o.score_shape[0], 1);
            if input.len() == 3 {
                let f = [2usize, 2, 2, 1, 1]
                    .iter()
                    .fold(input[2], |l, s| l.div_ceil(*s));
                assert_eq!(o.score_shape[2], f);
            }
            assert_eq!(o.features.len(), if input.len() == 3 { 4 } else { 5 });
        }
    }

    #[test]
    fn repeated_calls_agree() {
        let b = bank();
        let x: Vec<f64> = (0..2048)
            .map(|i| ((i * 31 % 17) as f64 - 8.0) / 10.0)
            .collect();
        assert_eq!(b.forward(&x).unwrap().0, b.forward(&x).unwrap().0);
    }
}
