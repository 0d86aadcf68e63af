use super::layers::{Layer, LayerKind, LayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::upsample::TwinMode;

/// Shape of the toy generator. `twin_mode = None` swaps the twin upsamplers for plain transposed convolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Channel widths before, between and after the two upsampling stages.
    pub channels: [usize; 3],
    pub amp_dilations: Vec<usize>,
    pub amp_kernel: usize,
    pub stem_kernel: usize,
    pub out_kernel: usize,
    pub upsample_kernel: usize,
    pub strides: [usize; 2],
    pub twin_mode: TwinMode,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            channels: [32, 16, 8],
            amp_dilations: vec![1, 3, 5],
            amp_kernel: 3,
            stem_kernel: 7,
            out_kernel: 7,
            upsample_kernel: 16,
            strides: [4, 4],
            twin_mode: TwinMode::Ones,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn upsampling_factor(&self) -> usize {
        self.strides.iter().product()
    }
}

/// Residual stack `x <- x + conv_d(snake(x))` over the configured dilations.
#[derive(Clone, Debug, PartialEq)]
pub struct AmpBlock {
    snake: Layer,
    convs: Vec<Layer>,
}

/// Activations an [`AmpBlock`] keeps for its backward pass.
#[derive(Clone, Debug)]
pub struct AmpTrace {
    inputs: Vec<Tensor>,
    activated: Vec<Tensor>,
}

impl AmpBlock {
    pub fn new(channels: usize, kernel: usize, dilations: &[usize], seed: u64) -> Result<Self> {
        if dilations.is_empty() {
            return Err(Error::InvalidConfig(
                "AMP block needs at least one dilation".into(),
            ));
        }
        let convs = dilations
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                Layer::new(
                    LayerSpec::conv1d(channels, channels, kernel, d)
                        .with_seed(seed.wrapping_add(i as u64)),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            snake: Layer::new(LayerSpec::activation(LayerKind::Snake, channels))?,
            convs,
        })
    }

    pub fn forward(&self, x: Tensor) -> Result<(Tensor, AmpTrace)> {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut activated = Vec::with_capacity(self.convs.len());
        let mut cur = x;
        for conv in &self.convs {
            let a = self.snake.forward(&cur)?;
            let r = conv.forward(&a)?;
            let next = Tensor::new(
                cur.shape().to_vec(),
                cur.data()
                    .iter()
                    .zip(r.data())
                    .map(|(p, q)| p + q)
                    .collect(),
            )?;
            inputs.push(cur);
            activated.push(a);
            cur = next;
        }
        Ok((cur, AmpTrace { inputs, activated }))
    }

    pub fn backward(&mut self, trace: &AmpTrace, upstream: &[f64]) -> Result<Vec<f64>> {
        let mut g = upstream.to_vec();
        for (k, conv) in self.convs.iter_mut().enumerate().rev() {
            let ga = conv.backward(&trace.activated[k], &g)?;
            let gs = self.snake.backward(&trace.inputs[k], &ga)?;
            g.iter_mut().zip(gs).for_each(|(a, b)| *a += b);
        }
        Ok(g)
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.convs.iter()
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.convs.iter_mut()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Stage {
    Layer(Layer),
    Amp(AmpBlock),
}

#[derive(Clone, Debug)]
enum StageTrace {
    Layer(Tensor),
    Amp(AmpTrace),
}

/// Activations of one generator forward pass.
#[derive(Clone, Debug)]
pub struct GeneratorTrace {
    stages: Vec<StageTrace>,
    output: Vec<f64>,
}

impl GeneratorTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// stem conv -> AMP -> upsampler x2 -> AMP -> output conv -> tanh, mono in and out.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyGenerator {
    config: GeneratorConfig,
    names: Vec<&'static str>,
    stages: Vec<Stage>,
}

impl ToyGenerator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        let [c0, c1, c2] = config.channels;
        let seed = config.seed.wrapping_mul(1000);
        let up = |cin, cout, stride, s: u64| -> Result<Layer> {
            let spec = match config.twin_mode {
                TwinMode::None => LayerSpec::tconv1d(cin, cout, config.upsample_kernel, stride),
                mode => LayerSpec::twin_tconv1d(cin, cout, config.upsample_kernel, stride, mode),
            };
            Layer::new(spec.with_seed(seed + s))
        };
        let stages = vec![
            Stage::Layer(Layer::new(
                LayerSpec::conv1d(1, c0, config.stem_kernel, 1).with_seed(seed),
            )?),
            Stage::Amp(AmpBlock::new(
                c0,
                config.amp_kernel,
                &config.amp_dilations,
                seed + 10,
            )?),
            Stage::Layer(up(c0, c1, config.strides[0], 20)?),
            Stage::Layer(up(c1, c2, config.strides[1], 30)?),
            Stage::Amp(AmpBlock::new(
                c2,
                config.amp_kernel,
                &config.amp_dilations,
                seed + 40,
            )?),
            Stage::Layer(Layer::new(
                LayerSpec::conv1d(c2, 1, config.out_kernel, 1).with_seed(seed + 50),
            )?),
            Stage::Layer(Layer::new(LayerSpec::activation(LayerKind::Tanh, 1))?),
        ];
        Ok(Self {
            config,
            names: vec!["stem", "amp1", "up1", "up2", "amp2", "out", "tanh"],
            stages,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn upsamplers(&self) -> [&Layer; 2] {
        match (&self.stages[2], &self.stages[3]) {
            (Stage::Layer(a), Stage::Layer(b)) => [a, b],
            _ => unreachable!("stages 2 and 3 are the upsamplers"),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<GeneratorTrace> {
        if x.is_empty() {
            return Err(Error::Empty("generator input"));
        }
        let mut cur = Tensor::new(vec![1, x.len()], x.to_vec())?;
        let mut traces = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            match stage {
                Stage::Layer(l) => {
                    let next = l.forward(&cur)?;
                    traces.push(StageTrace::Layer(cur));
                    cur = next;
                }
                Stage::Amp(a) => {
                    let (next, t) = a.forward(cur)?;
                    traces.push(StageTrace::Amp(t));
                    cur = next;
                }
            }
        }
        Ok(GeneratorTrace {
            stages: traces,
            output: cur.into_data(),
        })
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input signal.
    pub fn backward(&mut self, trace: &GeneratorTrace, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != trace.output.len() {
            return Err(Error::LengthMismatch {
                left: upstream.len(),
                right: trace.output.len(),
            });
        }
        let mut g = upstream.to_vec();
        for (stage, t) in self.stages.iter_mut().zip(&trace.stages).rev() {
            g = match (stage, t) {
                (Stage::Layer(l), StageTrace::Layer(x)) => l.backward(x, &g)?,
                (Stage::Amp(a), StageTrace::Amp(at)) => a.backward(at, &g)?,
                _ => {
                    return Err(Error::ShapeMismatch(
                        "trace does not belong to this generator".into(),
                    ))
                }
            };
        }
        Ok(g)
    }

    fn layers(&self) -> Vec<(String, &Layer)> {
        let mut out = Vec::new();
        for (name, stage) in self.names.iter().zip(&self.stages) {
            match stage {
                Stage::Layer(l) => out.push((name.to_string(), l)),
                Stage::Amp(a) => out.extend(
                    a.layers()
                        .enumerate()
                        .map(|(i, l)| (format!("{name}.{i}"), l)),
                ),
            }
        }
        out
    }

    /// Parameters keyed by layer id, e.g. `amp1.2.weight`.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, layer) in self.layers() {
            if let Some(w) = &layer.weight {
                out.push((format!("{name}.weight"), w));
            }
            if let Some(b) = &layer.bias {
                out.push((format!("{name}.bias"), b));
            }
        }
        out
    }

    /// Parameters in the same order as [`Self::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for stage in &mut self.stages {
            match stage {
                Stage::Layer(l) => out.extend(l.params_mut()),
                Stage::Amp(a) => a.layers_mut().for_each(|l| out.extend(l.params_mut())),
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Replaces every parameter from a name-keyed list; names and shapes must match exactly.
    pub fn load_params(&mut self, params: &[(String, Tensor)]) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if names.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                names.len(),
                params.len()
            )));
        }
        for ((name, shape), (pn, pt)) in names.iter().zip(params) {
            if name != pn || shape.as_slice() != pt.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {pn} {:?} does not match {name} {shape:?}",
                    pt.shape()
                )));
            }
        }
        for (dst, (_, src)) in self.params_mut().into_iter().zip(params) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_names() {
        let g = ToyGenerator::new(GeneratorConfig::default()).unwrap();
        assert_eq!(g.config().upsampling_factor(), 16);
        let y = g.forward(&vec![0.1; 20]).unwrap();
        assert_eq!(y.len(), 320);
        let names: Vec<String> = g.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "stem.weight");
        assert!(names.contains(&"amp2.2.bias".to_string()));
        assert!(names.contains(&"up1.weight".to_string()));
        assert!(y.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let a = ToyGenerator::new(GeneratorConfig::default()).unwrap();
        let b = ToyGenerator::new(GeneratorConfig::default()).unwrap();
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).sin()).collect();
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    #[test]
    fn load_params_round_trip() {
        let a = ToyGenerator::new(GeneratorConfig::default()).unwrap();
        let mut b = ToyGenerator::new(GeneratorConfig {
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let snapshot: Vec<(String, Tensor)> = a
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        b.load_params(&snapshot).unwrap();
        let x = vec![0.2; 16];
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert!(b.load_params(&snapshot[1..]).is_err());
    }
}
