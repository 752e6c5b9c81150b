//! Layer stack over a flat parameter vector, with per-sample forward and
//! reverse-mode passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, HiddenActivation, ImageShape, ModelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer {
    /// `out = W x + b`, `W` stored row-major as `[outputs][inputs]`, then `b`.
    Dense { inputs: usize, outputs: usize, offset: usize },
    /// Valid, stride-1 convolution over a channel-first `[c][h][w]` input.
    /// Filters stored as `[filters][in_channels][kernel][kernel]`, then one bias per filter.
    Conv { shape: ImageShape, filters: usize, kernel: usize, offset: usize },
    /// Non-overlapping `size × size` max pooling, remainder rows/columns dropped.
    MaxPool { channels: usize, height: usize, width: usize, size: usize },
    Relu,
    Tanh,
}

impl Layer {
    fn param_count(&self) -> usize {
        match *self {
            Layer::Dense { inputs, outputs, .. } => outputs * inputs + outputs,
            Layer::Conv { shape, filters, kernel, .. } => filters * shape.channels * kernel * kernel + filters,
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv { shape, kernel, .. } => shape.channels * kernel * kernel,
            _ => 0,
        }
    }

    fn forward(&self, params: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match *self {
            Layer::Dense { inputs, outputs, offset } => {
                let weights = &params[offset..offset + inputs * outputs];
                let bias = &params[offset + inputs * outputs..offset + inputs * outputs + outputs];
                out.extend(
                    weights
                        .chunks_exact(inputs)
                        .zip(bias)
                        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()),
                );
            }
            Layer::Conv { shape, filters, kernel, offset } => {
                let (oh, ow) = (shape.height - kernel + 1, shape.width - kernel + 1);
                let filter_len = shape.channels * kernel * kernel;
                let bias_at = offset + filters * filter_len;
                out.resize(filters * oh * ow, 0.0);
                for f in 0..filters {
                    let w = &params[offset + f * filter_len..offset + (f + 1) * filter_len];
                    let b = params[bias_at + f];
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut acc = b;
                            for c in 0..shape.channels {
                                for ki in 0..kernel {
                                    let row = c * shape.height * shape.width + (i + ki) * shape.width + j;
                                    let wrow = (c * kernel + ki) * kernel;
                                    for kj in 0..kernel {
                                        acc += w[wrow + kj] * x[row + kj];
                                    }
                                }
                            }
                            out[(f * oh + i) * ow + j] = acc;
                        }
                    }
                }
            }
            Layer::MaxPool { channels, height, width, size } => {
                let (oh, ow) = (height / size, width / size);
                out.resize(channels * oh * ow, 0.0);
                for c in 0..channels {
                    for i in 0..oh {
                        for j in 0..ow {
                            let (_, best) = pool_argmax(x, c, height, width, size, i, j);
                            out[(c * oh + i) * ow + j] = best;
                        }
                    }
                }
            }
            Layer::Relu => out.extend(x.iter().map(|v| v.max(0.0))),
            Layer::Tanh => out.extend(x.iter().map(|v| v.tanh())),
        }
    }

    /// Accumulate parameter gradients and write the input gradient into `grad_in`.
    fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        y: &[f64],
        grad_out: &[f64],
        grad_params: &mut [f64],
        grad_in: &mut Vec<f64>,
    ) {
        grad_in.clear();
        grad_in.resize(x.len(), 0.0);
        match *self {
            Layer::Dense { inputs, outputs, offset } => {
                let weights = &params[offset..offset + inputs * outputs];
                let (gw, gb) = grad_params[offset..offset + inputs * outputs + outputs].split_at_mut(inputs * outputs);
                for o in 0..outputs {
                    let g = grad_out[o];
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let row = &weights[o * inputs..(o + 1) * inputs];
                    let grow = &mut gw[o * inputs..(o + 1) * inputs];
                    for i in 0..inputs {
                        grow[i] += g * x[i];
                        grad_in[i] += g * row[i];
                    }
                }
            }
            Layer::Conv { shape, filters, kernel, offset } => {
                let (oh, ow) = (shape.height - kernel + 1, shape.width - kernel + 1);
                let filter_len = shape.channels * kernel * kernel;
                let bias_at = offset + filters * filter_len;
                for f in 0..filters {
                    let w_at = offset + f * filter_len;
                    for i in 0..oh {
                        for j in 0..ow {
                            let g = grad_out[(f * oh + i) * ow + j];
                            if g == 0.0 {
                                continue;
                            }
                            grad_params[bias_at + f] += g;
                            for c in 0..shape.channels {
                                for ki in 0..kernel {
                                    let row = c * shape.height * shape.width + (i + ki) * shape.width + j;
                                    let wrow = w_at + (c * kernel + ki) * kernel;
                                    for kj in 0..kernel {
                                        grad_params[wrow + kj] += g * x[row + kj];
                                        grad_in[row + kj] += g * params[wrow + kj];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Layer::MaxPool { channels, height, width, size } => {
                let (oh, ow) = (height / size, width / size);
                for c in 0..channels {
                    for i in 0..oh {
                        for j in 0..ow {
                            let (at, _) = pool_argmax(x, c, height, width, size, i, j);
                            grad_in[at] += grad_out[(c * oh + i) * ow + j];
                        }
                    }
                }
            }
            Layer::Relu => {
                for ((gi, go), v) in grad_in.iter_mut().zip(grad_out).zip(x) {
                    *gi = if *v > 0.0 { *go } else { 0.0 };
                }
            }
            Layer::Tanh => {
                for ((gi, go), t) in grad_in.iter_mut().zip(grad_out).zip(y) {
                    *gi = go * (1.0 - t * t);
                }
            }
        }
    }
}

/// First position of the maximum within a pooling window, and its value.
fn pool_argmax(x: &[f64], c: usize, height: usize, width: usize, size: usize, i: usize, j: usize) -> (usize, f64) {
    let mut best_at = c * height * width + i * size * width + j * size;
    let mut best = x[best_at];
    for di in 0..size {
        for dj in 0..size {
            let at = c * height * width + (i * size + di) * width + j * size + dj;
            if x[at] > best {
                best = x[at];
                best_at = at;
            }
        }
    }
    (best_at, best)
}

/// Activations recorded by a forward pass, reused across samples.
#[derive(Debug, Default)]
pub(crate) struct Trace {
    acts: Vec<Vec<f64>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl Trace {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Network {
    layers: Vec<Layer>,
    param_count: usize,
    input_dim: usize,
}

impl Network {
    pub(crate) fn build(config: &ModelConfig) -> Result<Self> {
        let hidden = |layers: &mut Vec<Layer>| {
            layers.push(match config.hidden_activation {
                HiddenActivation::Relu => Layer::Relu,
                HiddenActivation::Tanh => Layer::Tanh,
            })
        };
        let mut layers = Vec::new();
        let mut offset = 0;
        match &config.architecture {
            Architecture::Mlp { layer_sizes } => {
                for (l, pair) in layer_sizes.windows(2).enumerate() {
                    let layer = Layer::Dense { inputs: pair[0], outputs: pair[1], offset };
                    offset += layer.param_count();
                    layers.push(layer);
                    if l + 2 < layer_sizes.len() {
                        hidden(&mut layers);
                    }
                }
            }
            Architecture::SmallConv { channels, kernel, pooling } => {
                let shape = config
                    .image_shape
                    .ok_or_else(|| Error::config("model.image_shape", "required by the convolutional architecture"))?;
                let conv = Layer::Conv { shape, filters: *channels, kernel: *kernel, offset };
                offset += conv.param_count();
                layers.push(conv);
                hidden(&mut layers);
                let (h, w) = (shape.height - kernel + 1, shape.width - kernel + 1);
                layers.push(Layer::MaxPool { channels: *channels, height: h, width: w, size: *pooling });
                let flat = channels * (h / pooling) * (w / pooling);
                let dense = Layer::Dense { inputs: flat, outputs: config.num_classes, offset };
                offset += dense.param_count();
                layers.push(dense);
            }
        }
        Ok(Self { layers, param_count: offset, input_dim: config.input_dim })
    }

    /// Uniform fan-in initialization: every weight and bias of a layer is drawn
    /// from `U(-1/√fan_in, 1/√fan_in)`.
    pub(crate) fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count);
        for layer in &self.layers {
            let n = layer.param_count();
            if n == 0 {
                continue;
            }
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            params.extend((0..n).map(|_| rng.random_range(-bound..bound)));
        }
        params
    }

    pub(crate) fn forward(&self, params: &[f64], x: &[f64], trace: &mut Trace) {
        debug_assert_eq!(x.len(), self.input_dim);
        trace.acts.resize_with(self.layers.len() + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = trace.acts.split_at_mut(l + 1);
            layer.forward(params, &done[l], &mut rest[0]);
        }
    }

    /// Backpropagate `grad_output` (w.r.t. the final layer's output) through
    /// the trace of the last forward pass, accumulating into `grad_params`.
    pub(crate) fn backward(&self, params: &[f64], trace: &mut Trace, grad_output: &[f64], grad_params: &mut [f64]) {
        let Trace { acts, grad_a, grad_b } = trace;
        grad_a.clear();
        grad_a.extend_from_slice(grad_output);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            layer.backward(params, &acts[l], &acts[l + 1], grad_a, grad_params, grad_b);
            std::mem::swap(grad_a, grad_b);
        }
    }
}
