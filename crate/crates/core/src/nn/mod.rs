//! Layers, models with penultimate-logit access, loss, and SGD.
//!
//! A [`Model`] is an ordered layer stack whose final output is the logit
//! vector z (pre-softmax). Everything downstream — attacks, logit
//! perturbation, evaluation — works on those logits, so `forward_logits`
//! is the single instrumented forward entry point.

mod checkpoint;
mod schedule;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use schedule::CyclicLrSchedule;

use crate::counters;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// One stage of a model.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense { weight: Tensor, bias: Tensor },
    Conv2d { kernel: Tensor, bias: Tensor, stride: usize, padding: usize },
    Relu,
    Flatten,
    MaxPool2x2,
}

impl Layer {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense { weight, bias } => x.matmul(weight)?.add_row(bias),
            Layer::Conv2d { kernel, bias, stride, padding } => {
                x.conv2d(kernel, *stride, *padding)?.add_channel_bias(bias)
            }
            Layer::Relu => Ok(x.relu()),
            Layer::Flatten => {
                let batch = x.shape()[0];
                let rest: usize = x.shape()[1..].iter().product();
                x.reshape(&[batch, rest])
            }
            Layer::MaxPool2x2 => x.maxpool2x2(),
        }
    }

    /// The layer's trainable tensors (shared handles, not copies).
    pub fn parameters(&self) -> Vec<Tensor> {
        match self {
            Layer::Dense { weight, bias } => vec![weight.clone(), bias.clone()],
            Layer::Conv2d { kernel, bias, .. } => vec![kernel.clone(), bias.clone()],
            _ => Vec::new(),
        }
    }

    /// Rebuilds the layer with parameters replaced (used by SGD and
    /// checkpoint loading). `next` must yield data of matching length.
    fn with_parameters(&self, next: &mut dyn Iterator<Item = Vec<f64>>) -> Result<Layer> {
        let rebuilt = |shape: &[usize], data: Vec<f64>| -> Result<Tensor> {
            Tensor::param(shape, data)
        };
        Ok(match self {
            Layer::Dense { weight, bias } => {
                let w = next.next().ok_or_else(missing_param)?;
                let b = next.next().ok_or_else(missing_param)?;
                Layer::Dense {
                    weight: rebuilt(weight.shape(), w)?,
                    bias: rebuilt(bias.shape(), b)?,
                }
            }
            Layer::Conv2d { kernel, bias, stride, padding } => {
                let k = next.next().ok_or_else(missing_param)?;
                let b = next.next().ok_or_else(missing_param)?;
                Layer::Conv2d {
                    kernel: rebuilt(kernel.shape(), k)?,
                    bias: rebuilt(bias.shape(), b)?,
                    stride: *stride,
                    padding: *padding,
                }
            }
            other => other.clone(),
        })
    }
}

fn missing_param() -> Error {
    Error::Contract("parameter list shorter than the model expects".into())
}

/// An ordered layer stack classifying into `num_classes` classes.
#[derive(Debug, Clone)]
pub struct Model {
    layers: Vec<Layer>,
    num_classes: usize,
    /// Per-example input shape (without the batch dimension).
    input_shape: Vec<usize>,
    preset: String,
}

impl Model {
    pub fn from_layers(
        preset: impl Into<String>,
        layers: Vec<Layer>,
        input_shape: &[usize],
        num_classes: usize,
    ) -> Model {
        Model {
            layers,
            num_classes,
            input_shape: input_shape.to_vec(),
            preset: preset.into(),
        }
    }

    /// Builds a named architecture preset with seeded He-uniform init.
    ///
    /// - `mlp-small`: flatten -> dense 128 -> relu -> dense C
    /// - `cnn-small`: conv3x3x16 -> relu -> pool -> conv3x3x32 -> relu ->
    ///   pool -> flatten -> dense C (spatial dims must be divisible by 4)
    pub fn preset(name: &str, input_shape: &[usize], num_classes: usize, seed: u64) -> Result<Model> {
        let mut rng = Rng::new(seed);
        match name {
            "mlp-small" => {
                let in_dim: usize = input_shape.iter().product();
                let hidden = 128;
                let layers = vec![
                    Layer::Flatten,
                    dense_init(in_dim, hidden, &mut rng)?,
                    Layer::Relu,
                    dense_init(hidden, num_classes, &mut rng)?,
                ];
                Ok(Model::from_layers(name, layers, input_shape, num_classes))
            }
            "cnn-small" => {
                // flat vectors of square length are treated as one-channel
                // images, so vector datasets work cross-architecture
                let shape: Vec<usize> = match input_shape {
                    [d] => {
                        let side = (*d as f64).sqrt().round() as usize;
                        if side * side != *d {
                            return Err(Error::Config(format!(
                                "cnn-small needs [channels, height, width] input or a \
                                 square flat dimension, got {input_shape:?}"
                            )));
                        }
                        vec![1, side, side]
                    }
                    [c, h, w] => vec![*c, *h, *w],
                    other => {
                        return Err(Error::Config(format!(
                            "cnn-small needs [channels, height, width] input, got {other:?}"
                        )));
                    }
                };
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                if h % 4 != 0 || w % 4 != 0 {
                    return Err(Error::Config(format!(
                        "cnn-small needs spatial dims divisible by 4, got {h}x{w}"
                    )));
                }
                let flat = 32 * (h / 4) * (w / 4);
                let layers = vec![
                    conv_init(c, 16, &mut rng)?,
                    Layer::Relu,
                    Layer::MaxPool2x2,
                    conv_init(16, 32, &mut rng)?,
                    Layer::Relu,
                    Layer::MaxPool2x2,
                    Layer::Flatten,
                    dense_init(flat, num_classes, &mut rng)?,
                ];
                Ok(Model::from_layers(name, layers, &shape, num_classes))
            }
            other => Err(Error::Config(format!("unknown model preset '{other}'"))),
        }
    }

    pub fn preset_name(&self) -> &str {
        &self.preset
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    /// Forward pass to the penultimate-layer logits [batch, C].
    /// Recorded on the tape when one is active; increments the forward
    /// counter. Inputs whose trailing shape differs from the model's but
    /// has the same element count are reshaped.
    pub fn forward_logits(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().is_empty() {
            return Err(Error::Dimension("input must have a batch dimension".into()));
        }
        let batch = x.shape()[0];
        let per_example: usize = x.shape()[1..].iter().product();
        let expected: usize = self.input_shape.iter().product();
        if per_example != expected {
            return Err(Error::Dimension(format!(
                "input shape {:?} incompatible with model input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        counters::count_forward();
        let mut cur = if x.shape()[1..] == self.input_shape[..] {
            x.clone()
        } else {
            let mut shape = vec![batch];
            shape.extend_from_slice(&self.input_shape);
            x.reshape(&shape)?
        };
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        debug_assert_eq!(cur.shape(), &[batch, self.num_classes]);
        Ok(cur)
    }

    /// Predicted class per row: argmax of logits, ties to lowest index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let z = self.forward_logits(x)?;
        Ok(argmax_rows(&z))
    }

    /// A copy whose parameters are constants. Attacks differentiate
    /// through this snapshot so parameter gradients are neither computed
    /// nor polluted.
    pub fn detached(&self) -> Model {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weight, bias } => Layer::Dense {
                    weight: Tensor::new(weight.shape(), weight.data().to_vec()).unwrap(),
                    bias: Tensor::new(bias.shape(), bias.data().to_vec()).unwrap(),
                },
                Layer::Conv2d { kernel, bias, stride, padding } => Layer::Conv2d {
                    kernel: Tensor::new(kernel.shape(), kernel.data().to_vec()).unwrap(),
                    bias: Tensor::new(bias.shape(), bias.data().to_vec()).unwrap(),
                    stride: *stride,
                    padding: *padding,
                },
                other => other.clone(),
            })
            .collect();
        Model {
            layers,
            num_classes: self.num_classes,
            input_shape: self.input_shape.clone(),
            preset: self.preset.clone(),
        }
    }

    pub fn zero_grad(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Replaces every parameter tensor, preserving shapes.
    pub fn replace_parameters(&mut self, params: Vec<Vec<f64>>) -> Result<()> {
        let expected = self.parameters().len();
        if params.len() != expected {
            return Err(Error::Contract(format!(
                "model has {expected} parameter tensors, got {}",
                params.len()
            )));
        }
        let mut iter = params.into_iter();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            layers.push(layer.with_parameters(&mut iter)?);
        }
        self.layers = layers;
        Ok(())
    }
}

fn dense_init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Layer> {
    let limit = (6.0 / in_dim as f64).sqrt();
    let weight: Vec<f64> = (0..in_dim * out_dim)
        .map(|_| rng.uniform_in(-limit, limit))
        .collect();
    Ok(Layer::Dense {
        weight: Tensor::param(&[in_dim, out_dim], weight)?,
        bias: Tensor::param(&[out_dim], vec![0.0; out_dim])?,
    })
}

fn conv_init(in_ch: usize, out_ch: usize, rng: &mut Rng) -> Result<Layer> {
    let fan_in = in_ch * 9;
    let limit = (6.0 / fan_in as f64).sqrt();
    let kernel: Vec<f64> = (0..out_ch * in_ch * 9)
        .map(|_| rng.uniform_in(-limit, limit))
        .collect();
    Ok(Layer::Conv2d {
        kernel: Tensor::param(&[out_ch, in_ch, 3, 3], kernel)?,
        bias: Tensor::param(&[out_ch], vec![0.0; out_ch])?,
        stride: 1,
        padding: 1,
    })
}

/// Row-wise argmax with ties broken toward the lowest index.
pub fn argmax_rows(z: &Tensor) -> Vec<usize> {
    let c = *z.shape().last().unwrap();
    z.data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Row-wise stable softmax of logits [batch, C]; rows sum to 1 and the
/// row argmax is preserved.
pub fn softmax(z: &Tensor) -> Result<Tensor> {
    z.softmax_rows()
}

/// Mean cross-entropy of logits against class labels, as a scalar tensor.
pub fn cross_entropy(z: &Tensor, labels: &[usize]) -> Result<Tensor> {
    z.cross_entropy_mean(labels)
}

/// One plain SGD step: p <- p - lr * grad(p), then grads are cleared.
/// Errors if any parameter is missing its gradient.
pub fn sgd_step(model: &mut Model, lr: f64) -> Result<()> {
    let mut updated = Vec::new();
    for p in model.parameters() {
        let grad = p.grad().ok_or_else(|| {
            Error::Contract("sgd_step called before backward populated gradients".into())
        })?;
        let data: Vec<f64> = p
            .data()
            .iter()
            .zip(&grad)
            .map(|(w, g)| w - lr * g)
            .collect();
        updated.push(data);
    }
    model.replace_parameters(updated)
}
