//! Embedding networks.
//!
//! Two desk-scale encoders map an image batch (B, C, H, W) to embeddings
//! (B, d):
//!
//! * `conv-small`: three 3x3 convolutions (32, 64, 128 channels, padding 1)
//!   with relu, max pooling after the first two, then global average pooling,
//!   so d = 128;
//! * `mlp-small`: flatten, a 256-unit relu layer, then a linear map to d.
//!
//! There is no normalisation layer, so samples never interact within a batch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{normal_vec, stream_rng, Stream};
use crate::tensor::{Graph, Tensor, Var};

pub const CONV_SMALL_DIM: usize = 128;
pub const MLP_HIDDEN: usize = 256;
pub const MLP_DEFAULT_DIM: usize = 64;

/// Rows per forward pass when embedding a whole dataset.
const EVAL_CHUNK: usize = 250;

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    MlpSmall,
    ConvSmall,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::MlpSmall => "mlp-small",
            EncoderKind::ConvSmall => "conv-small",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp-small" => Ok(EncoderKind::MlpSmall),
            "conv-small" => Ok(EncoderKind::ConvSmall),
            other => Err(Error::config(format!("unknown encoder kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// (channels, height, width)
    pub input: (usize, usize, usize),
    pub embed_dim: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn conv_small(input: (usize, usize, usize), seed: u64) -> Self {
        EncoderConfig {
            kind: EncoderKind::ConvSmall,
            input,
            embed_dim: CONV_SMALL_DIM,
            seed,
        }
    }

    pub fn mlp_small(input: (usize, usize, usize), embed_dim: usize, seed: u64) -> Self {
        EncoderConfig {
            kind: EncoderKind::MlpSmall,
            input,
            embed_dim,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::config(format!("unsupported input shape {:?}", self.input)));
        }
        match self.kind {
            EncoderKind::ConvSmall => {
                // two 2x2 pools need at least a 4x4 input
                if h < 4 || w < 4 {
                    return Err(Error::config(format!(
                        "conv-small needs inputs of at least 4x4, got {h}x{w}"
                    )));
                }
                if self.embed_dim != CONV_SMALL_DIM {
                    return Err(Error::config(format!(
                        "conv-small embeds to {CONV_SMALL_DIM} dims, not {}",
                        self.embed_dim
                    )));
                }
            }
            EncoderKind::MlpSmall => {
                if self.embed_dim == 0 {
                    return Err(Error::config("embedding dim must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    params: Vec<Parameter>,
}

/// He-style normal init with std sqrt(2 / fan_in).
fn he_tensor(rng: &mut crate::rng::SeededRng, shape: &[usize], fan_in: usize) -> Tensor {
    let n = shape.iter().product();
    let std = (2.0 / fan_in as f64).sqrt();
    Tensor::from_parts(shape.to_vec(), normal_vec(rng, n, 0.0, std))
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, Stream::Encoder, 0);
        let (c, h, w) = config.input;
        let mut params = Vec::new();
        match config.kind {
            EncoderKind::ConvSmall => {
                let channels = [c, 32, 64, 128];
                for layer in 0..3 {
                    let (cin, cout) = (channels[layer], channels[layer + 1]);
                    params.push(Parameter::new(
                        format!("conv.{layer}.weight"),
                        he_tensor(&mut rng, &[cout, cin, 3, 3], cin * 9),
                    ));
                    params.push(Parameter::new(format!("conv.{layer}.bias"), Tensor::zeros(&[cout])));
                }
            }
            EncoderKind::MlpSmall => {
                let dims = [c * h * w, MLP_HIDDEN, config.embed_dim];
                for layer in 0..2 {
                    let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
                    params.push(Parameter::new(
                        format!("linear.{layer}.weight"),
                        he_tensor(&mut rng, &[fan_in, fan_out], fan_in),
                    ));
                    params.push(Parameter::new(
                        format!("linear.{layer}.bias"),
                        Tensor::zeros(&[fan_out]),
                    ));
                }
            }
        }
        Ok(Encoder { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Place the parameters on `g`, as gradient leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.value.clone())
                } else {
                    g.input(p.value.clone())
                }
            })
            .collect()
    }

    /// Forward pass of a bound encoder. `x` is (B, C, H, W).
    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let (c, h, w) = self.config.input;
        let s = g.shape(x).to_vec();
        if s.len() != 4 || s[1..] != [c, h, w] {
            return Err(Error::dim("embed", &s, &[0, c, h, w]));
        }
        match self.config.kind {
            EncoderKind::ConvSmall => {
                let mut z = x;
                for layer in 0..3 {
                    z = g.conv2d(z, vars[2 * layer], Some(vars[2 * layer + 1]), 1, 1)?;
                    z = g.relu(z)?;
                    if layer < 2 {
                        z = g.maxpool2(z)?;
                    }
                }
                g.global_avg_pool(z)
            }
            EncoderKind::MlpSmall => {
                let flat = g.reshape(x, &[s[0], c * h * w])?;
                let z = g.matmul(flat, vars[0])?;
                let z = g.add(z, vars[1])?;
                let z = g.relu(z)?;
                let z = g.matmul(z, vars[2])?;
                g.add(z, vars[3])
            }
        }
    }

    /// Embeddings of a batch without recording gradients.
    pub fn embed(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.input(batch.clone());
        let out = self.forward(&mut g, &vars, x)?;
        Ok(g.value(out).clone())
    }

    /// Embeddings of an arbitrarily large batch, computed in fixed chunks.
    pub fn embed_all(&self, images: &Tensor) -> Result<Tensor> {
        let s = images.shape();
        if s.len() != 4 {
            return Err(Error::dim("embed", s, &[0, 0, 0, 0]));
        }
        let per = s[1] * s[2] * s[3];
        let mut out = Vec::with_capacity(s[0] * self.embed_dim());
        for chunk in images.data().chunks(EVAL_CHUNK * per) {
            let rows = chunk.len() / per;
            let t = Tensor::from_parts(vec![rows, s[1], s[2], s[3]], chunk.to_vec());
            out.extend_from_slice(self.embed(&t)?.data());
        }
        Ok(Tensor::from_parts(vec![s[0], self.embed_dim()], out))
    }
}
