//! Feedforward ReLU network with inverted dropout and four output heads.
//!
//! All parameters live in one flat vector. Hidden layer `l` stores its
//! weights row-major (`outputs x inputs`) followed by its biases; the head
//! comes last. The CORAL ordinal head has a single shared weight row and
//! `k - 1` biases.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::rng;
use crate::types::{ModelFamily, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Off,
    /// Masks drawn from `rng::stream(seed, 0)`.
    Sample(u64),
}

/// Training target for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// 0 or 1.
    Binary(f64),
    /// Class index for softmax cross-entropy.
    Class(usize),
    /// Rank-encoded levels for CORAL.
    Ordinal(Vec<f64>),
    /// Regression target.
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub kind: ModelKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Block {
    inputs: usize,
    /// Weight rows.
    rows: usize,
    /// Bias count (equals `rows` except for the CORAL head).
    biases: usize,
    weight_offset: usize,
    bias_offset: usize,
}

impl Block {
    fn len(&self) -> usize {
        self.rows * self.inputs + self.biases
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    config: NetConfig,
    blocks: Vec<Block>,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct Trace {
    /// Input to each block (post-dropout activations for hidden outputs).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    /// Dropout scale per hidden unit (0 or 1/(1-rate)); empty when off.
    masks: Vec<Vec<f64>>,
    /// Head pre-activations.
    head: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn head_width(kind: ModelKind) -> (usize, usize) {
    match kind.family() {
        ModelFamily::Binary | ModelFamily::Regression => (1, 1),
        ModelFamily::MultiClass => (kind.num_classes(), kind.num_classes()),
        ModelFamily::Ordinal => (1, kind.num_classes() - 1),
    }
}

impl ToyNet {
    /// Builds a network with He-normal hidden weights, zero hidden biases and
    /// descending CORAL biases.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        if config.input_dim == 0 || config.hidden.contains(&0) {
            return Err(NetError::InvalidConfig(
                "layer widths must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.dropout_rate) {
            return Err(NetError::InvalidConfig(format!(
                "dropout rate {} outside [0, 1)",
                config.dropout_rate
            )));
        }
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut inputs = config.input_dim;
        let (head_rows, head_biases) = head_width(config.kind);
        let widths = config
            .hidden
            .iter()
            .map(|&h| (h, h))
            .chain(std::iter::once((head_rows, head_biases)));
        for (rows, biases) in widths {
            let block = Block {
                inputs,
                rows,
                biases,
                weight_offset: offset,
                bias_offset: offset + rows * inputs,
            };
            offset += block.len();
            blocks.push(block);
            inputs = rows;
        }

        let mut params = vec![0.0; offset];
        let mut rng = rng::stream(seed, rng::tags::INIT);
        let last = blocks.len() - 1;
        for (l, b) in blocks.iter().enumerate() {
            let std = if l == last {
                (1.0 / b.inputs as f64).sqrt()
            } else {
                (2.0 / b.inputs as f64).sqrt()
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut params[b.weight_offset..b.bias_offset] {
                *w = normal.sample(&mut rng);
            }
        }
        if config.kind.family() == ModelFamily::Ordinal {
            let head = blocks[last];
            let n = head.biases as f64;
            for j in 0..head.biases {
                params[head.bias_offset + j] = (n - 1.0) / 2.0 - j as f64;
            }
        }
        Ok(ToyNet {
            config,
            blocks,
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn dropout_rate(&self) -> f64 {
        self.config.dropout_rate
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Number of values the head emits.
    pub fn output_len(&self) -> usize {
        self.blocks.last().map(|b| b.biases).unwrap_or(0)
    }

    /// CORAL biases of an ordinal head.
    pub fn head_biases_mut(&mut self) -> &mut [f64] {
        let head = *self.blocks.last().expect("network has a head");
        &mut self.params[head.bias_offset..head.bias_offset + head.biases]
    }

    fn affine(&self, block: &Block, input: &[f64]) -> Vec<f64> {
        let w = &self.params[block.weight_offset..block.bias_offset];
        let b = &self.params[block.bias_offset..block.bias_offset + block.biases];
        (0..block.biases)
            .map(|j| {
                let row = if block.rows == 1 { 0 } else { j };
                let wr = &w[row * block.inputs..(row + 1) * block.inputs];
                wr.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + b[j]
            })
            .collect()
    }

    /// Dense layers share the affine map above; hidden rows equal biases.
    fn trace(&self, x: &[f64], mode: DropoutMode) -> Result<Trace, NetError> {
        if x.len() != self.config.input_dim {
            return Err(NetError::InputWidth {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        let rate = self.config.dropout_rate;
        let mut rng = match mode {
            DropoutMode::Off => None,
            DropoutMode::Sample(seed) => Some(rng::stream(seed, 0)),
        };
        let keep_scale = 1.0 / (1.0 - rate);
        let hidden_layers = self.blocks.len() - 1;
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut pre = Vec::with_capacity(hidden_layers);
        let mut masks = Vec::new();
        let mut current = x.to_vec();
        for block in &self.blocks[..hidden_layers] {
            let z = self.affine(block, &current);
            let mut h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            if let Some(rng) = rng.as_mut() {
                let mask: Vec<f64> = (0..h.len())
                    .map(|_| {
                        if rng.random::<f64>() < rate {
                            0.0
                        } else {
                            keep_scale
                        }
                    })
                    .collect();
                h.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                masks.push(mask);
            }
            inputs.push(std::mem::replace(&mut current, h));
            pre.push(z);
        }
        let head = self.affine(&self.blocks[hidden_layers], &current);
        inputs.push(current);
        Ok(Trace {
            inputs,
            pre,
            masks,
            head,
        })
    }

    /// Head pre-activations (logits for binary, multi-class and ordinal).
    pub fn logits(&self, x: &[f64], mode: DropoutMode) -> Result<Vec<f64>, NetError> {
        Ok(self.trace(x, mode)?.head)
    }

    /// Hidden activations of the first layer, after dropout.
    pub fn first_hidden(&self, x: &[f64], mode: DropoutMode) -> Result<Vec<f64>, NetError> {
        let t = self.trace(x, mode)?;
        Ok(t.inputs.get(1).cloned().unwrap_or_default())
    }

    /// Head outputs: sigmoid for binary and ordinal, raw logits for
    /// multi-class, the linear value for regression.
    pub fn forward(&self, x: &[f64], mode: DropoutMode) -> Result<Vec<f64>, NetError> {
        let z = self.logits(x, mode)?;
        Ok(match self.config.kind.family() {
            ModelFamily::Binary | ModelFamily::Ordinal => z.into_iter().map(sigmoid).collect(),
            ModelFamily::MultiClass | ModelFamily::Regression => z,
        })
    }

    /// Mean loss over `batch` and its gradient with respect to every parameter.
    ///
    /// With `dropout = Some(seed)` example `i` uses the mask of
    /// `DropoutMode::Sample(rng::derive_seed(seed, i))`.
    pub fn loss_and_gradient(
        &self,
        batch: &[&Example],
        dropout: Option<u64>,
    ) -> Result<(f64, Vec<f64>), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let hidden_layers = self.blocks.len() - 1;
        for (i, ex) in batch.iter().enumerate() {
            let mode = match dropout {
                Some(seed) => DropoutMode::Sample(rng::derive_seed(seed, i as u64)),
                None => DropoutMode::Off,
            };
            let trace = self.trace(&ex.features, mode)?;
            let (loss, dz_head) = head_loss(self.config.kind, &trace.head, &ex.target)?;
            total += loss;

            let mut delta = dz_head;
            for l in (0..=hidden_layers).rev() {
                let block = self.blocks[l];
                let input = &trace.inputs[l];
                let mut d_input = vec![0.0; block.inputs];
                for (j, &d) in delta.iter().enumerate() {
                    let row = if block.rows == 1 { 0 } else { j };
                    grad[block.bias_offset + j] += d;
                    let woff = block.weight_offset + row * block.inputs;
                    for (k, &x) in input.iter().enumerate() {
                        grad[woff + k] += d * x;
                        d_input[k] += d * self.params[woff + k];
                    }
                }
                if l == 0 {
                    break;
                }
                // back through dropout mask and ReLU of hidden layer l-1
                let z = &trace.pre[l - 1];
                delta = d_input
                    .iter()
                    .enumerate()
                    .map(|(k, &g)| {
                        let m = trace.masks.get(l - 1).map_or(1.0, |m| m[k]);
                        if z[k] > 0.0 {
                            g * m
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }

    /// Mean deterministic loss over a data set.
    pub fn mean_loss(&self, data: &[Example]) -> Result<f64, NetError> {
        let mut total = 0.0;
        for ex in data {
            let z = self.logits(&ex.features, DropoutMode::Off)?;
            total += head_loss(self.config.kind, &z, &ex.target)?.0;
        }
        Ok(total / data.len().max(1) as f64)
    }
}

/// Loss of one example from head pre-activations, and its gradient with
/// respect to them.
///
/// Binary cross-entropy, softmax cross-entropy, CORAL (mean binary
/// cross-entropy over the `k - 1` rank tasks) and squared error.
pub fn head_loss(kind: ModelKind, z: &[f64], target: &Target) -> Result<(f64, Vec<f64>), NetError> {
    let mismatch = || NetError::TargetMismatch {
        kind,
        target: format!("{target:?}"),
    };
    match (kind.family(), target) {
        (ModelFamily::Binary, Target::Binary(y)) => {
            let z0 = z[0];
            Ok((softplus(z0) - y * z0, vec![sigmoid(z0) - y]))
        }
        (ModelFamily::MultiClass, Target::Class(c)) => {
            if *c >= z.len() {
                return Err(mismatch());
            }
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            let grad = z
                .iter()
                .enumerate()
                .map(|(i, v)| (v - lse).exp() - if i == *c { 1.0 } else { 0.0 })
                .collect();
            Ok((lse - z[*c], grad))
        }
        (ModelFamily::Ordinal, Target::Ordinal(levels)) => {
            if levels.len() != z.len() {
                return Err(mismatch());
            }
            let tasks = z.len() as f64;
            let loss = z
                .iter()
                .zip(levels)
                .map(|(&zj, &t)| softplus(zj) - t * zj)
                .sum::<f64>()
                / tasks;
            let grad = z
                .iter()
                .zip(levels)
                .map(|(&zj, &t)| (sigmoid(zj) - t) / tasks)
                .collect();
            Ok((loss, grad))
        }
        (ModelFamily::Regression, Target::Value(y)) => {
            let r = z[0] - y;
            Ok((r * r, vec![2.0 * r]))
        }
        _ => Err(mismatch()),
    }
}
