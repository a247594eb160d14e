//! Dense layers, multilayer perceptrons and dropout masks.
//!
//! Dropout is inverted: a mask entry is `0` with probability `p` and
//! `1 / (1 - p)` otherwise, so a forward pass without masks needs no rescaling.
//! A mask is either one row of width `out` (shared by every input row, i.e.
//! one posterior parameter draw) or a full `rows × out` matrix.

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Elu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => autodiff::elu(x),
            Activation::Sigmoid => autodiff::sigmoid(x),
            Activation::Identity => x,
        }
    }

    fn apply_node(self, g: &mut Graph, x: NodeId) -> NodeId {
        match self {
            Activation::Elu => g.elu(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// Draws an inverted-dropout mask of `width` entries.
pub fn sample_dropout_mask(rng: &mut Rng, p: f64, width: usize) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::DegenerateDropout(p));
    }
    if p == 0.0 {
        return Ok(Tensor::full(&[width], 1.0));
    }
    let keep = 1.0 / (1.0 - p);
    let data = (0..width)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    Ok(Tensor::vector(data))
}

/// `activation(x · W + b)`, followed by dropout when a mask is supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in × out`
    pub weights: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub dropout_prob: f64,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(
        input: usize,
        output: usize,
        dropout_prob: f64,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        if input == 0 || output == 0 {
            return Err(Error::invalid("dense layer dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&dropout_prob) {
            return Err(Error::DegenerateDropout(dropout_prob));
        }
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| rng.uniform_range(-limit, limit))
            .collect();
        Ok(Self {
            weights: Tensor::matrix(input, output, data)?,
            bias: Tensor::zeros(&[output]),
            dropout_prob,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Layer widths, dropout rates and output activation for [`Mlp::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Dropout after every hidden layer except the last one.
    pub hidden_dropout: f64,
    /// Dropout after the last hidden layer (the one feeding the output layer).
    pub last_hidden_dropout: f64,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    format!("layer {} input", i + 1),
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::shape(
                    format!("layer {i} bias"),
                    l.output_dim(),
                    l.bias.len(),
                ));
            }
            if !(0.0..1.0).contains(&l.dropout_prob) {
                return Err(Error::DegenerateDropout(l.dropout_prob));
            }
        }
        Ok(Self { layers })
    }

    pub fn build(shape: &MlpShape, rng: &mut Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(shape.hidden.len() + 1);
        let mut prev = shape.input;
        for (i, &width) in shape.hidden.iter().enumerate() {
            let p = if i + 1 == shape.hidden.len() {
                shape.last_hidden_dropout
            } else {
                shape.hidden_dropout
            };
            layers.push(DenseLayer::glorot(
                prev,
                width,
                p,
                shape.hidden_activation,
                rng,
            )?);
            prev = width;
        }
        layers.push(DenseLayer::glorot(
            prev,
            shape.output,
            0.0,
            shape.output_activation,
            rng,
        )?);
        Self::new(layers)
    }

    /// Hidden layers only: every layer is `activation` with dropout `p`, and
    /// the output is the last hidden representation.
    pub fn stack(
        input: usize,
        widths: &[usize],
        activation: Activation,
        p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input;
        for &width in widths {
            layers.push(DenseLayer::glorot(prev, width, p, activation, rng)?);
            prev = width;
        }
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::output_dim)
    }

    pub fn has_dropout(&self) -> bool {
        self.layers.iter().any(|l| l.dropout_prob > 0.0)
    }

    /// One mask row per layer, shared across input rows: a single posterior draw.
    pub fn sample_masks(&self, rng: &mut Rng) -> Result<Vec<Tensor>> {
        self.layers
            .iter()
            .map(|l| sample_dropout_mask(rng, l.dropout_prob, l.output_dim()))
            .collect()
    }

    /// Independent masks for each of `rows` inputs (training-time dropout).
    pub fn sample_row_masks(&self, rng: &mut Rng, rows: usize) -> Result<Vec<Tensor>> {
        self.layers
            .iter()
            .map(|l| {
                let w = l.output_dim();
                sample_dropout_mask(rng, l.dropout_prob, rows * w)?.reshape(vec![rows, w])
            })
            .collect()
    }

    fn check_masks(&self, masks: &[Tensor], rows: usize) -> Result<()> {
        if masks.len() != self.layers.len() {
            return Err(Error::shape(
                "dropout masks",
                self.layers.len(),
                masks.len(),
            ));
        }
        for (i, (m, l)) in masks.iter().zip(&self.layers).enumerate() {
            let w = l.output_dim();
            if m.len() != w && m.len() != rows * w {
                return Err(Error::shape(
                    format!("layer {i} dropout mask"),
                    w,
                    m.shape(),
                ));
            }
        }
        Ok(())
    }

    /// Eager forward pass for an `n × in` input.
    pub fn forward(&self, input: &Tensor, masks: Option<&[Tensor]>) -> Result<Tensor> {
        let rows = input.rows();
        if let Some(masks) = masks {
            self.check_masks(masks, rows)?;
        }
        let mut h = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if h.cols() != layer.input_dim() {
                return Err(Error::shape(
                    format!("layer {i} input"),
                    layer.input_dim(),
                    h.cols(),
                ));
            }
            let mut z = h.matmul(&layer.weights)?;
            let out = layer.output_dim();
            for r in 0..rows {
                let row = &mut z.data_mut()[r * out..(r + 1) * out];
                for (v, &b) in row.iter_mut().zip(layer.bias.data()) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            if let Some(masks) = masks {
                let m = masks[i].data();
                if m.len() == out {
                    for row in z.data_mut().chunks_mut(out) {
                        for (v, &k) in row.iter_mut().zip(m) {
                            *v *= k;
                        }
                    }
                } else {
                    for (v, &k) in z.data_mut().iter_mut().zip(m) {
                        *v *= k;
                    }
                }
            }
            h = z;
        }
        Ok(h)
    }

    /// Registers the parameters on `g` in [`Mlp::params`] order.
    pub fn bind(&self, g: &mut Graph) -> BoundMlp {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|l| BoundLayer {
                    weights: g.param(&l.weights),
                    bias: g.param(&l.bias),
                    activation: l.activation,
                    input_dim: l.input_dim(),
                    output_dim: l.output_dim(),
                })
                .collect(),
        }
    }

    /// Weight then bias, layer by layer.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    /// Copy with every dropout probability replaced.
    pub fn with_dropout(&self, p: f64) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            l.dropout_prob = p;
        }
        out
    }
}

#[derive(Debug, Clone)]
struct BoundLayer {
    weights: NodeId,
    bias: NodeId,
    activation: Activation,
    input_dim: usize,
    output_dim: usize,
}

/// An [`Mlp`] whose parameters live on a [`Graph`].
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<BoundLayer>,
}

impl BoundMlp {
    /// Parameter nodes, weight then bias per layer.
    pub fn param_nodes(&self) -> Vec<NodeId> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights, l.bias])
            .collect()
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        input: NodeId,
        masks: Option<&[Tensor]>,
    ) -> Result<NodeId> {
        if let Some(m) = masks {
            if m.len() != self.layers.len() {
                return Err(Error::shape("dropout masks", self.layers.len(), m.len()));
            }
        }
        let mut h = input;
        for (i, layer) in self.layers.iter().enumerate() {
            if g.value(h).cols() != layer.input_dim {
                return Err(Error::shape(
                    format!("layer {i} input"),
                    layer.input_dim,
                    g.value(h).cols(),
                ));
            }
            let z = g.matmul(h, layer.weights)?;
            let z = g.add_bias(z, layer.bias)?;
            h = layer.activation.apply_node(g, z);
            if let Some(masks) = masks {
                let m = &masks[i];
                if m.len() != layer.output_dim && m.len() != g.value(h).len() {
                    return Err(Error::shape(
                        format!("layer {i} dropout mask"),
                        layer.output_dim,
                        m.shape(),
                    ));
                }
                // Entirely-ones masks are skipped; multiplying by 1.0 would be exact anyway.
                if m.data().iter().any(|&v| v != 1.0) {
                    h = g.mul_const(h, m.clone())?;
                }
            }
        }
        Ok(h)
    }
}
