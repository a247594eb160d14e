//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! registered with [`Graph::param`] in a fixed order, and [`Graph::backward`]
//! returns their gradients in that same order. Graphs are cheap to build and
//! are thrown away after each optimizer step.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the BCE loss.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulConst(NodeId, Tensor),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Elu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Recip(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    BroadcastRows(NodeId),
    SelectRows(NodeId, Vec<usize>),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Bce(NodeId, Tensor),
    RbfMean(NodeId, NodeId, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// A trainable leaf. Gradients are returned in registration order.
    pub fn param(&mut self, value: &Tensor) -> NodeId {
        let id = self.push(value.clone(), Op::Param);
        self.params.push(id);
        id
    }

    fn same_len(&self, ctx: &str, a: NodeId, b: NodeId) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != vb.len() {
            return Err(Error::shape(ctx, va.shape(), vb.shape()));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Adds a length-`m` bias to every row of an `n × m` input.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (n, m) = self.value(a).dims2();
        let b = self.value(bias);
        if b.len() != m {
            return Err(Error::shape("add_bias", m, b.len()));
        }
        let mut out = self.value(a).clone().into_data();
        for r in 0..n {
            for (o, &bv) in out[r * m..(r + 1) * m].iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        let v = Tensor::matrix(n, m, out)?;
        Ok(self.push(v, Op::AddBias(a, bias)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant (e.g. a dropout mask). A rank-1
    /// constant whose length equals the column count is applied to every row.
    pub fn mul_const(&mut self, a: NodeId, c: Tensor) -> Result<NodeId> {
        let va = self.value(a);
        let c = if c.len() == va.len() {
            c
        } else if c.len() == va.cols() {
            broadcast_rows(&c, va.rows())
        } else {
            return Err(Error::shape("mul_const", va.shape(), c.shape()));
        };
        let v = va.zip_map(&c, |x, y| x * y)?;
        Ok(self.push(v, Op::MulConst(a, c)))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(elu);
        self.push(v, Op::Elu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(v, Op::Recip(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).mean());
        self.push(v, Op::Mean(a))
    }

    /// Repeats a single row (`[c]` or `1 × c`) `n` times.
    pub fn broadcast_rows(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        let va = self.value(a);
        if va.rows() != 1 {
            return Err(Error::shape("broadcast_rows", 1, va.rows()));
        }
        let v = broadcast_rows(va, n);
        Ok(self.push(v, Op::BroadcastRows(a)))
    }

    pub fn select_rows(&mut self, a: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::shape("select_rows index", va.rows(), bad));
        }
        let v = va.select_rows(&idx);
        Ok(self.push(v, Op::SelectRows(a, idx)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::hstack(&tensors)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let va = self.value(a);
        if start >= end || end > va.cols() {
            return Err(Error::shape("slice_cols", va.cols(), (start, end)));
        }
        let idx: Vec<usize> = (start..end).collect();
        let v = va.select_cols(&idx);
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    /// Mean binary cross-entropy of probabilities `pred` against `target`.
    pub fn bce(&mut self, pred: NodeId, target: Tensor) -> Result<NodeId> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(Error::shape("bce", p.len(), target.len()));
        }
        let v = Tensor::scalar(bce_value(p.data(), target.data()));
        Ok(self.push(v, Op::Bce(pred, target)))
    }

    /// `mean_{i,j} exp(-gamma * |a_i - b_j|^2)` over the rows of `a` and `b`.
    pub fn rbf_mean(&mut self, a: NodeId, b: NodeId, gamma: f64) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Error::shape("rbf_mean width", va.cols(), vb.cols()));
        }
        if va.rows() == 0 || vb.rows() == 0 {
            return Err(Error::invalid("rbf_mean of an empty set"));
        }
        let k = rbf_matrix(va, vb, gamma);
        let v = Tensor::scalar(k.iter().sum::<f64>() / k.len() as f64);
        Ok(self.push(v, Op::RbfMean(a, b, gamma)))
    }

    /// Reverse pass from a scalar node. Returns one gradient per registered
    /// parameter, zero-filled when the parameter did not influence the loss.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Tensor>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (n, k) = va.dims2();
                    let m = vb.cols();
                    let mut ga = vec![0.0; n * k];
                    gemm(n, m, k, g.data(), false, vb.data(), true, &mut ga, 0.0);
                    let mut gb = vec![0.0; k * m];
                    gemm(k, n, m, va.data(), true, g.data(), false, &mut gb, 0.0);
                    accumulate(&mut grads, *a, ga, va.shape());
                    accumulate(&mut grads, *b, gb, vb.shape());
                }
                Op::AddBias(a, bias) => {
                    let m = g.cols();
                    let mut gb = vec![0.0; m];
                    for row in g.data().chunks(m) {
                        for (acc, &v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    let bshape = self.value(*bias).shape().to_vec();
                    accumulate(&mut grads, *bias, gb, &bshape);
                    let ashape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, g.into_data(), &ashape);
                }
                Op::Add(a, b) => {
                    let bshape = self.value(*b).shape().to_vec();
                    accumulate(&mut grads, *b, g.data().to_vec(), &bshape);
                    let ashape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, g.into_data(), &ashape);
                }
                Op::Sub(a, b) => {
                    let bshape = self.value(*b).shape().to_vec();
                    accumulate(
                        &mut grads,
                        *b,
                        g.data().iter().map(|v| -v).collect(),
                        &bshape,
                    );
                    let ashape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, g.into_data(), &ashape);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = g.zip_map(vb, |x, y| x * y)?;
                    let gb = g.zip_map(va, |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga.into_data(), va.shape());
                    accumulate(&mut grads, *b, gb.into_data(), vb.shape());
                }
                Op::MulConst(a, c) => {
                    let ga = g.zip_map(c, |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga.into_data(), self.value(*a).shape());
                }
                Op::Scale(a, s) => {
                    let ga = g.map(|x| x * s);
                    accumulate(&mut grads, *a, ga.into_data(), self.value(*a).shape());
                }
                Op::AddScalar(a) => {
                    accumulate(&mut grads, *a, g.into_data(), self.value(*a).shape());
                }
                Op::Elu(a) => {
                    let ga =
                        g.zip_map(self.value(*a), |x, z| if z > 0.0 { x } else { x * z.exp() })?;
                    accumulate(&mut grads, *a, ga.into_data(), self.value(*a).shape());
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, s| x * s * (1.0 - s))?;
                    accumulate(&mut grads, *a, ga.into_data(), self.value(*a).shape());
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |x, e| x * e)?;
                    accumulate(&mut grads, *a, ga.into_data(), self.value(*a).shape());
                }
                Op::Recip(a) => {
                    let ga = g.zip_map(&node.value, |x, r| -x * r * r)?;
                    accumulate(&mut grads, *a, ga.into_data(), self.value(*a).shape());
                }
                Op::Square(a) => {
                    let ga = g.zip_map(self.value(*a), |x, z| 2.0 * x * z)?;
                    accumulate(&mut grads, *a, ga.into_data(), self.value(*a).shape());
                }
                Op::Sum(a) => {
                    let va = self.value(*a);
                    accumulate(&mut grads, *a, vec![g.item(); va.len()], va.shape());
                }
                Op::Mean(a) => {
                    let va = self.value(*a);
                    let s = g.item() / va.len() as f64;
                    accumulate(&mut grads, *a, vec![s; va.len()], va.shape());
                }
                Op::BroadcastRows(a) => {
                    let va = self.value(*a);
                    let c = va.len();
                    let mut ga = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        for (acc, &v) in ga.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *a, ga, va.shape());
                }
                Op::SelectRows(a, idx) => {
                    let va = self.value(*a);
                    let c = va.cols();
                    let mut ga = vec![0.0; va.len()];
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..c {
                            ga[src * c + j] += g.data()[r * c + j];
                        }
                    }
                    accumulate(&mut grads, *a, ga, va.shape());
                }
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let vp = self.value(p);
                        let c = vp.cols();
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(
                                &g.data()[r * total + offset..r * total + offset + c],
                            );
                        }
                        accumulate(&mut grads, p, gp, vp.shape());
                        offset += c;
                    }
                }
                Op::SliceCols(a, start) => {
                    let va = self.value(*a);
                    let (rows, total) = va.dims2();
                    let c = g.cols();
                    let mut ga = vec![0.0; va.len()];
                    for r in 0..rows {
                        ga[r * total + start..r * total + start + c]
                            .copy_from_slice(&g.data()[r * c..(r + 1) * c]);
                    }
                    accumulate(&mut grads, *a, ga, va.shape());
                }
                Op::Bce(pred, target) => {
                    let vp = self.value(*pred);
                    let n = vp.len() as f64;
                    let up = g.item();
                    let ga: Vec<f64> = vp
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(&p, &y)| {
                            if p < BCE_CLAMP || p > 1.0 - BCE_CLAMP {
                                0.0
                            } else {
                                up * (-y / p + (1.0 - y) / (1.0 - p)) / n
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *pred, ga, vp.shape());
                }
                Op::RbfMean(a, b, gamma) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let k = rbf_matrix(va, vb, *gamma);
                    let (na, d) = va.dims2();
                    let nb = vb.rows();
                    let scale = g.item() / (na * nb) as f64;
                    let mut ga = vec![0.0; va.len()];
                    let mut gb = vec![0.0; vb.len()];
                    for i in 0..na {
                        for j in 0..nb {
                            // d/da_i exp(-gamma |a_i - b_j|^2) = -2 gamma k (a_i - b_j)
                            let w = -2.0 * gamma * k[i * nb + j] * scale;
                            for c in 0..d {
                                let diff = va.data()[i * d + c] - vb.data()[j * d + c];
                                ga[i * d + c] += w * diff;
                                gb[j * d + c] -= w * diff;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga, va.shape());
                    accumulate(&mut grads, *b, gb, vb.shape());
                }
            }
        }

        Ok(self
            .params
            .iter()
            .map(|&p| {
                grads[p.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.value(p).shape()))
            })
            .collect())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Vec<f64>, shape: &[usize]) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(g) {
                *e += v;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), g).expect("gradient shape matches value"));
        }
    }
}

fn broadcast_rows(row: &Tensor, n: usize) -> Tensor {
    let c = row.len();
    let mut data = Vec::with_capacity(n * c);
    for _ in 0..n {
        data.extend_from_slice(row.data());
    }
    Tensor::matrix(n, c, data).expect("broadcast shape")
}

pub(crate) fn rbf_matrix(a: &Tensor, b: &Tensor, gamma: f64) -> Vec<f64> {
    let (na, d) = a.dims2();
    let nb = b.rows();
    let mut k = vec![0.0; na * nb];
    for i in 0..na {
        let ai = &a.data()[i * d..(i + 1) * d];
        for j in 0..nb {
            let bj = &b.data()[j * d..(j + 1) * d];
            let sq: f64 = ai.iter().zip(bj).map(|(x, y)| (x - y) * (x - y)).sum();
            k[i * nb + j] = (-gamma * sq).exp();
        }
    }
    k
}

pub(crate) fn bce_value(pred: &[f64], target: &[f64]) -> f64 {
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / pred.len() as f64
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
