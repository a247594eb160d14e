use crate::autodiff::{Graph, NodeId};
use crate::datasets::OutcomeKind;
use crate::error::{Error, Result};
use crate::loss;
use crate::nn::{Activation, Mlp, MlpShape};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::head::OutcomeHead;
use super::mmd::{median_bandwidth, mmd2_node};
use super::training::{Batch, Mode, Trainable};
use super::{EstimatorKind, McDraw, TrainConfig};

/// Propensities are squashed into `[0.01, 0.99]` before the targeted term divides by them.
const TR_PROPENSITY_FLOOR: f64 = 0.01;

/// Shared representation with one outcome head per arm.
///
/// Plain TARNet has `mmd_weight == 0` and no propensity head. CFR-MMD adds
/// an MMD penalty between treated and control representations, Dragonnet a
/// propensity head on the representation.
#[derive(Debug, Clone, PartialEq)]
pub struct TarnetModel {
    pub trunk: Mlp,
    pub head0: OutcomeHead,
    pub head1: OutcomeHead,
    pub mmd_weight: f64,
    pub mmd_bandwidth: Option<f64>,
    pub propensity_head: Option<Mlp>,
    pub propensity_weight: f64,
    /// Targeted-regularization perturbation; only with a propensity head.
    pub epsilon: Option<Tensor>,
}

impl TarnetModel {
    pub fn new(
        kind: EstimatorKind,
        input: usize,
        outcome: OutcomeKind,
        config: &TrainConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if config.trunk_hidden.is_empty() {
            return Err(Error::invalid("trunk needs at least one layer"));
        }
        let trunk = Mlp::stack(
            input,
            &config.trunk_hidden,
            Activation::Elu,
            config.hidden_dropout,
            rng,
        )?;
        let repr = trunk.output_dim();
        let head = |rng: &mut Rng| {
            OutcomeHead::build(
                repr,
                &config.head_hidden,
                outcome,
                config.hidden_dropout,
                config.last_hidden_dropout,
                rng,
            )
        };
        let head0 = head(rng)?;
        let head1 = head(rng)?;
        let dragon = kind == EstimatorKind::Dragonnet;
        let propensity_head = if dragon {
            let shape = MlpShape {
                input: repr,
                hidden: vec![],
                output: 1,
                hidden_activation: Activation::Elu,
                output_activation: Activation::Sigmoid,
                hidden_dropout: 0.0,
                last_hidden_dropout: 0.0,
            };
            Some(Mlp::build(&shape, rng)?)
        } else {
            None
        };
        Ok(Self {
            trunk,
            head0,
            head1,
            mmd_weight: if kind == EstimatorKind::CfrMmd {
                config.mmd_weight
            } else {
                0.0
            },
            mmd_bandwidth: config.mmd_bandwidth,
            propensity_head,
            propensity_weight: config.propensity_head_weight,
            epsilon: (dragon && config.targeted_regularization).then(|| Tensor::vector(vec![0.0])),
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.trunk.params();
        p.extend(self.head0.params());
        p.extend(self.head1.params());
        if let Some(h) = &self.propensity_head {
            p.extend(h.params());
        }
        p.extend(self.epsilon.iter());
        p
    }

    pub(crate) fn mc_draw(&self, x: &Tensor, rng: &mut Rng) -> Result<McDraw<'_>> {
        let mt = self.trunk.sample_masks(rng)?;
        let phi = self.trunk.forward(x, Some(&mt))?;
        let m0 = self.head0.net.sample_masks(rng)?;
        let m1 = self.head1.net.sample_masks(rng)?;
        Ok(McDraw {
            mu0: self.head0.mean(&phi, Some(&m0))?,
            mu1: self.head1.mean(&phi, Some(&m1))?,
            head0: &self.head0,
            head1: &self.head1,
        })
    }

    /// Propensity-head output with dropout off, if present.
    pub fn propensity(&self, x: &Tensor) -> Result<Option<Vec<f64>>> {
        let Some(h) = &self.propensity_head else {
            return Ok(None);
        };
        let phi = self.trunk.forward(x, None)?;
        Ok(Some(h.forward(&phi, None)?.into_data()))
    }
}

impl Trainable for TarnetModel {
    fn params(&self) -> Vec<&Tensor> {
        TarnetModel::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.trunk.params_mut();
        p.extend(self.head0.params_mut());
        p.extend(self.head1.params_mut());
        if let Some(h) = &mut self.propensity_head {
            p.extend(h.params_mut());
        }
        p.extend(self.epsilon.iter_mut());
        p
    }

    fn loss(
        &self,
        g: &mut Graph,
        batch: &Batch,
        mode: Mode,
        _n_train: usize,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        let trunk = self.trunk.bind(g);
        let heads = [self.head0.bind(g), self.head1.bind(g)];
        let prop = self.propensity_head.as_ref().map(|h| h.bind(g));
        let eps = self.epsilon.as_ref().map(|e| g.param(e));

        let n = batch.len();
        let train = mode == Mode::Train;
        let x = g.constant(batch.x.clone());
        let masks = if train {
            Some(self.trunk.sample_row_masks(rng, n)?)
        } else {
            None
        };
        let phi = trunk.forward(g, x, masks.as_deref())?;

        let mut outputs = Vec::with_capacity(2);
        let mut total: Option<NodeId> = None;
        let mut reprs = Vec::with_capacity(2);
        for (arm, (bound, head)) in heads.iter().zip([&self.head0, &self.head1]).enumerate() {
            let masks = if train {
                Some(head.net.sample_row_masks(rng, n)?)
            } else {
                None
            };
            let out = bound.forward(g, phi, masks.as_deref())?;
            outputs.push(out);
            let rows = batch.arm_rows(arm as f64);
            if rows.is_empty() {
                continue;
            }
            let target: Vec<f64> = rows.iter().map(|&i| batch.y[i]).collect();
            let weight = rows.len() as f64 / n as f64;
            reprs.push(g.select_rows(phi, rows.clone())?);
            let factual = g.select_rows(out, rows)?;
            let nll = bound.nll(g, factual, &target)?;
            let term = g.scale(nll, weight);
            total = Some(add_opt(g, total, term)?);
        }
        let mut total = total.ok_or_else(|| Error::invalid("empty batch"))?;

        if self.mmd_weight > 0.0 && reprs.len() == 2 {
            let bandwidth = self
                .mmd_bandwidth
                .unwrap_or_else(|| median_bandwidth(g.value(reprs[0]), g.value(reprs[1])));
            let mmd = mmd2_node(g, reprs[0], reprs[1], bandwidth)?;
            let term = g.scale(mmd, self.mmd_weight);
            total = g.add(total, term)?;
        }

        if let Some(prop) = prop {
            let e = prop.forward(g, phi, None)?;
            let bce = loss::bce_node(g, e, &batch.t)?;
            let term = g.scale(bce, self.propensity_weight);
            total = g.add(total, term)?;
            if let Some(eps) = eps {
                let tr = targeted_term(g, batch, outputs[0], outputs[1], e, eps)?;
                total = g.add(total, tr)?;
            }
        }
        Ok(total)
    }
}

fn add_opt(g: &mut Graph, acc: Option<NodeId>, term: NodeId) -> Result<NodeId> {
    match acc {
        Some(a) => g.add(a, term),
        None => Ok(term),
    }
}

/// `mean (y - Q - eps * h)^2` with `Q` the factual prediction and
/// `h = t / e - (1 - t) / (1 - e)`.
fn targeted_term(
    g: &mut Graph,
    batch: &Batch,
    mu0: NodeId,
    mu1: NodeId,
    e: NodeId,
    eps: NodeId,
) -> Result<NodeId> {
    let n = batch.len();
    let t = Tensor::vector(batch.t.clone());
    let not_t = t.map(|v| 1.0 - v);
    let q1 = g.mul_const(mu1, t.clone())?;
    let q0 = g.mul_const(mu0, not_t.clone())?;
    let q = g.add(q0, q1)?;

    let squeezed = g.scale(e, 1.0 - 2.0 * TR_PROPENSITY_FLOOR);
    let e = g.add_scalar(squeezed, TR_PROPENSITY_FLOOR);
    let neg = g.scale(e, -1.0);
    let one_minus = g.add_scalar(neg, 1.0);
    let inv_e = g.recip(e);
    let inv_one_minus = g.recip(one_minus);
    let a = g.mul_const(inv_e, t)?;
    let b = g.mul_const(inv_one_minus, not_t)?;
    let h = g.sub(a, b)?;

    let eps_rows = g.broadcast_rows(eps, n)?;
    let shift = g.mul(h, eps_rows)?;
    let perturbed = g.add(q, shift)?;
    loss::mse_node(g, perturbed, &batch.y)
}
