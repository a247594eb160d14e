use crate::autodiff::{Graph, NodeId};
use crate::datasets::OutcomeKind;
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::head::OutcomeHead;
use super::training::{Batch, Mode, Trainable};
use super::{McDraw, TrainConfig};

/// Two independent outcome networks, one per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct TLearnerModel {
    pub mu0_net: OutcomeHead,
    pub mu1_net: OutcomeHead,
}

impl TLearnerModel {
    pub fn new(
        input: usize,
        outcome: OutcomeKind,
        config: &TrainConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mk = |rng: &mut Rng| {
            OutcomeHead::build(
                input,
                &config.tlearner_hidden,
                outcome,
                config.hidden_dropout,
                config.last_hidden_dropout,
                rng,
            )
        };
        Ok(Self {
            mu0_net: mk(rng)?,
            mu1_net: mk(rng)?,
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.mu0_net.params();
        p.extend(self.mu1_net.params());
        p
    }

    pub(crate) fn mc_draw(&self, x: &Tensor, rng: &mut Rng) -> Result<McDraw<'_>> {
        let m0 = self.mu0_net.net.sample_masks(rng)?;
        let m1 = self.mu1_net.net.sample_masks(rng)?;
        Ok(McDraw {
            mu0: self.mu0_net.mean(x, Some(&m0))?,
            mu1: self.mu1_net.mean(x, Some(&m1))?,
            head0: &self.mu0_net,
            head1: &self.mu1_net,
        })
    }
}

impl Trainable for TLearnerModel {
    fn params(&self) -> Vec<&Tensor> {
        TLearnerModel::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.mu0_net.params_mut();
        p.extend(self.mu1_net.params_mut());
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
        let heads = [self.mu0_net.bind(g), self.mu1_net.bind(g)];
        let nets = [&self.mu0_net, &self.mu1_net];
        let n = batch.len() as f64;
        let mut terms = Vec::with_capacity(2);
        for (arm, (bound, head)) in heads.iter().zip(nets).enumerate() {
            let rows = batch.arm_rows(arm as f64);
            if rows.is_empty() {
                continue;
            }
            let x = g.constant(batch.x.select_rows(&rows));
            let masks = match mode {
                Mode::Train => Some(head.net.sample_row_masks(rng, rows.len())?),
                Mode::Eval => None,
            };
            let mean = bound.forward(g, x, masks.as_deref())?;
            let target: Vec<f64> = rows.iter().map(|&i| batch.y[i]).collect();
            let nll = bound.nll(g, mean, &target)?;
            // Weighted so the total is the mean factual loss over the batch.
            terms.push(g.scale(nll, rows.len() as f64 / n));
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = g.add(total, t)?;
        }
        Ok(total)
    }
}
