use crate::autodiff::{Graph, NodeId};
use crate::datasets::OutcomeKind;
use crate::error::Result;
use crate::loss;
use crate::nn::{Activation, BoundMlp, Mlp, MlpShape};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// One arm's outcome network.
///
/// Binary arms emit a Bernoulli probability through a sigmoid. Continuous
/// arms emit a Gaussian mean and carry one learned log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeHead {
    pub net: Mlp,
    pub log_variance: Option<Tensor>,
}

impl OutcomeHead {
    pub(crate) fn build(
        input: usize,
        hidden: &[usize],
        outcome: OutcomeKind,
        hidden_dropout: f64,
        last_hidden_dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let net = Mlp::build(
            &MlpShape {
                input,
                hidden: hidden.to_vec(),
                output: 1,
                hidden_activation: Activation::Elu,
                output_activation: match outcome {
                    OutcomeKind::Binary => Activation::Sigmoid,
                    OutcomeKind::Continuous => Activation::Identity,
                },
                hidden_dropout,
                last_hidden_dropout,
            },
            rng,
        )?;
        let log_variance = match outcome {
            OutcomeKind::Binary => None,
            OutcomeKind::Continuous => Some(Tensor::vector(vec![0.0])),
        };
        Ok(Self { net, log_variance })
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        if self.log_variance.is_some() {
            OutcomeKind::Continuous
        } else {
            OutcomeKind::Binary
        }
    }

    pub(crate) fn params(&self) -> Vec<&Tensor> {
        let mut p = self.net.params();
        p.extend(self.log_variance.iter());
        p
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.net.params_mut();
        p.extend(self.log_variance.iter_mut());
        p
    }

    pub(crate) fn bind(&self, g: &mut Graph) -> BoundHead {
        BoundHead {
            net: self.net.bind(g),
            log_variance: self.log_variance.as_ref().map(|lv| g.param(lv)),
        }
    }

    /// Expected outcome per input row.
    pub(crate) fn mean(&self, x: &Tensor, masks: Option<&[Tensor]>) -> Result<Vec<f64>> {
        Ok(self.net.forward(x, masks)?.into_data())
    }

    /// One draw from the output distribution around `mean`.
    pub fn sample(&self, mean: f64, rng: &mut Rng) -> f64 {
        match &self.log_variance {
            None => {
                if rng.bernoulli(mean) {
                    1.0
                } else {
                    0.0
                }
            }
            Some(lv) => mean + (0.5 * lv.item()).exp() * rng.normal(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BoundHead {
    pub net: BoundMlp,
    pub log_variance: Option<NodeId>,
}

impl BoundHead {
    pub fn forward(
        &self,
        g: &mut Graph,
        input: NodeId,
        masks: Option<&[Tensor]>,
    ) -> Result<NodeId> {
        self.net.forward(g, input, masks)
    }

    /// Mean negative log-likelihood of `target` under the head's output distribution.
    pub fn nll(&self, g: &mut Graph, mean: NodeId, target: &[f64]) -> Result<NodeId> {
        match self.log_variance {
            None => loss::bce_node(g, mean, target),
            Some(lv) => loss::gaussian_nll_node(g, mean, lv, target),
        }
    }
}
