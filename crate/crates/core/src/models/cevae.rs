//! Causal-effect variational autoencoder with an MC-dropout decoder.
//!
//! Encoder (deterministic weights): `q(t|x)`, `q(y|x,t)` and `q(z|x,y,t)`,
//! the latter two with one head per treatment branch. Decoder (dropout on):
//! `p(x|z)`, `p(t|z)` and `p(y|t,z)` with one head per branch. The prior on
//! the decoder weights enters the loss as `0.5 * c / N * |ω|²`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{bce_value, Graph, NodeId};
use crate::datasets::OutcomeKind;
use crate::error::{Error, Result};
use crate::loss;
use crate::nn::{Activation, BoundMlp, Mlp, MlpShape};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::head::{BoundHead, OutcomeHead};
use super::training::{Batch, Mode, Trainable};
use super::{McDraw, TrainConfig};

/// Likelihood of the proxies `x` given `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XLikelihood {
    /// Per-feature Gaussian with a learned log-variance per feature.
    #[default]
    Gaussian,
    /// Per-feature Bernoulli; features must lie in `[0, 1]`.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CevaeModel {
    pub latent_dim: usize,
    pub negative_sampling: bool,
    pub x_likelihood: XLikelihood,
    /// `c` in the decoder weight penalty `0.5 * c / N * |ω|²`.
    pub decoder_l2_scale: f64,
    pub q_t: Mlp,
    pub q_y_trunk: Mlp,
    pub q_y: [OutcomeHead; 2],
    pub q_z_trunk: Mlp,
    /// Each emits `[mean | log-variance]`, `2 * latent_dim` columns.
    pub q_z: [Mlp; 2],
    pub p_x: Mlp,
    pub p_x_log_variance: Option<Tensor>,
    pub p_t: Mlp,
    pub p_y: [OutcomeHead; 2],
}

/// Per-row averages of the terms of the negated training objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CevaeObjective {
    pub reconstruction_x: f64,
    pub reconstruction_t: f64,
    pub reconstruction_y: f64,
    pub kl_z: f64,
    pub auxiliary_t: f64,
    pub auxiliary_y: f64,
    pub negative_sampling_kl: f64,
    pub decoder_l2: f64,
    pub total: f64,
}

struct Bound {
    q_t: BoundMlp,
    q_y_trunk: BoundMlp,
    q_y: [BoundHead; 2],
    q_z_trunk: BoundMlp,
    q_z: [BoundMlp; 2],
    p_x: BoundMlp,
    p_x_log_variance: Option<NodeId>,
    p_t: BoundMlp,
    p_y: [BoundHead; 2],
}

struct ObjectiveNodes {
    rec_x: Option<NodeId>,
    rec_t: Option<NodeId>,
    rec_y: Option<NodeId>,
    kl: Option<NodeId>,
    aux_t: NodeId,
    aux_y: Option<NodeId>,
    neg_kl: Option<NodeId>,
    l2: NodeId,
    total: NodeId,
}

fn sum_opt(g: &mut Graph, acc: Option<NodeId>, term: NodeId) -> Result<Option<NodeId>> {
    Ok(Some(match acc {
        Some(a) => g.add(a, term)?,
        None => term,
    }))
}

fn value_or_zero(g: &Graph, node: Option<NodeId>) -> f64 {
    node.map_or(0.0, |n| g.value(n).item())
}

impl CevaeModel {
    pub fn new(
        input: usize,
        outcome: OutcomeKind,
        config: &TrainConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if config.cevae_hidden.is_empty() {
            return Err(Error::invalid(
                "CEVAE components need at least one hidden layer",
            ));
        }
        let hidden = &config.cevae_hidden;
        let h = *hidden.last().expect("nonempty");
        let latent = config.latent_dim;
        let (pd, pl) = (config.hidden_dropout, config.last_hidden_dropout);
        let mlp = |input, output, out_act, p_hidden, p_last, rng: &mut Rng| {
            Mlp::build(
                &MlpShape {
                    input,
                    hidden: hidden.clone(),
                    output,
                    hidden_activation: Activation::Elu,
                    output_activation: out_act,
                    hidden_dropout: p_hidden,
                    last_hidden_dropout: p_last,
                },
                rng,
            )
        };
        let linear = |input, output, rng: &mut Rng| {
            Mlp::build(
                &MlpShape {
                    input,
                    hidden: vec![],
                    output,
                    hidden_activation: Activation::Elu,
                    output_activation: Activation::Identity,
                    hidden_dropout: 0.0,
                    last_hidden_dropout: 0.0,
                },
                rng,
            )
        };

        let q_t = mlp(input, 1, Activation::Sigmoid, 0.0, 0.0, rng)?;
        let q_y_trunk = Mlp::stack(input, hidden, Activation::Elu, 0.0, rng)?;
        let q_y = [
            OutcomeHead::build(h, &[], outcome, 0.0, 0.0, rng)?,
            OutcomeHead::build(h, &[], outcome, 0.0, 0.0, rng)?,
        ];
        let q_z_trunk = Mlp::stack(input + 1, hidden, Activation::Elu, 0.0, rng)?;
        let q_z = [linear(h, 2 * latent, rng)?, linear(h, 2 * latent, rng)?];

        let x_act = match config.x_likelihood {
            XLikelihood::Gaussian => Activation::Identity,
            XLikelihood::Bernoulli => Activation::Sigmoid,
        };
        let p_x = mlp(latent, input, x_act, pd, pl, rng)?;
        let p_x_log_variance =
            (config.x_likelihood == XLikelihood::Gaussian).then(|| Tensor::zeros(&[input]));
        let p_t = mlp(latent, 1, Activation::Sigmoid, pd, pl, rng)?;
        let p_y = [
            OutcomeHead::build(latent, hidden, outcome, pd, pl, rng)?,
            OutcomeHead::build(latent, hidden, outcome, pd, pl, rng)?,
        ];
        Ok(Self {
            latent_dim: latent,
            negative_sampling: config.negative_sampling,
            x_likelihood: config.x_likelihood,
            decoder_l2_scale: config.weight_decay_scale,
            q_t,
            q_y_trunk,
            q_y,
            q_z_trunk,
            q_z,
            p_x,
            p_x_log_variance,
            p_t,
            p_y,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.q_t.input_dim()
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.p_y[0].outcome_kind()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.q_t.params();
        p.extend(self.q_y_trunk.params());
        for h in &self.q_y {
            p.extend(h.params());
        }
        p.extend(self.q_z_trunk.params());
        for h in &self.q_z {
            p.extend(h.params());
        }
        p.extend(self.p_x.params());
        p.extend(self.p_x_log_variance.iter());
        p.extend(self.p_t.params());
        for h in &self.p_y {
            p.extend(h.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.q_t.params_mut();
        p.extend(self.q_y_trunk.params_mut());
        for h in &mut self.q_y {
            p.extend(h.params_mut());
        }
        p.extend(self.q_z_trunk.params_mut());
        for h in &mut self.q_z {
            p.extend(h.params_mut());
        }
        p.extend(self.p_x.params_mut());
        p.extend(self.p_x_log_variance.iter_mut());
        p.extend(self.p_t.params_mut());
        for h in &mut self.p_y {
            p.extend(h.params_mut());
        }
        p
    }

    fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            q_t: self.q_t.bind(g),
            q_y_trunk: self.q_y_trunk.bind(g),
            q_y: [self.q_y[0].bind(g), self.q_y[1].bind(g)],
            q_z_trunk: self.q_z_trunk.bind(g),
            q_z: [self.q_z[0].bind(g), self.q_z[1].bind(g)],
            p_x: self.p_x.bind(g),
            p_x_log_variance: self.p_x_log_variance.as_ref().map(|lv| g.param(lv)),
            p_t: self.p_t.bind(g),
            p_y: [self.p_y[0].bind(g), self.p_y[1].bind(g)],
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if batch.t.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::invalid("treatments must be binary"));
        }
        if batch.x.cols() != self.input_dim() {
            return Err(Error::shape(
                "CEVAE input width",
                self.input_dim(),
                batch.x.cols(),
            ));
        }
        Ok(())
    }

    /// `sum_k 0.5 * (mu² + exp(lv) - lv - 1)` summed over rows.
    fn kl_sum(g: &mut Graph, mean: NodeId, log_var: NodeId) -> Result<NodeId> {
        let sq = g.square(mean);
        let var = g.exp(log_var);
        let s = g.add(sq, var)?;
        let s = g.sub(s, log_var)?;
        let s = g.add_scalar(s, -1.0);
        let total = g.sum(s);
        Ok(g.scale(total, 0.5))
    }

    fn objective_nodes(
        &self,
        g: &mut Graph,
        batch: &Batch,
        mode: Mode,
        n_train: usize,
        rng: &mut Rng,
    ) -> Result<ObjectiveNodes> {
        self.check_batch(batch)?;
        let b = self.bind(g);
        let n = batch.len();
        let nf = n as f64;
        let d = self.input_dim();
        let latent = self.latent_dim;
        let train = mode == Mode::Train;

        let x = g.constant(batch.x.clone());
        let qt = b.q_t.forward(g, x, None)?;
        let aux_t = loss::bce_node(g, qt, &batch.t)?;

        let hy = b.q_y_trunk.forward(g, x, None)?;
        let y_col = Tensor::matrix(n, 1, batch.y.clone())?;
        let xy = g.constant(Tensor::hstack(&[&batch.x, &y_col])?);
        let hz = b.q_z_trunk.forward(g, xy, None)?;

        let (mut rec_x, mut rec_t, mut rec_y, mut kl, mut aux_y, mut neg_kl) =
            (None, None, None, None, None, None);
        for arm in 0..2 {
            let rows = batch.arm_rows(arm as f64);
            if rows.is_empty() {
                continue;
            }
            let na = rows.len();
            let weight = na as f64 / nf;
            let y_rows: Vec<f64> = rows.iter().map(|&i| batch.y[i]).collect();
            let x_rows = batch.x.select_rows(&rows);

            let hy_a = g.select_rows(hy, rows.clone())?;
            let qy = b.q_y[arm].forward(g, hy_a, None)?;
            let nll = b.q_y[arm].nll(g, qy, &y_rows)?;
            let term = g.scale(nll, weight);
            aux_y = sum_opt(g, aux_y, term)?;

            let hz_a = g.select_rows(hz, rows.clone())?;
            let stats = b.q_z[arm].forward(g, hz_a, None)?;
            let mean = g.slice_cols(stats, 0, latent)?;
            let log_var = g.slice_cols(stats, latent, 2 * latent)?;
            let kl_a = Self::kl_sum(g, mean, log_var)?;
            let term = g.scale(kl_a, 1.0 / nf);
            kl = sum_opt(g, kl, term)?;

            if self.negative_sampling {
                let cf = b.q_z[1 - arm].forward(g, hz_a, None)?;
                let cf_mean = g.slice_cols(cf, 0, latent)?;
                let cf_log_var = g.slice_cols(cf, latent, 2 * latent)?;
                let kl_cf = Self::kl_sum(g, cf_mean, cf_log_var)?;
                let term = g.scale(kl_cf, 1.0 / nf);
                neg_kl = sum_opt(g, neg_kl, term)?;
            }

            let z = if train {
                let half = g.scale(log_var, 0.5);
                let std = g.exp(half);
                let noise: Vec<f64> = (0..na * latent).map(|_| rng.normal()).collect();
                let shift = g.mul_const(std, Tensor::matrix(na, latent, noise)?)?;
                g.add(mean, shift)?
            } else {
                mean
            };

            let masks = |net: &Mlp, rng: &mut Rng| -> Result<Option<Vec<Tensor>>> {
                if train {
                    Ok(Some(net.sample_row_masks(rng, na)?))
                } else {
                    Ok(None)
                }
            };
            let mx = masks(&self.p_x, rng)?;
            let px = b.p_x.forward(g, z, mx.as_deref())?;
            let nll_x = match b.p_x_log_variance {
                Some(lv) => loss::gaussian_nll_node(g, px, lv, x_rows.data())?,
                None => loss::bce_node(g, px, x_rows.data())?,
            };
            // Mean over elements, rescaled to a per-row sum over features.
            let term = g.scale(nll_x, (na * d) as f64 / nf);
            rec_x = sum_opt(g, rec_x, term)?;

            let mt = masks(&self.p_t, rng)?;
            let pt = b.p_t.forward(g, z, mt.as_deref())?;
            let nll_t = loss::bce_node(g, pt, &vec![arm as f64; na])?;
            let term = g.scale(nll_t, weight);
            rec_t = sum_opt(g, rec_t, term)?;

            let my = masks(&self.p_y[arm].net, rng)?;
            let py = b.p_y[arm].forward(g, z, my.as_deref())?;
            let nll_y = b.p_y[arm].nll(g, py, &y_rows)?;
            let term = g.scale(nll_y, weight);
            rec_y = sum_opt(g, rec_y, term)?;
        }

        let mut decoder = b.p_x.param_nodes();
        decoder.extend(b.p_t.param_nodes());
        for h in &b.p_y {
            decoder.extend(h.net.param_nodes());
        }
        let mut sq_norm = None;
        for p in decoder {
            let sq = g.square(p);
            let s = g.sum(sq);
            sq_norm = sum_opt(g, sq_norm, s)?;
        }
        let sq_norm = sq_norm.expect("decoder has parameters");
        let l2 = g.scale(sq_norm, 0.5 * self.decoder_l2_scale / n_train.max(1) as f64);

        let mut total = g.add(aux_t, l2)?;
        for term in [rec_x, rec_t, rec_y, kl, aux_y, neg_kl]
            .into_iter()
            .flatten()
        {
            total = g.add(total, term)?;
        }
        Ok(ObjectiveNodes {
            rec_x,
            rec_t,
            rec_y,
            kl,
            aux_t,
            aux_y,
            neg_kl,
            l2,
            total,
        })
    }

    /// Negated objective on `batch`. `Mode::Train` draws one reparameterized
    /// `z` and per-row decoder masks; `Mode::Eval` uses the posterior mean and
    /// no dropout.
    pub fn objective(
        &self,
        batch: &Batch,
        mode: Mode,
        n_train: usize,
        rng: &mut Rng,
    ) -> Result<CevaeObjective> {
        let mut g = Graph::new();
        let o = self.objective_nodes(&mut g, batch, mode, n_train, rng)?;
        Ok(CevaeObjective {
            reconstruction_x: value_or_zero(&g, o.rec_x),
            reconstruction_t: value_or_zero(&g, o.rec_t),
            reconstruction_y: value_or_zero(&g, o.rec_y),
            kl_z: value_or_zero(&g, o.kl),
            auxiliary_t: g.value(o.aux_t).item(),
            auxiliary_y: value_or_zero(&g, o.aux_y),
            negative_sampling_kl: value_or_zero(&g, o.neg_kl),
            decoder_l2: g.value(o.l2).item(),
            total: g.value(o.total).item(),
        })
    }

    /// Counterfactual-branch term: mean over rows of `KL(q(z|x, y, 1-t) || N(0, I))`.
    /// Zero when negative sampling is off.
    pub fn negative_sampling_pass(&self, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        if !self.negative_sampling {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for arm in 0..2 {
            let rows = batch.arm_rows(arm as f64);
            if rows.is_empty() {
                continue;
            }
            let x = batch.x.select_rows(&rows);
            let y: Vec<f64> = rows.iter().map(|&i| batch.y[i]).collect();
            let (mean, log_var) = self.posterior(&x, &y, 1 - arm)?;
            total += kl_standard_normal(&mean, &log_var).iter().sum::<f64>();
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean and log-variance (`n × latent_dim` each) of `q(z|x, y, t = arm)`.
    pub fn posterior(&self, x: &Tensor, y: &[f64], arm: usize) -> Result<(Tensor, Tensor)> {
        if arm > 1 {
            return Err(Error::invalid(format!(
                "treatment branch {arm} does not exist"
            )));
        }
        let n = x.rows();
        let y_col = Tensor::matrix(n, 1, y.to_vec())?;
        let h = self
            .q_z_trunk
            .forward(&Tensor::hstack(&[x, &y_col])?, None)?;
        let stats = self.q_z[arm].forward(&h, None)?;
        let l = self.latent_dim;
        let mean: Vec<usize> = (0..l).collect();
        let lv: Vec<usize> = (l..2 * l).collect();
        Ok((stats.select_cols(&mean), stats.select_cols(&lv)))
    }

    /// Per-row `log p(x, t, y | z)` with dropout off.
    pub fn decoder_log_likelihood(
        &self,
        z: &Tensor,
        x: &Tensor,
        t: &[f64],
        y: &[f64],
    ) -> Result<Vec<f64>> {
        let n = z.rows();
        if x.rows() != n || t.len() != n || y.len() != n {
            return Err(Error::shape(
                "decoder inputs",
                n,
                (x.rows(), t.len(), y.len()),
            ));
        }
        let px = self.p_x.forward(z, None)?;
        let pt = self.p_t.forward(z, None)?;
        let py = [self.p_y[0].mean(z, None)?, self.p_y[1].mean(z, None)?];
        let d = x.cols();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut ll = 0.0;
            let (xr, pr) = (x.row(i), px.row(i));
            match &self.p_x_log_variance {
                Some(lv) => {
                    for j in 0..d {
                        ll += gaussian_log_pdf(xr[j], pr[j], lv.data()[j]);
                    }
                }
                None => ll -= d as f64 * bce_value(pr, xr),
            }
            ll -= bce_value(&[pt.data()[i]], &[t[i]]);
            let arm = usize::from(t[i] == 1.0);
            let mu = py[arm][i];
            ll += match &self.p_y[arm].log_variance {
                Some(lv) => gaussian_log_pdf(y[i], mu, lv.item()),
                None => -bce_value(&[mu], &[y[i]]),
            };
            out.push(ll);
        }
        Ok(out)
    }

    /// Draws `(z, x, t, y)` from the generative model with dropout off.
    pub fn sample_generative(
        &self,
        n: usize,
        rng: &mut Rng,
    ) -> Result<(Tensor, Tensor, Vec<f64>, Vec<f64>)> {
        let l = self.latent_dim;
        let z = Tensor::matrix(n, l, (0..n * l).map(|_| rng.normal()).collect())?;
        let px = self.p_x.forward(&z, None)?;
        let d = px.cols();
        let mut x = px.into_data();
        for (k, v) in x.iter_mut().enumerate() {
            *v = match &self.p_x_log_variance {
                Some(lv) => *v + (0.5 * lv.data()[k % d]).exp() * rng.normal(),
                None => f64::from(u8::from(rng.bernoulli(*v))),
            };
        }
        let x = Tensor::matrix(n, d, x)?;
        let pt = self.p_t.forward(&z, None)?;
        let t: Vec<f64> = pt
            .data()
            .iter()
            .map(|&p| f64::from(u8::from(rng.bernoulli(p))))
            .collect();
        let py = [self.p_y[0].mean(&z, None)?, self.p_y[1].mean(&z, None)?];
        let y = (0..n)
            .map(|i| {
                let arm = usize::from(t[i] == 1.0);
                self.p_y[arm].sample(py[arm][i], rng)
            })
            .collect();
        Ok((z, x, t, y))
    }

    pub(crate) fn mc_draw(&self, x: &Tensor, rng: &mut Rng) -> Result<McDraw<'_>> {
        let n = x.rows();
        let hy = self.q_y_trunk.forward(x, None)?;
        let mut mu = [Vec::new(), Vec::new()];
        for arm in 0..2 {
            let y_mean = self.q_y[arm].mean(&hy, None)?;
            let y_enc: Vec<f64> = y_mean
                .iter()
                .map(|&m| self.q_y[arm].sample(m, rng))
                .collect();
            let (mean, log_var) = self.posterior(x, &y_enc, arm)?;
            let mut z = mean.into_data();
            for (v, lv) in z.iter_mut().zip(log_var.data()) {
                *v += (0.5 * lv).exp() * rng.normal();
            }
            let z = Tensor::matrix(n, self.latent_dim, z)?;
            let masks = self.p_y[arm].net.sample_masks(rng)?;
            mu[arm] = self.p_y[arm].mean(&z, Some(&masks))?;
        }
        let [mu0, mu1] = mu;
        Ok(McDraw {
            mu0,
            mu1,
            head0: &self.p_y[0],
            head1: &self.p_y[1],
        })
    }
}

fn gaussian_log_pdf(x: f64, mean: f64, log_var: f64) -> f64 {
    -0.5 * ((2.0 * PI).ln() + log_var + (x - mean) * (x - mean) * (-log_var).exp())
}

/// Per-row `KL(N(mean, exp(log_var)) || N(0, I))`.
pub(crate) fn kl_standard_normal(mean: &Tensor, log_var: &Tensor) -> Vec<f64> {
    let l = mean.cols();
    (0..mean.rows())
        .map(|i| {
            (0..l)
                .map(|k| {
                    let (m, lv) = (mean.get2(i, k), log_var.get2(i, k));
                    0.5 * (m * m + lv.exp() - lv - 1.0)
                })
                .sum()
        })
        .collect()
}

impl Trainable for CevaeModel {
    fn params(&self) -> Vec<&Tensor> {
        CevaeModel::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        CevaeModel::params_mut(self)
    }

    fn loss(
        &self,
        g: &mut Graph,
        batch: &Batch,
        mode: Mode,
        n_train: usize,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        Ok(self.objective_nodes(g, batch, mode, n_train, rng)?.total)
    }

    /// The decoder prior is an explicit loss term; no optimizer decay.
    fn weight_decay(&self, _config: &TrainConfig, _n_train: usize) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(negative_sampling: bool) -> (CevaeModel, Batch) {
        let config = TrainConfig {
            cevae_hidden: vec![5],
            latent_dim: 2,
            negative_sampling,
            ..TrainConfig::default()
        };
        let mut rng = Rng::new(4);
        let model = CevaeModel::new(2, OutcomeKind::Continuous, &config, &mut rng).unwrap();
        let batch = Batch {
            x: Tensor::matrix(4, 2, (0..8).map(|_| rng.normal()).collect()).unwrap(),
            t: vec![0.0, 1.0, 0.0, 1.0],
            y: vec![0.3, -1.0, 0.1, 2.0],
        };
        (model, batch)
    }

    #[test]
    fn kl_of_standard_normal_is_zero() {
        let zeros = Tensor::zeros(&[3, 4]);
        assert!(kl_standard_normal(&zeros, &zeros).iter().all(|&k| k == 0.0));
        let shifted = Tensor::full(&[1, 1], 1.0);
        assert_eq!(
            kl_standard_normal(&shifted, &Tensor::zeros(&[1, 1])),
            vec![0.5]
        );
    }

    #[test]
    fn negative_sampling_term() {
        let (off, batch) = tiny(false);
        assert_eq!(off.negative_sampling_pass(&batch).unwrap(), 0.0);
        assert_eq!(
            off.objective(&batch, Mode::Eval, 10, &mut Rng::new(0))
                .unwrap()
                .negative_sampling_kl,
            0.0
        );
        let (on, _) = tiny(true);
        let kl = on.negative_sampling_pass(&batch).unwrap();
        assert!(kl >= 0.0);
        let o = on
            .objective(&batch, Mode::Eval, 10, &mut Rng::new(0))
            .unwrap();
        assert!((o.negative_sampling_kl - kl).abs() < 1e-12);
    }
}
