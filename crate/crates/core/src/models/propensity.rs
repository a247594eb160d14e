use crate::autodiff::{Graph, NodeId, BCE_CLAMP};
use crate::datasets::{CateDataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::head::OutcomeHead;
use super::training::{self, Batch, Mode, Trainable, TrainingCurve};
use super::TrainConfig;

/// Equal-width bins used by [`expected_calibration_error`].
pub const ECE_BINS: usize = 10;

/// MC-dropout classifier for `p(t = 1 | x)`, shaped like one T-learner branch.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub net: OutcomeHead,
    /// Selected `c` in the weight decay `c / N_train`.
    pub l2: f64,
    /// Validation ECE of every grid value, in grid order.
    pub grid_ece: Vec<(f64, f64)>,
    pub curve: TrainingCurve,
}

struct PropensityNet {
    head: OutcomeHead,
    l2: f64,
}

impl Trainable for PropensityNet {
    fn params(&self) -> Vec<&Tensor> {
        self.head.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.head.params_mut()
    }

    fn loss(
        &self,
        g: &mut Graph,
        batch: &Batch,
        mode: Mode,
        _n_train: usize,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        let bound = self.head.bind(g);
        let x = g.constant(batch.x.clone());
        let masks = match mode {
            Mode::Train => Some(self.head.net.sample_row_masks(rng, batch.len())?),
            Mode::Eval => None,
        };
        let p = bound.forward(g, x, masks.as_deref())?;
        bound.nll(g, p, &batch.t)
    }

    fn weight_decay(&self, _config: &TrainConfig, n_train: usize) -> f64 {
        self.l2 / n_train as f64
    }
}

/// Trains one propensity network per value of `config.propensity_l2_grid`
/// on a 70% split and keeps the one with the lowest ECE on the other 30%.
pub fn train_propensity(
    dataset: &CateDataset,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<PropensityModel> {
    config.validate()?;
    if dataset.t.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::invalid("treatments must be binary"));
    }
    let treated = dataset.t.iter().filter(|&&t| t == 1.0).count();
    if treated == 0 || treated == dataset.len() {
        return Err(Error::invalid(
            "propensity model needs both treated and control units",
        ));
    }
    if config.propensity_l2_grid.is_empty() {
        return Err(Error::invalid("empty propensity L2 grid"));
    }
    let (fit_idx, cal_idx) =
        training::split_indices(dataset.len(), config.validation_fraction, rng);
    let fit_data = dataset.subset(&fit_idx);
    let cal_x = dataset.x.select_rows(&cal_idx);
    let cal_t: Vec<f64> = cal_idx.iter().map(|&i| dataset.t[i]).collect();

    let mut best: Option<(f64, PropensityModel)> = None;
    let mut grid_ece = Vec::with_capacity(config.propensity_l2_grid.len());
    for &l2 in &config.propensity_l2_grid {
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::invalid(format!(
                "propensity L2 must be nonnegative, got {l2}"
            )));
        }
        let mut init = rng.fork();
        let mut fit_rng = rng.fork();
        let head = OutcomeHead::build(
            dataset.num_features(),
            &config.tlearner_hidden,
            OutcomeKind::Binary,
            config.hidden_dropout,
            config.last_hidden_dropout,
            &mut init,
        )?;
        let mut net = PropensityNet { head, l2 };
        let curve = training::fit(
            &mut net,
            &fit_data,
            config,
            config.learning_rate,
            &mut fit_rng,
        )?;
        let model = PropensityModel {
            net: net.head,
            l2,
            grid_ece: Vec::new(),
            curve,
        };
        let ece = if cal_idx.is_empty() {
            0.0
        } else {
            let p = predict_propensity(&model, &cal_x, config.mc_samples, &mut rng.fork())?;
            expected_calibration_error(&p, &cal_t)?
        };
        log::debug!("propensity l2 {l2}: validation ECE {ece:.4}");
        grid_ece.push((l2, ece));
        if best.as_ref().map_or(true, |(b, _)| ece < *b) {
            best = Some((ece, model));
        }
    }
    let (_, mut best) = best.expect("grid is nonempty");
    best.grid_ece = grid_ece;
    Ok(best)
}

/// Mean of `m` MC-dropout propensities per row, kept inside `(0, 1)`.
pub fn predict_propensity(
    model: &PropensityModel,
    x: &Tensor,
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid("need at least one MC sample"));
    }
    if x.cols() != model.net.net.input_dim() {
        return Err(Error::shape(
            "propensity input width",
            model.net.net.input_dim(),
            x.cols(),
        ));
    }
    let mut acc = vec![0.0; x.rows()];
    for _ in 0..m {
        let masks = model.net.net.sample_masks(rng)?;
        for (a, p) in acc.iter_mut().zip(model.net.mean(x, Some(&masks))?) {
            *a += p;
        }
    }
    Ok(acc
        .into_iter()
        .map(|a| (a / m as f64).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP))
        .collect())
}

/// Expected calibration error over [`ECE_BINS`] equal-width probability bins.
pub fn expected_calibration_error(prob: &[f64], label: &[f64]) -> Result<f64> {
    if prob.len() != label.len() {
        return Err(Error::shape("calibration inputs", prob.len(), label.len()));
    }
    if prob.is_empty() {
        return Err(Error::UndefinedMetric(
            "calibration error of zero units".into(),
        ));
    }
    let mut count = [0usize; ECE_BINS];
    let mut sum_p = [0.0; ECE_BINS];
    let mut sum_y = [0.0; ECE_BINS];
    for (&p, &y) in prob.iter().zip(label) {
        let b = ((p * ECE_BINS as f64) as usize).min(ECE_BINS - 1);
        count[b] += 1;
        sum_p[b] += p;
        sum_y[b] += y;
    }
    let n = prob.len() as f64;
    Ok((0..ECE_BINS)
        .filter(|&b| count[b] > 0)
        .map(|b| (sum_p[b] - sum_y[b]).abs() / n)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ece_of_perfect_calibration_is_zero() {
        let p = [0.25, 0.25, 0.25, 0.25];
        let y = [1.0, 0.0, 0.0, 0.0];
        assert!(expected_calibration_error(&p, &y).unwrap().abs() < 1e-15);
    }

    #[test]
    fn ece_by_hand() {
        // bin 0: p 0.05, y 1 -> 0.95; bin 9: p 0.95, 0.95, y 1, 0 -> |1.9 - 1| = 0.9
        let v = expected_calibration_error(&[0.05, 0.95, 0.95], &[1.0, 1.0, 0.0]).unwrap();
        assert!((v - (0.95 + 0.9) / 3.0).abs() < 1e-12);
        assert!(expected_calibration_error(&[], &[]).is_err());
    }
}
