use crate::autodiff::{Graph, NodeId};
use crate::datasets::CateDataset;
use crate::error::{Error, Result};
use crate::optim::AdamState;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::TrainConfig;

/// Rows of a dataset as dense training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Batch {
    pub fn from_dataset(data: &CateDataset, idx: &[usize]) -> Self {
        Self {
            x: data.x.select_rows(idx),
            t: idx.iter().map(|&i| data.t[i]).collect(),
            y: idx.iter().map(|&i| data.y[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Row indices with treatment `arm`.
    pub fn arm_rows(&self, arm: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.t[i] == arm).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout on, latent variables sampled.
    Train,
    /// Deterministic: no dropout, posterior means.
    Eval,
}

pub(crate) trait Trainable {
    fn params(&self) -> Vec<&Tensor>;

    /// Same order as [`Trainable::params`] and as the graph registration in `loss`.
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    /// Scalar loss of `batch`. Must register every parameter on `g`, in order.
    fn loss(
        &self,
        g: &mut Graph,
        batch: &Batch,
        mode: Mode,
        n_train: usize,
        rng: &mut Rng,
    ) -> Result<NodeId>;

    /// Decoupled weight decay handed to the optimizer.
    fn weight_decay(&self, config: &TrainConfig, n_train: usize) -> f64 {
        config.weight_decay_scale / n_train as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingCurve {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Seeded split into `(train, validation)` row indices.
pub(crate) fn split_indices(
    n: usize,
    validation_fraction: f64,
    rng: &mut Rng,
) -> (Vec<usize>, Vec<usize>) {
    let perm = rng.permutation(n);
    let n_val = if n < 2 {
        0
    } else {
        ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1)
    };
    let (val, train) = perm.split_at(n_val);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub(crate) fn eval_loss<M: Trainable>(
    model: &M,
    batch: &Batch,
    n_train: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut g = Graph::new();
    let loss = model.loss(&mut g, batch, Mode::Eval, n_train, rng)?;
    Ok(g.value(loss).item())
}

/// Adam with early stopping on the validation loss; the best parameters are restored.
pub(crate) fn fit<M: Trainable>(
    model: &mut M,
    data: &CateDataset,
    config: &TrainConfig,
    learning_rate: f64,
    rng: &mut Rng,
) -> Result<TrainingCurve> {
    let (train_idx, val_idx) = split_indices(data.len(), config.validation_fraction, rng);
    let n_train = train_idx.len();
    let val_batch = (!val_idx.is_empty()).then(|| Batch::from_dataset(data, &val_idx));
    let mut adam = AdamState::new(
        &model.params(),
        learning_rate,
        model.weight_decay(config, n_train),
    );

    let mut curve = TrainingCurve::default();
    let mut best_loss = f64::INFINITY;
    let mut best_params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let mut since_best = 0;
    let mut order = train_idx.clone();

    for epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::from_dataset(data, chunk);
            let mut g = Graph::new();
            let loss = model.loss(&mut g, &batch, Mode::Train, n_train, rng)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Divergence(format!("training loss at epoch {epoch}")));
            }
            let grads = g.backward(loss)?;
            debug_assert_eq!(grads.len(), model.params().len());
            adam.step(&mut model.params_mut(), &grads)?;
            total += value * chunk.len() as f64;
        }
        let train_loss = total / n_train as f64;
        let monitored = match &val_batch {
            Some(v) => eval_loss(model, v, n_train, rng)?,
            None => train_loss,
        };
        curve.train_loss.push(train_loss);
        curve.validation_loss.push(monitored);
        curve.epochs_run = epoch + 1;

        if monitored < best_loss {
            best_loss = monitored;
            curve.best_epoch = epoch;
            since_best = 0;
            for (dst, src) in best_params.iter_mut().zip(model.params()) {
                dst.clone_from(src);
            }
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    for (dst, src) in model.params_mut().into_iter().zip(best_params) {
        *dst = src;
    }
    log::debug!(
        "trained {} epochs, best epoch {} (validation loss {best_loss:.5})",
        curve.epochs_run,
        curve.best_epoch
    );
    Ok(curve)
}
