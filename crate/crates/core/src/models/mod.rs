//! MC-dropout CATE estimators and the propensity model.
//!
//! Every estimator is trained on a 70/30 train/validation split of the data it
//! is given, with Adam and early stopping on the (dropout-free) validation
//! loss. At prediction time dropout stays on: each Monte-Carlo draw samples
//! one mask per layer, shared by all units, i.e. one parameter draw.

mod cevae;
mod checkpoint;
mod head;
mod mmd;
mod propensity;
mod tarnet;
mod tlearner;
mod training;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cevae::{CevaeModel, CevaeObjective, XLikelihood};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use head::OutcomeHead;
pub use mmd::{median_bandwidth, mmd2};
pub use propensity::{
    expected_calibration_error, predict_propensity, train_propensity, PropensityModel,
};
pub use tarnet::TarnetModel;
pub use tlearner::TLearnerModel;
pub use training::{Batch, Mode, TrainingCurve};

use training::Trainable;

use crate::autodiff::Graph;
use crate::datasets::{CateDataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::uncertainty::McOutcomeSamples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    TLearner,
    Tarnet,
    CfrMmd,
    Dragonnet,
    Cevae,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::TLearner,
        EstimatorKind::Tarnet,
        EstimatorKind::CfrMmd,
        EstimatorKind::Dragonnet,
        EstimatorKind::Cevae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::TLearner => "t_learner",
            EstimatorKind::Tarnet => "tarnet",
            EstimatorKind::CfrMmd => "cfr_mmd",
            EstimatorKind::Dragonnet => "dragonnet",
            EstimatorKind::Cevae => "cevae",
        }
    }

    /// Name as printed in result tables, e.g. `BTARNet`.
    pub fn display_name(self) -> &'static str {
        match self {
            EstimatorKind::TLearner => "BT-Learner",
            EstimatorKind::Tarnet => "BTARNet",
            EstimatorKind::CfrMmd => "BCFR-MMD",
            EstimatorKind::Dragonnet => "BDragonnet",
            EstimatorKind::Cevae => "BCEVAE",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| {
                let plain = k.name().replace('_', "");
                norm == plain || norm == format!("b{plain}")
            })
            .ok_or_else(|| Error::invalid(format!("unknown estimator kind {s:?}")))
    }
}

/// Optimisation and architecture settings shared by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    /// Dropout after hidden layers.
    pub hidden_dropout: f64,
    /// Dropout after the hidden layer that feeds an output layer.
    pub last_hidden_dropout: f64,
    /// Weight decay is `weight_decay_scale / n_train`.
    pub weight_decay_scale: f64,
    pub mc_samples: usize,
    /// Outcome draws per parameter draw when decomposing variance.
    pub inner_draws: usize,
    pub seed: u64,
    pub tlearner_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub cevae_hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Imbalance penalty weight for CFR-MMD.
    pub mmd_weight: f64,
    /// Fixed RBF bandwidth for the MMD penalty; `None` uses the median
    /// pairwise distance of each batch.
    pub mmd_bandwidth: Option<f64>,
    /// Weight of the Dragonnet propensity-head loss.
    pub propensity_head_weight: f64,
    /// Dragonnet targeted-regularization term (weight 1).
    pub targeted_regularization: bool,
    pub negative_sampling: bool,
    /// CEVAE learning rate; `None` uses `learning_rate`.
    pub cevae_learning_rate: Option<f64>,
    pub x_likelihood: XLikelihood,
    /// Candidate `weight_decay_scale` values for the propensity model.
    pub propensity_l2_grid: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 2000,
            patience: 50,
            batch_size: 100,
            validation_fraction: 0.3,
            hidden_dropout: 0.1,
            last_hidden_dropout: 0.5,
            weight_decay_scale: 1.0,
            mc_samples: 100,
            inner_draws: 10,
            seed: 0,
            tlearner_hidden: vec![200; 5],
            trunk_hidden: vec![200; 3],
            head_hidden: vec![100; 2],
            cevae_hidden: vec![200; 2],
            latent_dim: 20,
            mmd_weight: 1.0,
            mmd_bandwidth: None,
            propensity_head_weight: 1.0,
            targeted_regularization: false,
            negative_sampling: true,
            cevae_learning_rate: None,
            x_likelihood: XLikelihood::Gaussian,
            propensity_l2_grid: vec![1.0, 10.0, 100.0],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("max_epochs", self.max_epochs as f64),
            ("patience", self.patience as f64),
            ("batch_size", self.batch_size as f64),
            ("mc_samples", self.mc_samples as f64),
            ("inner_draws", self.inner_draws as f64),
            ("latent_dim", self.latent_dim as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must lie in (0, 1)"));
        }
        for (name, p) in [
            ("hidden_dropout", self.hidden_dropout),
            ("last_hidden_dropout", self.last_hidden_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1), got {p}"
                )));
            }
        }
        if self.weight_decay_scale < 0.0
            || self.mmd_weight < 0.0
            || self.propensity_head_weight < 0.0
        {
            return Err(Error::invalid("penalty weights must be nonnegative"));
        }
        if let Some(bw) = self.mmd_bandwidth {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(Error::invalid(format!(
                    "mmd_bandwidth must be positive, got {bw}"
                )));
            }
        }
        Ok(())
    }

    /// The same configuration with every dropout probability set to zero.
    pub fn without_dropout(&self) -> Self {
        Self {
            hidden_dropout: 0.0,
            last_hidden_dropout: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    TLearner(TLearnerModel),
    Tarnet(TarnetModel),
    Cevae(CevaeModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEstimator {
    pub kind: EstimatorKind,
    pub outcome: OutcomeKind,
    pub model: Estimator,
    pub curve: TrainingCurve,
}

impl TrainedEstimator {
    pub fn params(&self) -> Vec<&Tensor> {
        self.model.params()
    }

    pub fn input_dim(&self) -> usize {
        match &self.model {
            Estimator::TLearner(m) => m.mu0_net.net.input_dim(),
            Estimator::Tarnet(m) => m.trunk.input_dim(),
            Estimator::Cevae(m) => m.input_dim(),
        }
    }
}

impl Estimator {
    /// Freshly initialized, untrained model of `kind`.
    pub fn new(
        kind: EstimatorKind,
        input: usize,
        outcome: OutcomeKind,
        config: &TrainConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        Ok(match kind {
            EstimatorKind::TLearner => {
                Estimator::TLearner(TLearnerModel::new(input, outcome, config, rng)?)
            }
            EstimatorKind::Tarnet | EstimatorKind::CfrMmd | EstimatorKind::Dragonnet => {
                Estimator::Tarnet(TarnetModel::new(kind, input, outcome, config, rng)?)
            }
            EstimatorKind::Cevae => Estimator::Cevae(CevaeModel::new(input, outcome, config, rng)?),
        })
    }

    fn trainable(&self) -> &dyn Trainable {
        match self {
            Estimator::TLearner(m) => m,
            Estimator::Tarnet(m) => m,
            Estimator::Cevae(m) => m,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.trainable().params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Estimator::TLearner(m) => Trainable::params_mut(m),
            Estimator::Tarnet(m) => Trainable::params_mut(m),
            Estimator::Cevae(m) => Trainable::params_mut(m),
        }
    }

    /// Training objective of one batch. Dropout masks and latent noise come
    /// from `rng`, so replaying the same generator replays the same noise.
    pub fn batch_loss(
        &self,
        batch: &Batch,
        mode: Mode,
        n_train: usize,
        rng: &mut Rng,
    ) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.trainable().loss(&mut g, batch, mode, n_train, rng)?;
        Ok(g.value(loss).item())
    }

    /// [`Estimator::batch_loss`] with its gradient, one tensor per parameter.
    pub fn batch_loss_and_gradient(
        &self,
        batch: &Batch,
        mode: Mode,
        n_train: usize,
        rng: &mut Rng,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let loss = self.trainable().loss(&mut g, batch, mode, n_train, rng)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).item(), grads))
    }
}

fn check_binary_treatment(data: &CateDataset) -> Result<()> {
    if data.t.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::invalid("treatments must be binary"));
    }
    Ok(())
}

/// Trains one estimator. Continuous outcomes are expected to be normalized.
pub fn train_estimator(
    kind: EstimatorKind,
    dataset: &CateDataset,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainedEstimator> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    check_binary_treatment(dataset)?;
    let outcome = dataset.outcome_kind;
    let d = dataset.num_features();
    let mut init_rng = rng.fork();
    let mut fit_rng = rng.fork();

    let (model, curve) = match kind {
        EstimatorKind::TLearner => {
            for arm in [0u8, 1] {
                if !dataset.t.iter().any(|&t| t == f64::from(arm)) {
                    return Err(Error::EmptyArm { arm });
                }
            }
            let mut m = TLearnerModel::new(d, outcome, config, &mut init_rng)?;
            let curve = training::fit(&mut m, dataset, config, config.learning_rate, &mut fit_rng)?;
            (Estimator::TLearner(m), curve)
        }
        EstimatorKind::Tarnet | EstimatorKind::CfrMmd | EstimatorKind::Dragonnet => {
            let mut m = TarnetModel::new(kind, d, outcome, config, &mut init_rng)?;
            let curve = training::fit(&mut m, dataset, config, config.learning_rate, &mut fit_rng)?;
            (Estimator::Tarnet(m), curve)
        }
        EstimatorKind::Cevae => {
            let mut m = CevaeModel::new(d, outcome, config, &mut init_rng)?;
            let lr = config.cevae_learning_rate.unwrap_or(config.learning_rate);
            let curve = training::fit(&mut m, dataset, config, lr, &mut fit_rng)?;
            (Estimator::Cevae(m), curve)
        }
    };
    Ok(TrainedEstimator {
        kind,
        outcome,
        model,
        curve,
    })
}

/// `m` MC-dropout draws with one outcome draw each.
pub fn predict_mc(
    model: &TrainedEstimator,
    x: &Tensor,
    m: usize,
    rng: &mut Rng,
) -> Result<McOutcomeSamples> {
    predict_mc_grouped(model, x, m, 1, rng)
}

/// `m` parameter draws, each followed by `k` outcome draws per arm.
pub fn predict_mc_grouped(
    model: &TrainedEstimator,
    x: &Tensor,
    m: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<McOutcomeSamples> {
    if m == 0 {
        return Err(Error::invalid("need at least one MC sample"));
    }
    if k == 0 {
        return Err(Error::invalid(
            "need at least one outcome draw per MC sample",
        ));
    }
    if x.cols() != model.input_dim() {
        return Err(Error::shape(
            "prediction input width",
            model.input_dim(),
            x.cols(),
        ));
    }
    let n = x.rows();
    let mut mu0 = Vec::with_capacity(m * n);
    let mut mu1 = Vec::with_capacity(m * n);
    let mut y0 = Vec::with_capacity(m * k * n);
    let mut y1 = Vec::with_capacity(m * k * n);
    for _ in 0..m {
        let draw = match &model.model {
            Estimator::TLearner(t) => t.mc_draw(x, rng)?,
            Estimator::Tarnet(t) => t.mc_draw(x, rng)?,
            Estimator::Cevae(c) => c.mc_draw(x, rng)?,
        };
        for _ in 0..k {
            for i in 0..n {
                y0.push(draw.head0.sample(draw.mu0[i], rng));
            }
            for i in 0..n {
                y1.push(draw.head1.sample(draw.mu1[i], rng));
            }
        }
        mu0.extend_from_slice(&draw.mu0);
        mu1.extend_from_slice(&draw.mu1);
    }
    McOutcomeSamples::new(
        Tensor::matrix(m, n, mu0)?,
        Tensor::matrix(m, n, mu1)?,
        Tensor::matrix(m * k, n, y0)?,
        Tensor::matrix(m * k, n, y1)?,
        k,
    )
}

/// Expected outcomes of one parameter draw, plus how to sample around them.
pub(crate) struct McDraw<'a> {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub head0: &'a OutcomeHead,
    pub head1: &'a OutcomeHead,
}
