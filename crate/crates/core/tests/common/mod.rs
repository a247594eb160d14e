//! Shared helpers for the integration tests.

#![allow(dead_code)]

use ucate::datasets::OutcomeKind;
use ucate::models::{Batch, Estimator, EstimatorKind, Mode, TrainConfig, XLikelihood};
use ucate::{Rng, Tensor};

pub const STEP: f64 = 1e-5;
pub const MAX_RELATIVE_ERROR: f64 = 1e-4;
/// Coordinates checked per parameter tensor.
const COORDS_PER_TENSOR: usize = 6;

#[derive(Clone)]
pub struct Case {
    pub name: &'static str,
    pub kind: EstimatorKind,
    pub outcome: OutcomeKind,
    pub mode: Mode,
    tweak: fn(&mut TrainConfig),
    binary_x: bool,
    /// Only control units in the batch.
    one_arm: bool,
}

fn small_config() -> TrainConfig {
    TrainConfig {
        tlearner_hidden: vec![7, 6],
        trunk_hidden: vec![7, 6],
        head_hidden: vec![5],
        cevae_hidden: vec![6],
        latent_dim: 3,
        mmd_bandwidth: Some(1.5),
        weight_decay_scale: 2.0,
        ..TrainConfig::default()
    }
}

fn batch(case: &Case, rng: &mut Rng) -> Batch {
    let (n, d) = (14, 3);
    let x: Vec<f64> = (0..n * d)
        .map(|_| {
            if case.binary_x {
                f64::from(u8::from(rng.bernoulli(0.5)))
            } else {
                rng.normal()
            }
        })
        .collect();
    let t: Vec<f64> = (0..n)
        .map(|i| if case.one_arm { 0.0 } else { (i % 2) as f64 })
        .collect();
    let y = (0..n)
        .map(|_| match case.outcome {
            OutcomeKind::Binary => f64::from(u8::from(rng.bernoulli(0.4))),
            OutcomeKind::Continuous => rng.normal(),
        })
        .collect();
    Batch {
        x: Tensor::matrix(n, d, x).unwrap(),
        t,
        y,
    }
}

pub fn cases() -> Vec<Case> {
    fn none(_: &mut TrainConfig) {}
    let mut out = Vec::new();
    for kind in EstimatorKind::ALL {
        for outcome in [OutcomeKind::Binary, OutcomeKind::Continuous] {
            for mode in [Mode::Train, Mode::Eval] {
                out.push(Case {
                    name: "base",
                    kind,
                    outcome,
                    mode,
                    tweak: none,
                    binary_x: false,
                    one_arm: false,
                });
            }
        }
    }
    let extra = |name, kind, outcome, tweak: fn(&mut TrainConfig), binary_x, one_arm| Case {
        name,
        kind,
        outcome,
        mode: Mode::Train,
        tweak,
        binary_x,
        one_arm,
    };
    out.push(extra(
        "targeted",
        EstimatorKind::Dragonnet,
        OutcomeKind::Continuous,
        |c| c.targeted_regularization = true,
        false,
        false,
    ));
    out.push(extra(
        "targeted",
        EstimatorKind::Dragonnet,
        OutcomeKind::Binary,
        |c| c.targeted_regularization = true,
        false,
        false,
    ));
    out.push(extra(
        "heavy_mmd",
        EstimatorKind::CfrMmd,
        OutcomeKind::Continuous,
        |c| c.mmd_weight = 10.0,
        false,
        false,
    ));
    out.push(extra(
        "bernoulli_x",
        EstimatorKind::Cevae,
        OutcomeKind::Binary,
        |c| c.x_likelihood = XLikelihood::Bernoulli,
        true,
        false,
    ));
    out.push(extra(
        "no_negative_sampling",
        EstimatorKind::Cevae,
        OutcomeKind::Continuous,
        |c| c.negative_sampling = false,
        false,
        false,
    ));
    out.push(extra(
        "one_arm",
        EstimatorKind::Tarnet,
        OutcomeKind::Binary,
        none,
        false,
        true,
    ));
    out.push(extra(
        "one_arm",
        EstimatorKind::TLearner,
        OutcomeKind::Continuous,
        none,
        false,
        true,
    ));
    out
}

/// Worst relative error of reverse-mode against central differences over the
/// sampled coordinates.
pub fn check(case: &Case, seed: u64) -> f64 {
    let mut config = small_config();
    (case.tweak)(&mut config);
    let mut rng = Rng::new(seed);
    let data = batch(case, &mut rng);
    let mut model = Estimator::new(case.kind, 3, case.outcome, &config, &mut rng).unwrap();
    // A nonzero targeted-regularization epsilon exercises its gradient path.
    if config.targeted_regularization {
        let eps = model.params_mut().pop().unwrap();
        eps.data_mut()[0] = 0.3;
    }
    let n_train = 50;
    let noise_seed = seed + 1000;
    let (_, grads) = model
        .batch_loss_and_gradient(&data, case.mode, n_train, &mut Rng::new(noise_seed))
        .unwrap();
    assert_eq!(grads.len(), model.params().len());

    let mut worst: f64 = 0.0;
    let mut pick = Rng::new(seed + 7);
    for p in 0..grads.len() {
        let len = grads[p].len();
        for _ in 0..COORDS_PER_TENSOR.min(len) {
            let j = pick.below(len);
            let mut eval = |delta: f64| {
                let orig = model.params_mut()[p].data()[j];
                model.params_mut()[p].data_mut()[j] = orig + delta;
                let l = model
                    .batch_loss(&data, case.mode, n_train, &mut Rng::new(noise_seed))
                    .unwrap();
                model.params_mut()[p].data_mut()[j] = orig;
                l
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let analytic = grads[p].data()[j];
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}
