use ucate::datasets::{generate_toy1d, CateDataset, OutcomeKind};
use ucate::models::{
    load_checkpoint, predict_mc, predict_propensity, save_checkpoint, train_estimator,
    train_propensity, Batch, CevaeModel, Estimator, EstimatorKind, Mode, TrainConfig,
    CHECKPOINT_MAGIC,
};
use ucate::uncertainty::epistemic_variance;
use ucate::{Error, Rng, Tensor};

fn quick_config() -> TrainConfig {
    TrainConfig {
        tlearner_hidden: vec![16, 16],
        trunk_hidden: vec![16, 16],
        head_hidden: vec![8],
        cevae_hidden: vec![16],
        latent_dim: 3,
        max_epochs: 40,
        patience: 10,
        batch_size: 32,
        mc_samples: 20,
        ..TrainConfig::default()
    }
}

fn noisy_dataset(n: usize, d: usize, outcome: OutcomeKind, seed: u64) -> CateDataset {
    let mut rng = Rng::new(seed);
    let x: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
    let t: Vec<f64> = (0..n)
        .map(|_| f64::from(u8::from(rng.bernoulli(0.5))))
        .collect();
    let y = (0..n)
        .map(|i| {
            let signal = x[i * d] + t[i] * x[i * d + 1];
            match outcome {
                OutcomeKind::Binary => f64::from(u8::from(signal + 0.3 * rng.normal() > 0.0)),
                OutcomeKind::Continuous => signal + 0.1 * rng.normal(),
            }
        })
        .collect();
    CateDataset::new(Tensor::matrix(n, d, x).unwrap(), t, y, outcome).unwrap()
}

#[test]
fn training_is_deterministic() {
    let data = noisy_dataset(120, 3, OutcomeKind::Continuous, 1);
    for kind in EstimatorKind::ALL {
        let a = train_estimator(kind, &data, &quick_config(), &mut Rng::new(9)).unwrap();
        let b = train_estimator(kind, &data, &quick_config(), &mut Rng::new(9)).unwrap();
        assert_eq!(a, b, "{kind:?}");
        assert!(a.curve.epochs_run <= quick_config().max_epochs);
        assert!(a.curve.best_epoch < a.curve.epochs_run);
    }
}

#[test]
fn overfits_separable_toy() {
    // 32 points, outcome = 1{x > 0} in both arms.
    let mut rng = Rng::new(2);
    let n = 32;
    let x: Vec<f64> = (0..n)
        .map(|i| -3.0 + 6.0 * (i as f64 + 0.5) / n as f64)
        .collect();
    let t: Vec<f64> = (0..n)
        .map(|_| f64::from(u8::from(rng.bernoulli(0.5))))
        .collect();
    let y: Vec<f64> = x.iter().map(|&v| f64::from(u8::from(v > 0.0))).collect();
    let data =
        CateDataset::new(Tensor::matrix(n, 1, x).unwrap(), t, y, OutcomeKind::Binary).unwrap();
    let config = TrainConfig {
        patience: 2000,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    };
    let model = train_estimator(EstimatorKind::TLearner, &data, &config, &mut Rng::new(0)).unwrap();
    assert!(model.curve.epochs_run <= 2000);
    let all: Vec<usize> = (0..n).collect();
    let loss = model
        .model
        .batch_loss(
            &Batch::from_dataset(&data, &all),
            Mode::Eval,
            n,
            &mut Rng::new(0),
        )
        .unwrap();
    assert!(loss < 0.05, "training loss {loss}");
}

#[test]
fn zero_dropout_gives_identical_draws() {
    let data = noisy_dataset(80, 3, OutcomeKind::Binary, 3);
    let config = quick_config().without_dropout();
    for kind in EstimatorKind::ALL {
        let model = train_estimator(kind, &data, &config, &mut Rng::new(1)).unwrap();
        let samples = predict_mc(&model, &data.x, 10, &mut Rng::new(2)).unwrap();
        if kind != EstimatorKind::Cevae {
            let first = samples.mu0.row(0).to_vec();
            for j in 1..10 {
                assert_eq!(samples.mu0.row(j), &first[..], "{kind:?}");
            }
            assert!(epistemic_variance(&samples)
                .unwrap()
                .iter()
                .all(|&v| v == 0.0));
        }
    }
}

#[test]
fn mc_mean_converges() {
    let data = noisy_dataset(60, 3, OutcomeKind::Continuous, 4);
    let model = train_estimator(
        EstimatorKind::Tarnet,
        &data,
        &quick_config(),
        &mut Rng::new(5),
    )
    .unwrap();
    let x = data.x.select_rows(&[0, 1, 2, 3, 4]);
    let small = predict_mc(&model, &x, 100, &mut Rng::new(6)).unwrap();
    let large = predict_mc(&model, &x, 10_000, &mut Rng::new(7)).unwrap();
    for i in 0..5 {
        let draws = |s: &ucate::uncertainty::McOutcomeSamples| s.mu1.column(i);
        let stats = |v: Vec<f64>| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, (var / n).sqrt())
        };
        let (m_small, se_small) = stats(draws(&small));
        let (m_large, se_large) = stats(draws(&large));
        let se = (se_small.powi(2) + se_large.powi(2)).sqrt();
        assert!(
            (m_small - m_large).abs() <= 3.0 * se,
            "unit {i}: {m_small} vs {m_large} (se {se})"
        );
    }
}

#[test]
fn mmd_penalty_is_nonnegative_addition() {
    let data = noisy_dataset(40, 3, OutcomeKind::Binary, 8);
    let batch = Batch::from_dataset(&data, &(0..40).collect::<Vec<_>>());
    let config = quick_config();
    let plain = Estimator::new(
        EstimatorKind::Tarnet,
        3,
        OutcomeKind::Binary,
        &config,
        &mut Rng::new(3),
    )
    .unwrap();
    let cfr = Estimator::new(
        EstimatorKind::CfrMmd,
        3,
        OutcomeKind::Binary,
        &config,
        &mut Rng::new(3),
    )
    .unwrap();
    assert_eq!(plain.params(), cfr.params());
    for mode in [Mode::Train, Mode::Eval] {
        let a = plain
            .batch_loss(&batch, mode, 40, &mut Rng::new(1))
            .unwrap();
        let b = cfr.batch_loss(&batch, mode, 40, &mut Rng::new(1)).unwrap();
        assert!(a >= 0.0 && b >= a, "{mode:?}: {a} {b}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = noisy_dataset(60, 4, OutcomeKind::Continuous, 10);
    for kind in EstimatorKind::ALL {
        let config = TrainConfig {
            targeted_regularization: kind == EstimatorKind::Dragonnet,
            ..quick_config()
        };
        let model = train_estimator(kind, &data, &config, &mut Rng::new(11)).unwrap();
        let path = dir.path().join(format!("{}.ckpt", kind.name()));
        save_checkpoint(&path, &model, &config).unwrap();
        let (loaded, loaded_config) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model, "{kind:?}");
        assert_eq!(loaded_config, config);
        let a = predict_mc(&model, &data.x, 5, &mut Rng::new(1)).unwrap();
        let b = predict_mc(&loaded, &data.x, 5, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&bad), Err(Error::Format { .. })));
        let mut trailing = bytes.clone();
        trailing.push(0);
        std::fs::write(&bad, &trailing).unwrap();
        assert!(matches!(load_checkpoint(&bad), Err(Error::Format { .. })));
        let mut magic = bytes;
        magic[0] = b'X';
        std::fs::write(&bad, &magic).unwrap();
        assert!(matches!(load_checkpoint(&bad), Err(Error::Format { .. })));
    }
}

fn cevae(negative_sampling: bool, seed: u64) -> CevaeModel {
    let config = TrainConfig {
        cevae_hidden: vec![8],
        latent_dim: 2,
        negative_sampling,
        ..TrainConfig::default()
    };
    match Estimator::new(
        EstimatorKind::Cevae,
        2,
        OutcomeKind::Continuous,
        &config,
        &mut Rng::new(seed),
    )
    .unwrap()
    {
        Estimator::Cevae(m) => m,
        _ => unreachable!(),
    }
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + (v.iter().map(|a| (a - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Rows of `q(z | x, y, t)` evaluated with each row's own treatment.
fn factual_posterior(model: &CevaeModel, x: &Tensor, t: &[f64], y: &[f64]) -> (Tensor, Tensor) {
    let (m0, v0) = model.posterior(x, y, 0).unwrap();
    let (m1, v1) = model.posterior(x, y, 1).unwrap();
    let pick = |a: &Tensor, b: &Tensor| {
        let rows: Vec<Vec<f64>> = (0..t.len())
            .map(|i| {
                if t[i] == 1.0 {
                    b.row(i).to_vec()
                } else {
                    a.row(i).to_vec()
                }
            })
            .collect();
        Tensor::from_rows(&rows).unwrap()
    };
    (pick(&m0, &m1), pick(&v0, &v1))
}

#[test]
fn cevae_elbo_lower_bounds_log_likelihood() {
    let model = cevae(true, 21);
    let mut rng = Rng::new(22);
    let (_, x, t, y) = model.sample_generative(40, &mut rng).unwrap();
    let (mean, log_var) = factual_posterior(&model, &x, &t, &y);
    let samples = 1000;
    let l = model.latent_dim;
    for i in 0..x.rows() {
        let xi = x.select_rows(&[i]);
        let (ti, yi) = ([t[i]], [y[i]]);
        // ELBO = E_q[log p(x, t, y | z)] - KL(q || p), by Monte Carlo.
        let mut rec = Vec::with_capacity(samples);
        let mut prior_ll = Vec::with_capacity(samples);
        for _ in 0..samples {
            let z: Vec<f64> = (0..l)
                .map(|k| mean.get2(i, k) + (0.5 * log_var.get2(i, k)).exp() * rng.normal())
                .collect();
            rec.push(
                model
                    .decoder_log_likelihood(&Tensor::matrix(1, l, z).unwrap(), &xi, &ti, &yi)
                    .unwrap()[0],
            );
            let z0 = Tensor::matrix(1, l, (0..l).map(|_| rng.normal()).collect()).unwrap();
            prior_ll.push(model.decoder_log_likelihood(&z0, &xi, &ti, &yi).unwrap()[0]);
        }
        let kl: f64 = (0..l)
            .map(|k| {
                let (m, lv) = (mean.get2(i, k), log_var.get2(i, k));
                0.5 * (m * m + lv.exp() - lv - 1.0)
            })
            .sum();
        let n = samples as f64;
        let rec_mean = rec.iter().sum::<f64>() / n;
        let rec_se =
            (rec.iter().map(|r| (r - rec_mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let elbo = rec_mean - kl;
        let log_p = log_mean_exp(&prior_ll);
        assert!(
            elbo <= log_p + 3.0 * rec_se,
            "row {i}: ELBO {elbo} > log p {log_p}"
        );
    }
}

#[test]
fn cevae_reconstruction_matches_decoder_at_posterior_mean() {
    let model = cevae(true, 30);
    let (_, x, t, y) = model.sample_generative(25, &mut Rng::new(31)).unwrap();
    let batch = Batch {
        x: x.clone(),
        t: t.clone(),
        y: y.clone(),
    };
    let o = model
        .objective(&batch, Mode::Eval, 25, &mut Rng::new(0))
        .unwrap();
    let (mean, _) = factual_posterior(&model, &x, &t, &y);
    let ll = model.decoder_log_likelihood(&mean, &x, &t, &y).unwrap();
    let expected = -ll.iter().sum::<f64>() / ll.len() as f64;
    let rec = o.reconstruction_x + o.reconstruction_t + o.reconstruction_y;
    assert!((rec - expected).abs() < 1e-9, "{rec} vs {expected}");
}

#[test]
fn negative_sampling_adds_only_its_kl() {
    let on = cevae(true, 40);
    let off = cevae(false, 40);
    let (_, x, t, y) = on.sample_generative(30, &mut Rng::new(41)).unwrap();
    let batch = Batch { x, t, y };
    let a = on
        .objective(&batch, Mode::Eval, 30, &mut Rng::new(0))
        .unwrap();
    let b = off
        .objective(&batch, Mode::Eval, 30, &mut Rng::new(0))
        .unwrap();
    assert!(a.negative_sampling_kl >= 0.0);
    assert_eq!(b.negative_sampling_kl, 0.0);
    assert!((a.total - b.total - a.negative_sampling_kl).abs() < 1e-9);
}

#[test]
fn coin_flip_propensity_concentrates_at_half() {
    let mut rng = Rng::new(50);
    let n = 600;
    let x: Vec<f64> = (0..n * 2).map(|_| rng.normal()).collect();
    let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let data = CateDataset::new(
        Tensor::matrix(n, 2, x).unwrap(),
        t,
        vec![0.0; n],
        OutcomeKind::Binary,
    )
    .unwrap();
    let model = train_propensity(&data, &quick_config(), &mut Rng::new(51)).unwrap();
    assert_eq!(model.grid_ece.len(), 3);
    let p = predict_propensity(&model, &data.x, 20, &mut Rng::new(52)).unwrap();
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    let mean = p.iter().sum::<f64>() / n as f64;
    assert!((0.45..=0.55).contains(&mean), "mean propensity {mean}");
}

#[test]
fn toy_training_smoke() {
    let data = generate_toy1d(&mut Rng::new(60), 100).unwrap();
    let model = train_estimator(
        EstimatorKind::Cevae,
        &data,
        &quick_config(),
        &mut Rng::new(61),
    )
    .unwrap();
    let s = predict_mc(&model, &data.x, 10, &mut Rng::new(62)).unwrap();
    assert!(s.mu0.all_finite() && s.mu1.all_finite());
    assert!(s.mu0.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
}
