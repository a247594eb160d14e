use ucate::datasets::{
    cemnist_counts, export_csv, generate_cemnist, generate_toy1d, load_csv_dataset, load_mnist_idx,
    read_idx, toy1d_truth, write_idx, CateDataset, CemnistConfig, CsvColumns, IdxArray, MnistSplit,
    OutcomeKind, OutcomeScaler, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
use ucate::{Rng, Tensor};

#[test]
fn idx_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let images = IdxArray {
        magic: IDX_IMAGES_MAGIC,
        dims: vec![2, 3, 2],
        data: vec![0, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
    };
    let labels = IdxArray {
        magic: IDX_LABELS_MAGIC,
        dims: vec![2],
        data: vec![7, 2],
    };
    for suffix in ["", ".gz"] {
        let ip = dir.path().join(format!("img{suffix}"));
        let lp = dir.path().join(format!("lab{suffix}"));
        write_idx(&ip, &images).unwrap();
        write_idx(&lp, &labels).unwrap();
        assert_eq!(read_idx(&ip).unwrap(), images);
        assert_eq!(read_idx(&lp).unwrap(), labels);
        let (x, y) = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(x.dims2(), (2, 6));
        assert_eq!(x.get2(0, 1), 1.0);
        assert_eq!(y, vec![7, 2]);
    }
}

/// Pool with `per_digit` 4-pixel images of every digit.
fn synthetic_pool(per_digit: usize, rng: &mut Rng) -> MnistSplit {
    let n = per_digit * 10;
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let pixels = (0..n * 4).map(|_| rng.uniform()).collect();
    MnistSplit {
        images: Tensor::matrix(n, 4, pixels).unwrap(),
        labels,
    }
}

#[test]
fn cemnist_full_scale_invariants() {
    let mut rng = Rng::new(1);
    let train_pool = synthetic_pool(6000, &mut rng);
    let test_pool = synthetic_pool(700, &mut rng);
    let rep = generate_cemnist(
        &train_pool,
        &test_pool,
        &CemnistConfig::default(),
        &mut Rng::new(2),
    )
    .unwrap();
    let counts = cemnist_counts(1.0);
    assert_eq!(counts[9], 6000);
    assert_eq!(counts.iter().sum::<usize>(), 12000);

    for data in [&rep.train, &rep.test] {
        data.validate().unwrap();
        let g = data.groups.as_ref().unwrap();
        let cate = data.cate_true.as_ref().unwrap();
        for i in 0..data.len() {
            match g[i] {
                2 => {
                    assert_eq!((data.t[i], data.y[i], cate[i]), (1.0, 1.0, 1.0));
                }
                9 => {
                    assert_eq!(data.y[i], 1.0 - data.t[i]);
                    assert_eq!(cate[i], -1.0);
                }
                _ => {}
            }
        }
    }

    // Class proportions: half nines, 1/18 for each other digit.
    let g = rep.train.groups.as_ref().unwrap();
    let n = g.len() as f64;
    for digit in 0..10u8 {
        let count = g.iter().filter(|&&d| d == digit).count() as f64;
        let p = if digit == 9 { 0.5 } else { 1.0 / 18.0 };
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((count - n * p).abs() <= 3.0 * sd, "digit {digit}: {count}");
    }

    // Treated nines ~ Binomial(6000, 1/9).
    let treated_nines = (0..rep.train.len())
        .filter(|&i| g[i] == 9 && rep.train.t[i] == 1.0)
        .count() as f64;
    let (mean, sd) = (6000.0 / 9.0, (6000.0f64 / 9.0 * (8.0 / 9.0)).sqrt());
    assert!(
        (treated_nines - mean).abs() <= 3.0 * sd,
        "treated nines {treated_nines}"
    );
}

#[test]
fn cemnist_is_seeded() {
    let mut rng = Rng::new(3);
    let pool = synthetic_pool(700, &mut rng);
    let config = CemnistConfig {
        scale: 0.1,
        test_fraction: 0.2,
        ..CemnistConfig::default()
    };
    let a = generate_cemnist(&pool, &pool, &config, &mut Rng::new(4)).unwrap();
    let b = generate_cemnist(&pool, &pool, &config, &mut Rng::new(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.train.len(), cemnist_counts(0.1).iter().sum::<usize>());
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(5);
    let n = 25;
    let x = Tensor::matrix(n, 3, (0..n * 3).map(|_| rng.normal()).collect()).unwrap();
    let t: Vec<f64> = (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mu0: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mu1: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let data = CateDataset::new(x, t, y, OutcomeKind::Continuous)
        .unwrap()
        .with_truth(mu0, mu1)
        .unwrap();
    let path = dir.path().join("d.csv");
    export_csv(&data, &path).unwrap();
    let back = load_csv_dataset(&path, &CsvColumns::default()).unwrap();
    assert_eq!(back, data);
}

#[test]
fn toy_outcome_frequencies_match_generator() {
    let data = generate_toy1d(&mut Rng::new(6), 20_000).unwrap();
    // Bin [-3.5, -2.5) of the control support and [2.5, 3.5) of the treated one.
    for (arm, lo, hi) in [(0.0, -3.5, -2.5), (1.0, 2.5, 3.5)] {
        let rows: Vec<usize> = (0..data.len())
            .filter(|&i| data.t[i] == arm && (lo..hi).contains(&data.x.data()[i]))
            .collect();
        let n = rows.len() as f64;
        let freq = rows.iter().map(|&i| data.y[i]).sum::<f64>() / n;
        let p = rows
            .iter()
            .map(|&i| {
                let (m0, m1) = toy1d_truth(data.x.data()[i]);
                if arm == 1.0 {
                    m1
                } else {
                    m0
                }
            })
            .sum::<f64>()
            / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((freq - p).abs() <= 3.0 * se, "arm {arm}: {freq} vs {p}");
    }
}

#[test]
fn scaler_examples() {
    let s = OutcomeScaler::fit(&[0.0, 2.0]).unwrap();
    assert_eq!(s.apply(&[0.0, 2.0]), vec![-1.0, 1.0]);
    let test_mean = s.apply(&[5.0, 7.0]).iter().sum::<f64>() / 2.0;
    assert!(test_mean != 0.0);
}
