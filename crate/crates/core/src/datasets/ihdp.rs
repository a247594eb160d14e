//! IHDP replications (response setting "A", pre-generated).
//!
//! One headerless CSV per replication, `<dir>/ihdp_npci_<k>.csv` for
//! `k = 1, 2, ...`, with 30 numeric columns in this order:
//!
//! ```text
//! t, y_factual, y_cfactual, mu0, mu1, x1, ..., x25
//! ```
//!
//! This is the layout of the widely circulated CSV export of the IHDP
//! simulations (747 rows each: 139 treated, 608 control).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{CateDataset, OutcomeKind, OutcomeScaler, Replication};

pub const IHDP_COVARIATES: usize = 25;
const IHDP_COLUMNS: usize = 5 + IHDP_COVARIATES;

#[derive(Debug, Clone, PartialEq)]
pub struct IhdpConfig {
    pub test_size: usize,
    /// Base seed; replication `k` uses the stream `(seed, k)`.
    pub seed: u64,
}

impl Default for IhdpConfig {
    fn default() -> Self {
        Self {
            test_size: 75,
            seed: 0,
        }
    }
}

pub fn replication_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("ihdp_npci_{k}.csv"))
}

/// Reads one replication file into a dataset (all rows, no split).
pub fn load_ihdp_replication(path: &Path) -> Result<CateDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let (mut x, mut t, mut y, mut mu0, mut mu1) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != IHDP_COLUMNS {
            return Err(Error::Schema(format!(
                "{}: row {} has {} columns, expected {IHDP_COLUMNS}",
                path.display(),
                line + 1,
                record.len()
            )));
        }
        let vals = record
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::Schema(format!(
                        "{}: row {}: not a number: {s:?}",
                        path.display(),
                        line + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        t.push(vals[0]);
        y.push(vals[1]);
        mu0.push(vals[3]);
        mu1.push(vals[4]);
        x.extend_from_slice(&vals[5..]);
    }
    let n = t.len();
    if n == 0 {
        return Err(Error::invalid(format!("{}: no rows", path.display())));
    }
    let mut data = CateDataset::new(
        Tensor::matrix(n, IHDP_COVARIATES, x)?,
        t,
        y,
        OutcomeKind::Continuous,
    )?
    .with_truth(mu0, mu1)?;
    data.feature_names = (1..=IHDP_COVARIATES).map(|j| format!("x{j}")).collect();
    Ok(data)
}

/// Splits `test_size` random rows off as the test set; the scaler is fitted
/// on the training outcomes.
pub fn split_replication(
    data: &CateDataset,
    test_size: usize,
    seed: u64,
    rng: &mut Rng,
) -> Result<Replication> {
    if test_size == 0 || test_size >= data.len() {
        return Err(Error::invalid(format!(
            "test size {test_size} leaves no train or test rows"
        )));
    }
    let perm = rng.permutation(data.len());
    let (test_idx, train_idx) = perm.split_at(test_size);
    let mut test_idx = test_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let train = data.subset(&train_idx);
    let scaler = OutcomeScaler::fit(&train.y)?;
    Ok(Replication {
        train,
        test: data.subset(&test_idx),
        seed,
        scaler: Some(scaler),
    })
}

pub fn load_ihdp(dir: &Path, replications: usize, config: &IhdpConfig) -> Result<Vec<Replication>> {
    (1..=replications)
        .map(|k| {
            let data = load_ihdp_replication(&replication_path(dir, k))?;
            let mut rng = Rng::stream(config.seed, k as u64);
            split_replication(&data, config.test_size, config.seed, &mut rng)
        })
        .collect()
}

/// Removes training rows whose binary `feature` equals `drop_value` and hides
/// the feature from both splits. Test rows are untouched.
pub fn make_covariate_shift(
    rep: &Replication,
    feature: usize,
    drop_value: f64,
) -> Result<Replication> {
    let d = rep.train.num_features();
    if feature >= d {
        return Err(Error::invalid(format!(
            "feature {feature} out of range (D = {d})"
        )));
    }
    let col = rep.train.x.column(feature);
    let test_col = rep.test.x.column(feature);
    let mut values: Vec<f64> = col.iter().chain(&test_col).copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() > 2 {
        return Err(Error::invalid(format!(
            "feature {feature} is not binary ({} distinct values)",
            values.len()
        )));
    }
    let keep: Vec<usize> = (0..rep.train.len())
        .filter(|&i| col[i] != drop_value)
        .collect();
    if keep.is_empty() {
        return Err(Error::invalid("covariate shift removes every training row"));
    }
    let train = rep.train.subset(&keep).drop_feature(feature)?;
    let scaler = match rep.scaler {
        Some(_) => Some(OutcomeScaler::fit(&train.y)?),
        None => None,
    };
    Ok(Replication {
        train,
        test: rep.test.drop_feature(feature)?,
        seed: rep.seed,
        scaler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn fake_file(dir: &Path, rows: usize) -> PathBuf {
        let mut s = String::new();
        for i in 0..rows {
            let t = u8::from(i % 5 == 0);
            write!(
                s,
                "{t},{},{},{},{}",
                i as f64 * 0.1,
                0.0,
                1.0 + i as f64,
                2.5 + i as f64
            )
            .unwrap();
            for j in 0..IHDP_COVARIATES {
                write!(
                    s,
                    ",{}",
                    if j == 3 {
                        f64::from((i % 2) as u8)
                    } else {
                        (i * j) as f64 * 0.01
                    }
                )
                .unwrap();
            }
            s.push('\n');
        }
        let p = replication_path(dir, 1);
        std::fs::write(&p, s).unwrap();
        p
    }

    #[test]
    fn loads_and_splits() {
        let dir = tempfile::tempdir().unwrap();
        fake_file(dir.path(), 100);
        let reps = load_ihdp(
            dir.path(),
            1,
            &IhdpConfig {
                test_size: 20,
                seed: 3,
            },
        )
        .unwrap();
        let rep = &reps[0];
        assert_eq!(rep.test.len(), 20);
        assert_eq!(rep.train.len(), 80);
        let d = &rep.train;
        for i in 0..d.len() {
            let (m0, m1) = (
                d.mu0_true.as_ref().unwrap()[i],
                d.mu1_true.as_ref().unwrap()[i],
            );
            assert_eq!(d.cate_true.as_ref().unwrap()[i], m1 - m0);
        }
        let again = load_ihdp(
            dir.path(),
            1,
            &IhdpConfig {
                test_size: 20,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(reps, again);
    }

    #[test]
    fn covariate_shift_drops_rows_and_column() {
        let dir = tempfile::tempdir().unwrap();
        fake_file(dir.path(), 60);
        let rep = &load_ihdp(
            dir.path(),
            1,
            &IhdpConfig {
                test_size: 10,
                seed: 0,
            },
        )
        .unwrap()[0];
        let shifted = make_covariate_shift(rep, 3, 0.0).unwrap();
        assert_eq!(shifted.test.len(), rep.test.len());
        assert_eq!(shifted.train.num_features(), IHDP_COVARIATES - 1);
        let kept = rep.train.x.column(3).iter().filter(|&&v| v != 0.0).count();
        assert_eq!(shifted.train.len(), kept);
        assert!(make_covariate_shift(rep, 4, 0.0).is_err());
    }

    #[test]
    fn wrong_column_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "1,2,3\n").unwrap();
        assert!(matches!(load_ihdp_replication(&p), Err(Error::Schema(_))));
    }
}
