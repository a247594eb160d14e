//! Causal-effect MNIST.
//!
//! | digit       | share of train | p(t = 1 \| digit) | y        | CATE |
//! |-------------|----------------|-------------------|----------|------|
//! | 9           | 1/2            | 1/9               | `1 - t`  | -1   |
//! | 2           | 1/18           | 1                 | `t`      | +1   |
//! | other odds  | 1/18 each      | 1/2               | `1 - t`  | -1   |
//! | other evens | 1/18 each      | 1/2               | `t`      | +1   |
//!
//! At `scale = 1` there are 6000 nines and 6000 other digits split evenly.
//! The test set takes `test_fraction` of every digit's train count from the
//! test pool, with treatment drawn from the same probabilities.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::mnist::downsample_2x;
use super::{CateDataset, OutcomeKind, Replication};

/// Nines (and all other digits together) at full scale.
const FULL_NINES: f64 = 6000.0;

/// Images (`N × pixels`, values in `[0, 1]`) with digit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistSplit {
    pub images: Tensor,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CemnistConfig {
    /// Fraction of the full per-digit train counts.
    pub scale: f64,
    /// 2×2 average pooling (28×28 → 14×14).
    pub downsample: bool,
    /// Per-digit test count as a fraction of the train count.
    pub test_fraction: f64,
}

impl Default for CemnistConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            downsample: false,
            test_fraction: 0.1,
        }
    }
}

/// Train counts per digit at `scale`: `round(6000 s)` nines, and the same
/// total shared by the other nine digits, lower digits taking the remainder.
pub fn cemnist_counts(scale: f64) -> [usize; 10] {
    let nines = (FULL_NINES * scale).round() as usize;
    let base = nines / 9;
    let extra = nines % 9;
    let mut counts = [0; 10];
    for (k, d) in (0..9).enumerate() {
        counts[d] = base + usize::from(k < extra);
    }
    counts[9] = nines;
    counts
}

fn propensity(digit: u8) -> f64 {
    match digit {
        9 => 1.0 / 9.0,
        2 => 1.0,
        _ => 0.5,
    }
}

/// `(mu0, mu1)` of a digit.
fn potential_outcomes(digit: u8) -> (f64, f64) {
    if digit % 2 == 1 {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    }
}

fn by_digit(labels: &[u8]) -> Result<[Vec<usize>; 10]> {
    let mut pools: [Vec<usize>; 10] = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        if l > 9 {
            return Err(Error::invalid(format!("MNIST label {l} out of range")));
        }
        pools[l as usize].push(i);
    }
    Ok(pools)
}

fn draw(
    split: &MnistSplit,
    counts: &[usize; 10],
    downsample: bool,
    which: &str,
    rng: &mut Rng,
) -> Result<CateDataset> {
    if split.images.rows() != split.labels.len() {
        return Err(Error::shape(
            "MNIST labels",
            split.images.rows(),
            split.labels.len(),
        ));
    }
    let pools = by_digit(&split.labels)?;
    let mut rows = Vec::with_capacity(counts.iter().sum());
    for digit in 0..10 {
        let pool = &pools[digit];
        if pool.len() < counts[digit] {
            return Err(Error::Insufficient(format!(
                "{which} pool has {} images of digit {digit}, need {}",
                pool.len(),
                counts[digit]
            )));
        }
        let perm = rng.permutation(pool.len());
        rows.extend(perm[..counts[digit]].iter().map(|&k| pool[k]));
    }
    rng.shuffle(&mut rows);

    let digits: Vec<u8> = rows.iter().map(|&i| split.labels[i]).collect();
    let mut t = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    let mut mu0 = Vec::with_capacity(rows.len());
    let mut mu1 = Vec::with_capacity(rows.len());
    for &d in &digits {
        let ti = if rng.bernoulli(propensity(d)) {
            1.0
        } else {
            0.0
        };
        let (m0, m1) = potential_outcomes(d);
        t.push(ti);
        y.push(if ti == 1.0 { m1 } else { m0 });
        mu0.push(m0);
        mu1.push(m1);
    }
    let mut x = split.images.select_rows(&rows);
    if downsample {
        x = downsample_2x(&x)?;
    }
    let side = (x.cols() as f64).sqrt().round() as usize;
    let mut data = CateDataset::new(x, t, y, OutcomeKind::Binary)?.with_truth(mu0, mu1)?;
    if side * side == data.num_features() {
        data.feature_names = (0..side)
            .flat_map(|r| (0..side).map(move |c| format!("px_{r}_{c}")))
            .collect();
    }
    data.groups = Some(digits);
    Ok(data)
}

pub fn generate_cemnist(
    train_pool: &MnistSplit,
    test_pool: &MnistSplit,
    config: &CemnistConfig,
    rng: &mut Rng,
) -> Result<Replication> {
    if !(config.scale > 0.0) || !(config.test_fraction > 0.0) {
        return Err(Error::invalid(
            "CEMNIST scale and test fraction must be positive",
        ));
    }
    let train_counts = cemnist_counts(config.scale);
    let test_counts =
        train_counts.map(|c| ((c as f64 * config.test_fraction).round() as usize).max(1));
    let seed = rng.uniform().to_bits();
    let train = draw(train_pool, &train_counts, config.downsample, "train", rng)?;
    let test = draw(test_pool, &test_counts, config.downsample, "test", rng)?;
    Ok(Replication {
        train,
        test,
        seed,
        scaler: None,
    })
}
