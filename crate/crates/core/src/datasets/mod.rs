//! Datasets: the CATE container plus CEMNIST, IHDP, toy-1D and CSV sources.

mod cemnist;
mod csv_io;
mod ihdp;
mod mnist;
mod normalize;
mod toy;

use serde::{Deserialize, Serialize};

pub use cemnist::{cemnist_counts, generate_cemnist, CemnistConfig, MnistSplit};
pub use csv_io::{export_csv, load_csv_dataset, CsvColumns};
pub use ihdp::{
    load_ihdp, load_ihdp_replication, make_covariate_shift, replication_path, split_replication,
    IhdpConfig, IHDP_COVARIATES,
};
pub use mnist::{
    downsample_2x, load_mnist_idx, read_idx, write_idx, IdxArray, IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
};
pub use normalize::OutcomeScaler;
pub use toy::{
    generate_toy1d, toy1d_truth, Toy1dRegion, TOY1D_CONTROL_SUPPORT, TOY1D_TREATED_SUPPORT,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// Observational data with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CateDataset {
    /// `N × D` covariates.
    pub x: Tensor,
    pub t: Vec<f64>,
    /// Factual outcomes.
    pub y: Vec<f64>,
    pub mu0_true: Option<Vec<f64>>,
    pub mu1_true: Option<Vec<f64>>,
    pub cate_true: Option<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub outcome_kind: OutcomeKind,
    /// Optional subpopulation label per row (e.g. the MNIST digit).
    pub groups: Option<Vec<u8>>,
}

impl CateDataset {
    /// Validated dataset without ground truth; features are named `x0, x1, ...`.
    pub fn new(x: Tensor, t: Vec<f64>, y: Vec<f64>, outcome_kind: OutcomeKind) -> Result<Self> {
        let feature_names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        let d = Self {
            x,
            t,
            y,
            mu0_true: None,
            mu1_true: None,
            cate_true: None,
            feature_names,
            outcome_kind,
            groups: None,
        };
        d.validate()?;
        Ok(d)
    }

    /// Attaches expected potential outcomes; `cate_true` becomes `mu1 - mu0`.
    pub fn with_truth(mut self, mu0: Vec<f64>, mu1: Vec<f64>) -> Result<Self> {
        self.cate_true = Some(mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect());
        self.mu0_true = Some(mu0);
        self.mu1_true = Some(mu1);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.x.shape().len() != 2 {
            return Err(Error::shape("covariates", "N × D matrix", self.x.shape()));
        }
        if self.x.rows() != n || self.y.len() != n {
            return Err(Error::shape(
                "dataset rows",
                n,
                (self.x.rows(), self.y.len()),
            ));
        }
        if self.feature_names.len() != self.x.cols() {
            return Err(Error::shape(
                "feature names",
                self.x.cols(),
                self.feature_names.len(),
            ));
        }
        if let Some(bad) = self.t.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::invalid(format!(
                "treatment must be 0 or 1, found {bad}"
            )));
        }
        if self.outcome_kind == OutcomeKind::Binary {
            if let Some(bad) = self.y.iter().find(|&&y| y != 0.0 && y != 1.0) {
                return Err(Error::invalid(format!(
                    "binary outcome must be 0 or 1, found {bad}"
                )));
            }
        }
        if !self.x.all_finite() || self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        for (name, col) in [
            ("mu0_true", &self.mu0_true),
            ("mu1_true", &self.mu1_true),
            ("cate_true", &self.cate_true),
        ] {
            if let Some(c) = col {
                if c.len() != n {
                    return Err(Error::shape(name, n, c.len()));
                }
            }
        }
        if let (Some(m0), Some(m1), Some(c)) = (&self.mu0_true, &self.mu1_true, &self.cate_true) {
            if m0.iter().zip(m1).zip(c).any(|((a, b), c)| b - a != *c) {
                return Err(Error::invalid("cate_true must equal mu1_true - mu0_true"));
            }
        }
        if let Some(g) = &self.groups {
            if g.len() != n {
                return Err(Error::shape("groups", n, g.len()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn num_treated(&self) -> usize {
        self.t.iter().filter(|&&t| t == 1.0).count()
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            x: self.x.select_rows(idx),
            t: pick(&self.t),
            y: pick(&self.y),
            mu0_true: self.mu0_true.as_ref().map(pick),
            mu1_true: self.mu1_true.as_ref().map(pick),
            cate_true: self.cate_true.as_ref().map(pick),
            feature_names: self.feature_names.clone(),
            outcome_kind: self.outcome_kind,
            groups: self
                .groups
                .as_ref()
                .map(|g| idx.iter().map(|&i| g[i]).collect()),
        }
    }

    /// Same rows without covariate `j`.
    pub fn drop_feature(&self, j: usize) -> Result<Self> {
        if j >= self.num_features() {
            return Err(Error::invalid(format!(
                "feature {j} out of range (D = {})",
                self.num_features()
            )));
        }
        let keep: Vec<usize> = (0..self.num_features()).filter(|&k| k != j).collect();
        let mut out = self.clone();
        out.x = self.x.select_cols(&keep);
        out.feature_names.remove(j);
        Ok(out)
    }
}

/// One train/test draw of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub train: CateDataset,
    pub test: CateDataset,
    pub seed: u64,
    /// Present when continuous outcomes are to be normalized for training.
    pub scaler: Option<OutcomeScaler>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CateDataset {
        let x = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        CateDataset::new(
            x,
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            OutcomeKind::Binary,
        )
        .unwrap()
        .with_truth(vec![0.5; 3], vec![0.25, 0.75, 1.0])
        .unwrap()
    }

    #[test]
    fn truth_is_consistent() {
        let d = tiny();
        assert_eq!(d.cate_true.as_deref(), Some(&[-0.25, 0.25, 0.5][..]));
    }

    #[test]
    fn rejects_bad_treatment() {
        let x = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        assert!(CateDataset::new(x, vec![2.0], vec![0.0], OutcomeKind::Continuous).is_err());
    }

    #[test]
    fn subset_and_drop() {
        let d = tiny();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.t, vec![1.0, 0.0]);
        assert_eq!(s.x.row(0), &[5.0, 6.0]);
        let dropped = d.drop_feature(0).unwrap();
        assert_eq!(dropped.num_features(), 1);
        assert_eq!(dropped.feature_names, vec!["x1".to_string()]);
        assert!(d.drop_feature(5).is_err());
    }
}
