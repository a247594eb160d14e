use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::CateDataset;

/// Affine outcome standardization fitted on training outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScaler {
    pub mean: f64,
    pub std: f64,
}

impl OutcomeScaler {
    /// Population mean and standard deviation of `y`.
    pub fn fit(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("cannot fit a scaler to zero outcomes"));
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::invalid("outcome standard deviation is zero"));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.std + self.mean).collect()
    }

    /// Differences of outcomes (e.g. CATEs) only rescale.
    pub fn invert_difference(&self, d: &[f64]) -> Vec<f64> {
        d.iter().map(|v| v * self.std).collect()
    }

    /// Copy of `data` with outcomes and potential-outcome truth in normalized units.
    pub fn normalize_dataset(&self, data: &CateDataset) -> CateDataset {
        let mut out = data.clone();
        out.y = self.apply(&data.y);
        out.mu0_true = data.mu0_true.as_deref().map(|v| self.apply(v));
        out.mu1_true = data.mu1_true.as_deref().map(|v| self.apply(v));
        out.cate_true = match (&out.mu0_true, &out.mu1_true) {
            (Some(a), Some(b)) => Some(b.iter().zip(a).map(|(b, a)| b - a).collect()),
            _ => data
                .cate_true
                .as_ref()
                .map(|c| c.iter().map(|v| v / self.std).collect()),
        };
        out
    }
}
