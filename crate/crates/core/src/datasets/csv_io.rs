//! Generic CSV ingestion and export.
//!
//! Export schema (header row, comma separated): every covariate column by
//! feature name, then `t`, `y`, and `mu0`, `mu1` when ground truth is present.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{CateDataset, OutcomeKind};

/// Which header names hold which variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvColumns {
    pub treatment: String,
    pub outcome: String,
    pub mu0: Option<String>,
    pub mu1: Option<String>,
    /// `None`: every column not named above is a covariate.
    pub covariates: Option<Vec<String>>,
    /// `None`: binary when every outcome is 0 or 1.
    pub outcome_kind: Option<OutcomeKind>,
}

impl Default for CsvColumns {
    fn default() -> Self {
        Self {
            treatment: "t".into(),
            outcome: "y".into(),
            mu0: Some("mu0".into()),
            mu1: Some("mu1".into()),
            covariates: None,
            outcome_kind: None,
        }
    }
}

pub fn load_csv_dataset(path: &Path, columns: &CsvColumns) -> Result<CateDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        find(name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column {name:?}", path.display())))
    };
    let t_col = required(&columns.treatment)?;
    let y_col = required(&columns.outcome)?;
    // Optional truth columns are used only when both are present.
    let mu_cols = match (
        columns.mu0.as_deref().and_then(find),
        columns.mu1.as_deref().and_then(find),
    ) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let x_cols: Vec<usize> = match &columns.covariates {
        Some(names) => names.iter().map(|n| required(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&j| {
                j != t_col && j != y_col && mu_cols.map_or(true, |(a, b)| j != a && j != b)
            })
            .collect(),
    };

    let (mut x, mut t, mut y, mut mu0, mut mu1) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| {
                Error::Schema(format!(
                    "{}: row {}, column {:?}: not a number: {raw:?}",
                    path.display(),
                    line + 2,
                    headers[j]
                ))
            })
        };
        for &j in &x_cols {
            x.push(field(j)?);
        }
        t.push(field(t_col)?);
        y.push(field(y_col)?);
        if let Some((a, b)) = mu_cols {
            mu0.push(field(a)?);
            mu1.push(field(b)?);
        }
    }
    let n = t.len();
    if n == 0 {
        return Err(Error::invalid(format!(
            "{}: dataset has no rows",
            path.display()
        )));
    }
    let kind = columns.outcome_kind.unwrap_or_else(|| {
        if y.iter().all(|&v| v == 0.0 || v == 1.0) {
            OutcomeKind::Binary
        } else {
            OutcomeKind::Continuous
        }
    });
    let mut data = CateDataset::new(Tensor::matrix(n, x_cols.len(), x)?, t, y, kind)?;
    data.feature_names = x_cols.iter().map(|&j| headers[j].clone()).collect();
    if mu_cols.is_some() {
        data = data.with_truth(mu0, mu1)?;
    }
    Ok(data)
}

pub fn export_csv(data: &CateDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let truth = data.mu0_true.as_ref().zip(data.mu1_true.as_ref());
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.extend(["t", "y"]);
    if truth.is_some() {
        header.extend(["mu0", "mu1"]);
    }
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.x.row(i).iter().map(|v| v.to_string()).collect();
        row.push(data.t[i].to_string());
        row.push(data.y[i].to_string());
        if let Some((m0, m1)) = truth {
            row.push(m0[i].to_string());
            row.push(m1[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
