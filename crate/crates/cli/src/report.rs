//! `report`: aggregates a results CSV into tables and curve plots.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use ucate::evaluation::{summarize, ResultRow, Summary};
use ucate::models::EstimatorKind;
use ucate::policies::PolicyKind;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::run::RESULTS;
use crate::svg::{line_plot, Series};

/// Table columns: random, propensity trimming, epistemic uncertainty.
const TABLE_COLUMNS: [(&str, PolicyKind); 3] = [
    ("rand.", PolicyKind::Random),
    ("prop.", PolicyKind::PropensityTrimming),
    ("unct.", PolicyKind::Epistemic),
];
const DEFAULT_RATES: [f64; 2] = [0.1, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Metric {
    Pehe,
    RecError,
}

impl Metric {
    const ALL: [Metric; 2] = [Metric::Pehe, Metric::RecError];

    fn name(self) -> &'static str {
        match self {
            Metric::Pehe => "pehe",
            Metric::RecError => "rec_error",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Pehe => "sqrt PEHE",
            Metric::RecError => "recommendation error rate",
        }
    }

    fn get(self, row: &ResultRow) -> Option<f64> {
        match self {
            Metric::Pehe => row.pehe,
            Metric::RecError => row.rec_error,
        }
    }
}

/// Rates are keyed on a fixed-point grid so float noise cannot split groups.
fn rate_key(r: f64) -> i64 {
    (r * 1e6).round() as i64
}

type Key = (String, String, String, i64);

pub struct Report {
    pub table: String,
    pub files: Vec<PathBuf>,
}

fn model_label(name: &str) -> String {
    name.parse::<EstimatorKind>()
        .map_or_else(|_| name.to_string(), |k| k.display_name().to_string())
}

fn cell(s: Option<&Summary>) -> String {
    match s {
        Some(s) if s.single => format!("{:.3}", s.mean),
        Some(s) => format!("{:.3} ± {:.3}", s.mean, s.std_error),
        None => "n/a".into(),
    }
}

fn read_rows(path: &Path) -> CliResult<Vec<ResultRow>> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "no results at {}; run `ucate run` first",
            path.display()
        )));
    }
    let rows = csv::Reader::from_path(path)?
        .deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()?;
    if rows.is_empty() {
        return Err(CliError::Empty(format!(
            "{} has no result rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Rates from the flag, else from the run's configuration, else 0.1 and 0.5.
fn report_rates(dir: &Path, rates: Option<Vec<f64>>) -> Vec<f64> {
    rates.unwrap_or_else(|| {
        fs::read_to_string(dir.join("resolved.toml"))
            .ok()
            .and_then(|t| toml::from_str::<RunConfig>(&t).ok())
            .map_or_else(|| DEFAULT_RATES.to_vec(), |c| c.evaluation.r_rej)
    })
}

pub fn report(dir: &Path, rates: Option<Vec<f64>>) -> CliResult<Report> {
    let rows = read_rows(&dir.join(RESULTS))?;
    let rates = report_rates(dir, rates);

    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for row in &rows {
        let key = (
            row.dataset.clone(),
            row.model.clone(),
            row.policy.clone(),
            rate_key(row.r_nominal),
        );
        groups.entry(key).or_default().push(row);
    }
    let stats: BTreeMap<(Key, Metric), Option<Summary>> = groups
        .iter()
        .flat_map(|(key, rows)| {
            Metric::ALL.map(|m| ((key.clone(), m), summarize(rows.iter().map(|r| m.get(r)))))
        })
        .collect();
    let mut pairs: Vec<(String, String)> =
        groups.keys().map(|k| (k.0.clone(), k.1.clone())).collect();
    pairs.dedup();
    let mut files = Vec::new();

    for r in &rates {
        if !groups.keys().any(|k| k.3 == rate_key(*r)) {
            return Err(CliError::Usage(format!(
                "rate {r} is not on the results grid"
            )));
        }
    }

    let mut table = String::new();
    for metric in Metric::ALL {
        let _ = writeln!(table, "## {} (mean ± standard error)\n", metric.label());
        let header: Vec<&str> = TABLE_COLUMNS.iter().map(|c| c.0).collect();
        let _ = writeln!(
            table,
            "| dataset | model | r_rej | {} |",
            header.join(" | ")
        );
        let _ = writeln!(table, "|---|---|---|{}", "---|".repeat(TABLE_COLUMNS.len()));
        for (dataset, model) in &pairs {
            for &r in &rates {
                let cells: Vec<String> = TABLE_COLUMNS
                    .iter()
                    .map(|(_, policy)| {
                        let key = (
                            dataset.clone(),
                            model.clone(),
                            policy.name().to_string(),
                            rate_key(r),
                        );
                        cell(stats.get(&(key, metric)).and_then(Option::as_ref))
                    })
                    .collect();
                let _ = writeln!(
                    table,
                    "| {dataset} | {} | {r} | {} |",
                    model_label(model),
                    cells.join(" | ")
                );
            }
        }
        table.push('\n');
    }
    let table_path = dir.join("table.md");
    fs::write(&table_path, &table).map_err(|e| CliError::io(&table_path, e))?;
    files.push(table_path);

    let summary_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    w.write_record([
        "dataset",
        "model",
        "policy",
        "r_nominal",
        "metric",
        "mean",
        "std_error",
        "count",
    ])?;
    for ((key, metric), s) in &stats {
        let r = groups[key][0].r_nominal;
        let (mean, se, count) =
            s.as_ref()
                .map_or((String::new(), String::new(), "0".to_string()), |s| {
                    (
                        s.mean.to_string(),
                        s.std_error.to_string(),
                        s.count.to_string(),
                    )
                });
        w.write_record([
            &key.0,
            &key.1,
            &key.2,
            &r.to_string(),
            metric.name(),
            &mean,
            &se,
            &count,
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&summary_path, e))?;
    files.push(summary_path);

    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| CliError::io(&plots, e))?;
    for (dataset, model) in &pairs {
        let policies: Vec<&String> = {
            let mut p: Vec<&String> = groups
                .keys()
                .filter(|k| &k.0 == dataset && &k.1 == model)
                .map(|k| &k.2)
                .collect();
            p.dedup();
            p
        };
        for metric in Metric::ALL {
            let series: Vec<Series> = policies
                .iter()
                .map(|policy| Series {
                    name: policy.to_string(),
                    points: groups
                        .iter()
                        .filter(|(k, _)| &k.0 == dataset && &k.1 == model && &k.2 == *policy)
                        .map(|(k, rows)| {
                            let mean = stats[&(k.clone(), metric)].as_ref().map(|s| s.mean);
                            (rows[0].r_nominal, mean)
                        })
                        .collect(),
                })
                .collect();
            let title = format!("{dataset} / {}", model_label(model));
            let path = plots.join(format!("{dataset}_{model}_{}.svg", metric.name()));
            fs::write(&path, line_plot(&title, metric.label(), &series))
                .map_err(|e| CliError::io(&path, e))?;
            files.push(path);
        }
    }
    Ok(Report { table, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: &str, rep: usize, r: f64, pehe: Option<f64>) -> ResultRow {
        ResultRow {
            dataset: "toy1d".into(),
            model: "tarnet".into(),
            policy: policy.into(),
            replication: rep,
            r_nominal: r,
            r_realized: r,
            rec_error: pehe.map(|p| p / 10.0),
            pehe,
        }
    }

    fn write_results(dir: &Path, rows: &[ResultRow]) {
        let mut w = csv::Writer::from_path(dir.join(RESULTS)).unwrap();
        for r in rows {
            w.serialize(r).unwrap();
        }
        w.flush().unwrap();
    }

    #[test]
    fn table_has_policy_columns_and_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        for policy in ["random", "propensity_trimming", "epistemic"] {
            for rep in 0..2 {
                for r in [0.0, 0.5, 1.0] {
                    let v = if r == 1.0 {
                        None
                    } else {
                        Some(0.1 + 0.2 * rep as f64)
                    };
                    rows.push(row(policy, rep, r, v));
                }
            }
        }
        write_results(dir.path(), &rows);
        let rep = report(dir.path(), Some(vec![0.5])).unwrap();
        assert!(rep
            .table
            .contains("| dataset | model | r_rej | rand. | prop. | unct. |"));
        assert!(rep
            .table
            .contains("| toy1d | BTARNet | 0.5 | 0.200 ± 0.100 |"));
        assert!(dir.path().join("plots/toy1d_tarnet_pehe.svg").exists());

        let again = report(dir.path(), Some(vec![0.5])).unwrap();
        assert_eq!(rep.table, again.table);
    }

    #[test]
    fn missing_or_empty_results_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(dir.path(), None), Err(CliError::Input(_))));
        fs::write(
            dir.path().join(RESULTS),
            "dataset,model,policy,replication,r_nominal,r_realized,rec_error,pehe\n",
        )
        .unwrap();
        assert!(matches!(report(dir.path(), None), Err(CliError::Empty(_))));
    }

    #[test]
    fn off_grid_rate_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_results(dir.path(), &[row("random", 0, 0.0, Some(1.0))]);
        assert!(matches!(
            report(dir.path(), Some(vec![0.3])),
            Err(CliError::Usage(_))
        ));
    }
}
