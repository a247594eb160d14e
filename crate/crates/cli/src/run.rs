//! `run`: trains every model on every replication and sweeps the policies.
//!
//! Each replication writes into its own directory and is marked complete by
//! its `results.csv`, so an interrupted run resumes where it stopped.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use ucate::evaluation::{
    score_replication, sweep, train_on_replication, PropensityScores, ReplicationScores, ResultRow,
};
use ucate::models::{save_checkpoint, train_propensity, EstimatorKind};
use ucate::policies::{apply_policy, fit_policy, recommend, PolicyKind};
use ucate::Rng;

use crate::config::{LoadedConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::generate::{ensure_data, load_replication, ReplicationEntry};

pub const RESULTS: &str = "results.csv";
const REPLICATIONS_DIR: &str = "replications";
/// Training streams sit above the data-generation streams.
const TRAIN_STREAM: u64 = 1 << 32;

#[derive(Debug, Default)]
pub struct RunSummary {
    pub completed: Vec<usize>,
    /// Already complete from an earlier invocation.
    pub resumed: Vec<usize>,
    pub failed: Vec<(usize, String)>,
}

fn rep_dir(out: &Path, k: usize) -> PathBuf {
    out.join(REPLICATIONS_DIR).join(format!("rep_{k:03}"))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Records the configuration; refuses to mix two different runs in one directory.
fn record_config(loaded: &LoadedConfig, out: &Path) -> CliResult<()> {
    let resolved = loaded.config.to_toml();
    let path = out.join("resolved.toml");
    if let Ok(previous) = fs::read_to_string(&path) {
        if previous != resolved {
            return Err(CliError::Config(format!(
                "{} already holds a run with a different configuration",
                out.display()
            )));
        }
    }
    write_file(&path, &resolved)?;
    if let Some(text) = &loaded.source_text {
        write_file(&out.join("config.toml"), text)?;
    }
    Ok(())
}

pub fn run(loaded: &LoadedConfig, out: &Path) -> CliResult<RunSummary> {
    let config = &loaded.config;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    record_config(loaded, out)?;
    let manifest = ensure_data(config, out)?;
    let models = config.model_kinds()?;
    let policies = config.policy_kinds()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", config.workers)))?;
    let entries = &manifest.replications[..config.replications];
    let outcomes: Vec<(usize, CliResult<bool>)> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| {
                (
                    entry.index,
                    run_replication(config, &models, &policies, &manifest.dataset, out, entry),
                )
            })
            .collect()
    });

    let mut summary = RunSummary::default();
    for (k, outcome) in outcomes {
        match outcome {
            Ok(true) => summary.completed.push(k),
            Ok(false) => summary.resumed.push(k),
            Err(e) => {
                log::warn!("replication {k} failed and is left out of the results: {e}");
                summary.failed.push((k, e.to_string()));
            }
        }
    }
    if summary.completed.is_empty() && summary.resumed.is_empty() {
        return Err(CliError::Empty(format!(
            "all {} replications failed; see error.txt under {}",
            summary.failed.len(),
            out.join(REPLICATIONS_DIR).display()
        )));
    }
    merge_results(out, config.replications)?;
    Ok(summary)
}

/// Returns `Ok(false)` when the replication was already complete.
fn run_replication(
    config: &RunConfig,
    models: &[EstimatorKind],
    policies: &[PolicyKind],
    dataset: &str,
    out: &Path,
    entry: &ReplicationEntry,
) -> CliResult<bool> {
    let k = entry.index;
    let dir = rep_dir(out, k);
    if dir.join(RESULTS).exists() {
        log::info!("replication {k} already complete, skipping");
        return Ok(false);
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let result = train_and_evaluate(config, models, policies, dataset, &dir, entry);
    let error_path = dir.join("error.txt");
    match &result {
        Ok(()) => {
            let _ = fs::remove_file(&error_path);
        }
        Err(e) => write_file(&error_path, &format!("{}: {e}\n", e.kind()))?,
    }
    result.map(|()| true)
}

fn train_and_evaluate(
    config: &RunConfig,
    models: &[EstimatorKind],
    policies: &[PolicyKind],
    dataset: &str,
    dir: &Path,
    entry: &ReplicationEntry,
) -> CliResult<()> {
    let start = Instant::now();
    let k = entry.index;
    let out = dir
        .parent()
        .and_then(Path::parent)
        .expect("replication dir is nested in the output dir");
    let rep = load_replication(out, entry)?;
    let mc = config.evaluation.mc_samples;
    let mut rng = Rng::stream(config.seed, TRAIN_STREAM | k as u64);

    let propensity = if policies.iter().any(|p| p.needs_propensity()) {
        let model = train_propensity(&rep.train, &config.train, &mut rng.fork())?;
        Some(PropensityScores::predict(
            &model,
            &rep,
            mc,
            &mut rng.fork(),
        )?)
    } else {
        None
    };

    let mut rows = Vec::new();
    for &kind in models {
        let model = train_on_replication(kind, &rep, &config.train, &mut rng.fork())?;
        save_checkpoint(
            &dir.join(format!("{}.ckpt", kind.name())),
            &model,
            &config.train,
        )?;
        let scores = score_replication(&model, propensity.as_ref(), &rep, mc, &mut rng.fork())?;
        for &policy in policies {
            let curve = sweep(policy, &scores, &config.evaluation.grid)?;
            rows.extend(ResultRow::from_curve(dataset, kind.name(), k, &curve));
            for &r in &config.evaluation.r_rej {
                let path = dir.join(format!(
                    "policy_{}_{}_r{r:.2}.csv",
                    kind.name(),
                    policy.name()
                ));
                write_policy_csv(&path, policy, &scores, r)?;
            }
        }
        log::info!(
            "replication {k}: {} trained in {} epochs",
            kind.name(),
            model.curve.epochs_run
        );
    }

    // Written last and renamed into place: its presence marks completion.
    let tmp = dir.join(format!("{RESULTS}.tmp"));
    let mut w = csv::Writer::from_path(&tmp)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(&tmp, e))?;
    let done = dir.join(RESULTS);
    fs::rename(&tmp, &done).map_err(|e| CliError::io(&done, e))?;
    log::info!("replication {k} done in {:.1?}", start.elapsed());
    Ok(())
}

/// Per-unit decisions on the test split. Two-sided thresholds print as
/// `lower;upper`; withheld units get no recommendation.
fn write_policy_csv(
    path: &Path,
    policy: PolicyKind,
    scores: &ReplicationScores,
    r: f64,
) -> CliResult<()> {
    let fitted = fit_policy(policy, &scores.train, r)?;
    let decision = apply_policy(&fitted, &scores.test, &mut Rng::new(scores.random_seed))?;
    let threshold = decision
        .thresholds
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";");
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "unit_id",
        "score",
        "threshold",
        "withheld",
        "recommendation",
    ])?;
    for (i, &withheld) in decision.withheld.iter().enumerate() {
        let rec = if withheld {
            String::new()
        } else {
            recommend(scores.test_cate[i])?.to_string()
        };
        w.write_record([
            i.to_string(),
            decision.scores[i].to_string(),
            threshold.clone(),
            u8::from(withheld).to_string(),
            rec,
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Concatenates the completed replications' results in replication order.
fn merge_results(out: &Path, replications: usize) -> CliResult<PathBuf> {
    let path = out.join(RESULTS);
    let mut w = csv::Writer::from_path(&path)?;
    for k in 0..replications {
        let part = rep_dir(out, k).join(RESULTS);
        if !part.exists() {
            continue;
        }
        for row in csv::Reader::from_path(&part)?.deserialize::<ResultRow>() {
            w.serialize(row?)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
