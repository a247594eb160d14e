//! `generate`: materializes every replication as train/test CSVs plus a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ucate::datasets::{
    export_csv, generate_cemnist, generate_toy1d, load_csv_dataset, load_ihdp_replication,
    load_mnist_idx, make_covariate_shift, replication_path, split_replication, CateDataset,
    CemnistConfig, CsvColumns, MnistSplit, OutcomeKind, OutcomeScaler, Replication, Toy1dRegion,
};
use ucate::Rng;

use crate::config::{DatasetSpec, RunConfig};
use crate::error::{CliError, CliResult};

pub const DATA_DIR: &str = "data";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub dataset: String,
    pub spec: DatasetSpec,
    pub seed: u64,
    pub replications: Vec<ReplicationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationEntry {
    pub index: usize,
    /// Seeds the random policy for this replication.
    pub seed: u64,
    pub train: SplitCounts,
    pub test: SplitCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub rows: usize,
    pub treated: usize,
    pub features: usize,
    /// Digits for CEMNIST, support regions for toy1d.
    pub groups: BTreeMap<String, usize>,
}

pub fn replication_dir(out: &Path, k: usize) -> PathBuf {
    out.join(DATA_DIR).join(format!("rep_{k:03}"))
}

fn counts(data: &CateDataset, spec: &DatasetSpec) -> SplitCounts {
    let mut groups = BTreeMap::new();
    if let Some(g) = &data.groups {
        for d in g {
            *groups.entry(format!("digit_{d}")).or_insert(0) += 1;
        }
    } else if let DatasetSpec::Toy1d { .. } = spec {
        for x in data.x.column(0) {
            let name = match Toy1dRegion::of(x) {
                Toy1dRegion::ControlOnly => "control_only",
                Toy1dRegion::TreatedOnly => "treated_only",
                Toy1dRegion::Neither => "neither",
            };
            *groups.entry(name.to_string()).or_insert(0) += 1;
        }
    }
    SplitCounts {
        rows: data.len(),
        treated: data.num_treated(),
        features: data.num_features(),
        groups,
    }
}

fn mnist_file(dir: &Path, stem: &str) -> CliResult<PathBuf> {
    let gz = dir.join(format!("{stem}.gz"));
    let plain = dir.join(stem);
    [gz.clone(), plain.clone()]
        .into_iter()
        .find(|p| p.exists())
        .ok_or_else(|| {
            CliError::Input(format!(
                "missing MNIST file: expected {} or {} (scripts/fetch_mnist.sh downloads them)",
                gz.display(),
                plain.display()
            ))
        })
}

fn load_pool(dir: &Path, images: &str, labels: &str) -> CliResult<MnistSplit> {
    let (images, labels) = load_mnist_idx(&mnist_file(dir, images)?, &mnist_file(dir, labels)?)?;
    Ok(MnistSplit { images, labels })
}

/// Data source with anything expensive loaded once.
enum Source {
    Toy(usize),
    Cemnist(Box<(MnistSplit, MnistSplit)>, CemnistConfig),
    Ihdp {
        dir: PathBuf,
        test_size: usize,
        shift: Option<(usize, f64)>,
    },
    Csv(CateDataset, f64),
}

fn open_source(spec: &DatasetSpec) -> CliResult<Source> {
    Ok(match spec {
        DatasetSpec::Toy1d { n_per_region } => Source::Toy(*n_per_region),
        DatasetSpec::Cemnist {
            mnist_dir,
            scale,
            downsample,
            test_fraction,
        } => {
            let train = load_pool(
                mnist_dir,
                "train-images-idx3-ubyte",
                "train-labels-idx1-ubyte",
            )?;
            let test = load_pool(
                mnist_dir,
                "t10k-images-idx3-ubyte",
                "t10k-labels-idx1-ubyte",
            )?;
            let config = CemnistConfig {
                scale: *scale,
                downsample: *downsample,
                test_fraction: *test_fraction,
            };
            Source::Cemnist(Box::new((train, test)), config)
        }
        DatasetSpec::Ihdp {
            dir,
            test_size,
            covariate_shift,
            marital_column,
            unmarried_value,
        } => Source::Ihdp {
            dir: dir.clone(),
            test_size: *test_size,
            shift: covariate_shift.then_some((*marital_column, *unmarried_value)),
        },
        DatasetSpec::Csv {
            path,
            test_fraction,
            treatment,
            outcome,
            mu0,
            mu1,
        } => {
            if !path.exists() {
                return Err(CliError::Input(format!(
                    "dataset file {} does not exist",
                    path.display()
                )));
            }
            let columns = CsvColumns {
                treatment: treatment.clone(),
                outcome: outcome.clone(),
                mu0: Some(mu0.clone()),
                mu1: Some(mu1.clone()),
                ..CsvColumns::default()
            };
            Source::Csv(load_csv_dataset(path, &columns)?, *test_fraction)
        }
    })
}

fn draw(source: &Source, k: usize, rng: &mut Rng) -> CliResult<Replication> {
    let seed = rng.uniform().to_bits();
    let mut rep = match source {
        Source::Toy(n) => {
            let train = generate_toy1d(rng, *n)?;
            let test = generate_toy1d(rng, *n)?;
            Replication {
                train,
                test,
                seed,
                scaler: None,
            }
        }
        Source::Cemnist(pools, config) => generate_cemnist(&pools.0, &pools.1, config, rng)?,
        Source::Ihdp {
            dir,
            test_size,
            shift,
        } => {
            let path = replication_path(dir, k + 1);
            if !path.exists() {
                return Err(CliError::Input(format!(
                    "missing IHDP replication {}: expected {} (see README for the CSV layout)",
                    k + 1,
                    path.display()
                )));
            }
            let rep = split_replication(&load_ihdp_replication(&path)?, *test_size, seed, rng)?;
            match shift {
                Some((column, value)) => make_covariate_shift(&rep, *column, *value)?,
                None => rep,
            }
        }
        Source::Csv(data, fraction) => {
            let test_size = ((data.len() as f64 * fraction).round() as usize).max(1);
            split_replication(data, test_size, seed, rng)?
        }
    };
    rep.seed = seed;
    Ok(rep)
}

/// Writes all replications under `<out>/data` and returns the manifest.
pub fn generate(config: &RunConfig, out: &Path) -> CliResult<DataManifest> {
    let source = open_source(&config.dataset)?;
    let mut entries = Vec::with_capacity(config.replications);
    for k in 0..config.replications {
        let rep = draw(&source, k, &mut Rng::stream(config.seed, k as u64))?;
        let dir = replication_dir(out, k);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        export_csv(&rep.train, &dir.join("train.csv"))?;
        export_csv(&rep.test, &dir.join("test.csv"))?;
        entries.push(ReplicationEntry {
            index: k,
            seed: rep.seed,
            train: counts(&rep.train, &config.dataset),
            test: counts(&rep.test, &config.dataset),
        });
        log::info!(
            "generated replication {k}: {} train / {} test rows",
            rep.train.len(),
            rep.test.len()
        );
    }
    let manifest = DataManifest {
        dataset: config.dataset.name().to_string(),
        spec: config.dataset.clone(),
        seed: config.seed,
        replications: entries,
    };
    let path = out.join(DATA_DIR).join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(out: &Path) -> CliResult<Option<DataManifest>> {
    let path = out.join(DATA_DIR).join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Reuses generated data when it matches the configuration, else generates it.
pub fn ensure_data(config: &RunConfig, out: &Path) -> CliResult<DataManifest> {
    match read_manifest(out)? {
        Some(m) if m.spec == config.dataset && m.seed == config.seed && m.replications.len() >= config.replications => {
            Ok(m)
        }
        Some(_) => Err(CliError::Config(format!(
            "{} holds data generated from a different dataset, seed or replication count; use a fresh output dir",
            out.join(DATA_DIR).display()
        ))),
        None => generate(config, out),
    }
}

/// Reads replication `k` back; continuous outcomes get a train-fitted scaler.
pub fn load_replication(out: &Path, entry: &ReplicationEntry) -> CliResult<Replication> {
    let dir = replication_dir(out, entry.index);
    let read = |name: &str| -> CliResult<CateDataset> {
        let path = dir.join(name);
        if !path.exists() {
            return Err(CliError::Input(format!(
                "missing {}; rerun `ucate generate`",
                path.display()
            )));
        }
        Ok(load_csv_dataset(&path, &CsvColumns::default())?)
    };
    let train = read("train.csv")?;
    let mut test = read("test.csv")?;
    // Both splits must share the loss family even if the test outcomes happen to be 0/1.
    test.outcome_kind = train.outcome_kind;
    let scaler = match train.outcome_kind {
        OutcomeKind::Continuous => Some(OutcomeScaler::fit(&train.y)?),
        OutcomeKind::Binary => None,
    };
    Ok(Replication {
        train,
        test,
        seed: entry.seed,
        scaler,
    })
}
