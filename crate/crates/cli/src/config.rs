//! Run configuration: a TOML file, then command-line overrides on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ucate::evaluation::default_grid;
use ucate::models::{EstimatorKind, TrainConfig};
use ucate::policies::PolicyKind;

use crate::error::CliError;

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    /// Not recorded with the outputs: results do not depend on it.
    #[serde(default = "one", skip_serializing)]
    pub workers: usize,
    #[serde(default)]
    pub dataset: DatasetSpec,
    /// Estimator names, e.g. `tarnet` or `t_learner`.
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
}

fn default_models() -> Vec<String> {
    vec![EstimatorKind::Tarnet.name().to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Toy1d {
        #[serde(default = "toy_n")]
        n_per_region: usize,
    },
    Cemnist {
        #[serde(default = "mnist_dir")]
        mnist_dir: PathBuf,
        #[serde(default = "cemnist_scale")]
        scale: f64,
        #[serde(default = "yes")]
        downsample: bool,
        #[serde(default = "cemnist_test_fraction")]
        test_fraction: f64,
    },
    Ihdp {
        #[serde(default = "ihdp_dir")]
        dir: PathBuf,
        #[serde(default = "ihdp_test_size")]
        test_size: usize,
        #[serde(default)]
        covariate_shift: bool,
        /// Zero-based covariate column holding the mother's marital status.
        #[serde(default = "marital_column")]
        marital_column: usize,
        /// Value of that column that marks an unmarried mother.
        #[serde(default)]
        unmarried_value: f64,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "csv_test_fraction")]
        test_fraction: f64,
        #[serde(default = "t_col")]
        treatment: String,
        #[serde(default = "y_col")]
        outcome: String,
        #[serde(default = "mu0_col")]
        mu0: String,
        #[serde(default = "mu1_col")]
        mu1: String,
    },
}

fn toy_n() -> usize {
    200
}
fn mnist_dir() -> PathBuf {
    "data/mnist".into()
}
fn cemnist_scale() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}
fn cemnist_test_fraction() -> f64 {
    0.1
}
fn ihdp_dir() -> PathBuf {
    "data/ihdp".into()
}
fn ihdp_test_size() -> usize {
    75
}
fn marital_column() -> usize {
    8
}
fn csv_test_fraction() -> f64 {
    0.2
}
fn t_col() -> String {
    "t".into()
}
fn y_col() -> String {
    "y".into()
}
fn mu0_col() -> String {
    "mu0".into()
}
fn mu1_col() -> String {
    "mu1".into()
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::with_defaults("toy1d").expect("toy1d has defaults")
    }
}

impl DatasetSpec {
    /// The named dataset with every parameter at its default.
    pub fn with_defaults(kind: &str) -> Result<Self, CliError> {
        toml::from_str(&format!("kind = {kind:?}")).map_err(|_| {
            CliError::Usage(format!(
                "dataset {kind:?} needs parameters or is unknown (known: toy1d, cemnist, ihdp, csv)"
            ))
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Toy1d { .. } => "toy1d",
            DatasetSpec::Cemnist { .. } => "cemnist",
            DatasetSpec::Ihdp {
                covariate_shift: true,
                ..
            } => "ihdp_shift",
            DatasetSpec::Ihdp { .. } => "ihdp",
            DatasetSpec::Csv { .. } => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSpec {
    pub policies: Vec<String>,
    /// Rejection rates swept for the result curves.
    pub grid: Vec<f64>,
    /// Rates at which per-unit policy decisions are written and tables reported.
    pub r_rej: Vec<f64>,
    pub mc_samples: usize,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self {
            policies: PolicyKind::ALL
                .iter()
                .map(|p| p.name().to_string())
                .collect(),
            grid: default_grid(),
            r_rej: vec![0.1, 0.5],
            mc_samples: 100,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub dataset: Option<String>,
    pub models: Vec<String>,
    pub policies: Vec<String>,
    pub r_rej: Option<Vec<f64>>,
    pub grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub workers: Option<usize>,
}

/// A validated configuration plus the file text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source_text: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
        let (mut config, source_text) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let config: RunConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (config, Some(text))
            }
            None => (toml::from_str("").expect("empty config is valid"), None),
        };
        config.apply(overrides)?;
        config.validate()?;
        Ok(LoadedConfig {
            config,
            source_text,
        })
    }

    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(kind) = &o.dataset {
            if kind != self.dataset.name() {
                self.dataset = DatasetSpec::with_defaults(kind)?;
            }
        }
        if !o.models.is_empty() {
            self.models = o.models.clone();
        }
        if !o.policies.is_empty() {
            self.evaluation.policies = o.policies.clone();
        }
        if let Some(r) = &o.r_rej {
            self.evaluation.r_rej = r.clone();
        }
        if let Some(g) = &o.grid {
            self.evaluation.grid = g.clone();
        }
        self.seed = o.seed.unwrap_or(self.seed);
        self.replications = o.replications.unwrap_or(self.replications);
        self.workers = o.workers.unwrap_or(self.workers);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.model_kinds()?;
        self.policy_kinds()?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("[train]: {e}")))?;
        let ev = &self.evaluation;
        if ev.mc_samples < 2 {
            return bad("evaluation.mc_samples must be at least 2".into());
        }
        if ev.grid.is_empty() || ev.grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("evaluation.grid must be a nonempty list of rates in [0, 1]".into());
        }
        if ev.grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("evaluation.grid must be strictly increasing".into());
        }
        if let Some(r) = ev
            .r_rej
            .iter()
            .find(|r| !ev.grid.iter().any(|g| (*g - **r).abs() < 1e-9))
        {
            return bad(format!("r_rej {r} is not on the evaluation grid"));
        }
        match &self.dataset {
            DatasetSpec::Toy1d { n_per_region } if *n_per_region == 0 => {
                bad("n_per_region must be positive".into())
            }
            DatasetSpec::Cemnist {
                scale,
                test_fraction,
                ..
            } if !(*scale > 0.0 && *scale <= 1.0) || !(*test_fraction > 0.0) => {
                bad("cemnist scale must lie in (0, 1] and test_fraction must be positive".into())
            }
            DatasetSpec::Csv { test_fraction, .. }
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) =>
            {
                bad("csv test_fraction must lie in (0, 1)".into())
            }
            _ => Ok(()),
        }
    }

    pub fn model_kinds(&self) -> Result<Vec<EstimatorKind>, CliError> {
        if self.models.is_empty() {
            return Err(CliError::Config("at least one model is required".into()));
        }
        self.models
            .iter()
            .map(|m| {
                m.parse()
                    .map_err(|e: ucate::Error| CliError::Config(e.to_string()))
            })
            .collect()
    }

    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>, CliError> {
        if self.evaluation.policies.is_empty() {
            return Err(CliError::Config("at least one policy is required".into()));
        }
        self.evaluation
            .policies
            .iter()
            .map(|p| {
                p.parse()
                    .map_err(|e: ucate::Error| CliError::Config(e.to_string()))
            })
            .collect()
    }

    /// Canonical TOML of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_toy_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c.dataset, DatasetSpec::Toy1d { n_per_region: 200 });
        assert_eq!(c.evaluation.grid.len(), 21);
        c.validate().unwrap();
    }

    #[test]
    fn canonical_toml_round_trips() {
        let text = r#"
seed = 3
models = ["tarnet", "t_learner"]
[dataset]
kind = "cemnist"
scale = 0.25
[train]
max_epochs = 5
[evaluation]
r_rej = [0.5]
"#;
        let c: RunConfig = toml::from_str(text).unwrap();
        c.validate().unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nlearning_rat = 1.0").is_err());
    }

    #[test]
    fn off_grid_rate_is_rejected() {
        let c: RunConfig =
            toml::from_str("[evaluation]\ngrid = [0.0, 0.5]\nr_rej = [0.1]").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn dataset_override_uses_defaults() {
        let mut c: RunConfig = toml::from_str("").unwrap();
        c.apply(&Overrides {
            dataset: Some("ihdp".into()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.dataset.name(), "ihdp");
        assert!(DatasetSpec::with_defaults("csv").is_err());
    }
}
