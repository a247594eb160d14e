//! Metrics, rejection-rate sweeps and aggregation over replications.
//!
//! The recommendation error rate divides by the number of *retained* units.
//! A unit whose true CATE is exactly zero counts as "do not treat", matching
//! [`recommend`].

use serde::{Deserialize, Serialize};

use crate::datasets::{CateDataset, Replication};
use crate::error::{Error, Result};
use crate::models::{
    predict_mc, predict_propensity, train_estimator, EstimatorKind, PropensityModel, TrainConfig,
    TrainedEstimator,
};
use crate::policies::{apply_policy, fit_policy, recommend, PolicyInputs, PolicyKind};
use crate::rng::Rng;
use crate::uncertainty::{cate_estimate, epistemic_variance, predictive_variance};

/// Number of points on the default rejection grid.
pub const GRID_POINTS: usize = 21;

/// `0.0, 0.05, ..., 1.0`.
pub fn default_grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|i| i as f64 / 20.0).collect()
}

fn retained<'a>(
    values: &'a [f64],
    mask: Option<&'a [bool]>,
) -> impl Iterator<Item = (usize, f64)> + 'a {
    values
        .iter()
        .copied()
        .enumerate()
        .filter(move |(i, _)| mask.map_or(true, |m| m[*i]))
}

fn check_lengths(what: &str, a: usize, b: usize, mask: Option<&[bool]>) -> Result<()> {
    if a != b {
        return Err(Error::shape(what, a, b));
    }
    if let Some(m) = mask {
        if m.len() != a {
            return Err(Error::shape("retained mask", a, m.len()));
        }
    }
    Ok(())
}

/// Root mean squared CATE error over retained units (`mask[i] == true`).
pub fn pehe(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    check_lengths("true CATE", pred.len(), truth.len(), mask)?;
    let (mut ss, mut n) = (0.0, 0usize);
    for (i, p) in retained(pred, mask) {
        ss += (p - truth[i]).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "PEHE over an empty retained set".into(),
        ));
    }
    Ok((ss / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteError {
    pub absolute: f64,
    pub squared: f64,
}

pub fn ate_error(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<AteError> {
    check_lengths("true CATE", pred.len(), truth.len(), mask)?;
    let (mut diff, mut n) = (0.0, 0usize);
    for (i, p) in retained(pred, mask) {
        diff += p - truth[i];
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "ATE error over an empty retained set".into(),
        ));
    }
    let absolute = (diff / n as f64).abs();
    Ok(AteError {
        absolute,
        squared: absolute * absolute,
    })
}

/// Fraction of retained units whose recommendation disagrees with the sign of
/// the true CATE.
pub fn recommendation_error_rate(
    pred: &[f64],
    truth: &[f64],
    mask: Option<&[bool]>,
) -> Result<f64> {
    check_lengths("true CATE", pred.len(), truth.len(), mask)?;
    let (mut wrong, mut n) = (0usize, 0usize);
    for (i, p) in retained(pred, mask) {
        if recommend(p)? != recommend(truth[i])? {
            wrong += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "recommendation error over an empty retained set".into(),
        ));
    }
    Ok(wrong as f64 / n as f64)
}

/// Everything a policy sweep needs from one trained replication, with CATE
/// predictions and variances in unnormalized outcome units.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationScores {
    pub train: PolicyInputs,
    pub test: PolicyInputs,
    pub test_cate: Vec<f64>,
    pub test_cate_true: Vec<f64>,
    /// Seed of the random policy.
    pub random_seed: u64,
}

/// MC-averaged propensities of both splits of a replication.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityScores {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

impl PropensityScores {
    pub fn predict(
        model: &PropensityModel,
        rep: &Replication,
        mc_samples: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            train: predict_propensity(model, &rep.train.x, mc_samples, rng)?,
            test: predict_propensity(model, &rep.test.x, mc_samples, rng)?,
        })
    }
}

/// Runs `mc_samples` MC-dropout passes on both splits and collects the
/// policy inputs. Predictions are unnormalized with `rep.scaler`, so the model
/// must have been trained on outcomes normalized by it.
pub fn score_replication(
    model: &TrainedEstimator,
    propensity: Option<&PropensityScores>,
    rep: &Replication,
    mc_samples: usize,
    rng: &mut Rng,
) -> Result<ReplicationScores> {
    let truth = rep
        .test
        .cate_true
        .clone()
        .ok_or_else(|| Error::invalid("test split has no true CATE"))?;
    let std2 = rep.scaler.map_or(1.0, |s| s.std * s.std);
    let side = |data: &CateDataset,
                propensity: Option<&Vec<f64>>,
                rng: &mut Rng|
     -> Result<(PolicyInputs, Vec<f64>)> {
        if let Some(p) = propensity {
            if p.len() != data.len() {
                return Err(Error::shape("propensity scores", data.len(), p.len()));
            }
        }
        let samples = predict_mc(model, &data.x, mc_samples, rng)?;
        let cate = cate_estimate(&samples);
        let cate = match rep.scaler {
            Some(s) => s.invert_difference(&cate),
            None => cate,
        };
        let scale = |v: Vec<f64>| v.into_iter().map(|x| x * std2).collect::<Vec<_>>();
        Ok((
            PolicyInputs {
                epistemic: Some(scale(epistemic_variance(&samples)?)),
                predictive: Some(scale(predictive_variance(&samples)?)),
                propensity: propensity.cloned(),
                treatment: Some(data.t.clone()),
            },
            cate,
        ))
    };
    let (train, _) = side(&rep.train, propensity.map(|p| &p.train), rng)?;
    let (test, test_cate) = side(&rep.test, propensity.map(|p| &p.test), rng)?;
    Ok(ReplicationScores {
        train,
        test,
        test_cate,
        test_cate_true: truth,
        random_seed: rep.seed,
    })
}

/// Trains on the replication's training split, normalizing outcomes first
/// when the replication carries a scaler.
pub fn train_on_replication(
    kind: EstimatorKind,
    rep: &Replication,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainedEstimator> {
    match rep.scaler {
        Some(s) => train_estimator(kind, &s.normalize_dataset(&rep.train), config, rng),
        None => train_estimator(kind, &rep.train, config, rng),
    }
}

/// Metrics at one nominal rejection rate; `None` when every test unit is withheld.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r_nominal: f64,
    pub r_realized: f64,
    pub rec_error: Option<f64>,
    pub pehe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub policy: PolicyKind,
    pub points: Vec<CurvePoint>,
}

/// Fits the policy on training scores at every grid rate and evaluates the
/// retained test units. The random policy replays the same seed at each rate,
/// so its withheld sets are nested along the grid.
pub fn sweep(kind: PolicyKind, scores: &ReplicationScores, grid: &[f64]) -> Result<EvalCurve> {
    sweep_with_masks(kind, scores, grid).map(|(curve, _)| curve)
}

/// [`sweep`] that also returns the withheld mask at each grid point.
pub fn sweep_with_masks(
    kind: PolicyKind,
    scores: &ReplicationScores,
    grid: &[f64],
) -> Result<(EvalCurve, Vec<Vec<bool>>)> {
    let mut points = Vec::with_capacity(grid.len());
    let mut masks = Vec::with_capacity(grid.len());
    for &r in grid {
        let fitted = fit_policy(kind, &scores.train, r)?;
        let mut rng = Rng::new(scores.random_seed);
        let decision = apply_policy(&fitted, &scores.test, &mut rng)?;
        let keep = decision.retained();
        let point = if keep.iter().any(|&k| k) {
            CurvePoint {
                r_nominal: r,
                r_realized: decision.rejection_rate,
                rec_error: Some(recommendation_error_rate(
                    &scores.test_cate,
                    &scores.test_cate_true,
                    Some(&keep),
                )?),
                pehe: Some(pehe(
                    &scores.test_cate,
                    &scores.test_cate_true,
                    Some(&keep),
                )?),
            }
        } else {
            CurvePoint {
                r_nominal: r,
                r_realized: decision.rejection_rate,
                rec_error: None,
                pehe: None,
            }
        };
        points.push(point);
        masks.push(decision.withheld);
    }
    Ok((
        EvalCurve {
            policy: kind,
            points,
        },
        masks,
    ))
}

/// Mean and standard error of one metric at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    /// Replications contributing.
    pub count: usize,
    /// Set when only one replication contributed and the SE is 0 by convention.
    pub single: bool,
}

/// Mean and `std / √R` of the present values; `None` if all are absent.
pub fn summarize(values: impl IntoIterator<Item = Option<f64>>) -> Option<Summary> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    let n = v.len();
    if n == 0 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let std_error = if n < 2 {
        0.0
    } else {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Some(Summary {
        mean,
        std_error,
        count: n,
        single: n == 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub r_nominal: f64,
    pub r_realized: Option<Summary>,
    pub rec_error: Option<Summary>,
    pub pehe: Option<Summary>,
}

/// Pointwise mean ± SE over replications of the same policy and grid.
pub fn aggregate(curves: &[EvalCurve]) -> Result<Vec<AggregatePoint>> {
    let first = curves
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate zero curves"))?;
    for c in curves {
        if c.points.len() != first.points.len()
            || c.points
                .iter()
                .zip(&first.points)
                .any(|(a, b)| a.r_nominal != b.r_nominal)
        {
            return Err(Error::invalid("curves are on different grids"));
        }
    }
    Ok((0..first.points.len())
        .map(|j| AggregatePoint {
            r_nominal: first.points[j].r_nominal,
            r_realized: summarize(curves.iter().map(|c| Some(c.points[j].r_realized))),
            rec_error: summarize(curves.iter().map(|c| c.points[j].rec_error)),
            pehe: summarize(curves.iter().map(|c| c.points[j].pehe)),
        })
        .collect())
}

/// One row of the result CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub model: String,
    pub policy: String,
    pub replication: usize,
    pub r_nominal: f64,
    pub r_realized: f64,
    pub rec_error: Option<f64>,
    pub pehe: Option<f64>,
}

impl ResultRow {
    pub fn from_curve(
        dataset: &str,
        model: &str,
        replication: usize,
        curve: &EvalCurve,
    ) -> Vec<Self> {
        curve
            .points
            .iter()
            .map(|p| Self {
                dataset: dataset.to_string(),
                model: model.to_string(),
                policy: curve.policy.name().to_string(),
                replication,
                r_nominal: p.r_nominal,
                r_realized: p.r_realized,
                rec_error: p.rec_error,
                pehe: p.pehe,
            })
            .collect()
    }
}
