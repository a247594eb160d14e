//! Recommendation-withholding policies.
//!
//! Every policy is fitted on training-set scores for a nominal rejection rate
//! `r` and then applied to test units, so the realized test rate can differ
//! from `r`. Score-based policies withhold units whose score exceeds a
//! threshold; ties at the threshold are withheld in input order, in the same
//! proportion as on the fitting set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Epistemic variance of the CATE.
    Epistemic,
    /// Predictive (total) variance of the CATE.
    Predictive,
    /// Two-sided propensity quantiles.
    PropensityQuantiles,
    /// Minima–maxima common-support trimming.
    PropensityTrimming,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Epistemic,
        PolicyKind::Predictive,
        PolicyKind::PropensityQuantiles,
        PolicyKind::PropensityTrimming,
        PolicyKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Epistemic => "epistemic",
            PolicyKind::Predictive => "predictive",
            PolicyKind::PropensityQuantiles => "propensity_quantiles",
            PolicyKind::PropensityTrimming => "propensity_trimming",
            PolicyKind::Random => "random",
        }
    }

    /// Whether the policy withholds by a deterministic score.
    pub fn is_score_based(self) -> bool {
        self != PolicyKind::Random
    }

    pub fn needs_propensity(self) -> bool {
        matches!(
            self,
            PolicyKind::PropensityQuantiles | PolicyKind::PropensityTrimming
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown policy {s:?}")))
    }
}

/// `score > threshold` withholds; of the units scoring exactly `threshold`,
/// the first `round(tie_fraction · count)` in input order are withheld too.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreThreshold {
    pub threshold: f64,
    pub tie_fraction: f64,
}

fn check_rate(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid(format!(
            "rejection rate must lie in [0, 1], got {r}"
        )));
    }
    Ok(())
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot fit a threshold to zero scores"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    Ok(())
}

/// Number of units withheld at rate `r` out of `n`.
pub fn rejection_count(r: f64, n: usize) -> usize {
    ((r * n as f64).round() as usize).min(n)
}

/// Threshold withholding exactly `round(r · N)` of `scores`.
pub fn fit_threshold(scores: &[f64], r: f64) -> Result<ScoreThreshold> {
    check_rate(r)?;
    fit_threshold_count(scores, rejection_count(r, scores.len()))
}

/// Threshold withholding exactly the `k` highest of `scores`.
pub fn fit_threshold_count(scores: &[f64], k: usize) -> Result<ScoreThreshold> {
    check_scores(scores)?;
    let n = scores.len();
    if k > n {
        return Err(Error::invalid(format!("cannot withhold {k} of {n} units")));
    }
    if k == n {
        return Ok(ScoreThreshold {
            threshold: f64::NEG_INFINITY,
            tie_fraction: 0.0,
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k];
    let above = sorted.iter().take_while(|&&s| s > threshold).count();
    let ties = sorted.iter().filter(|&&s| s == threshold).count();
    Ok(ScoreThreshold {
        threshold,
        tie_fraction: (k - above) as f64 / ties as f64,
    })
}

pub fn apply_threshold(scores: &[f64], t: &ScoreThreshold) -> Vec<bool> {
    let ties = scores.iter().filter(|&&s| s == t.threshold).count();
    let quota = (t.tie_fraction * ties as f64).round() as usize;
    let mut used = 0;
    scores
        .iter()
        .map(|&s| {
            if s > t.threshold {
                true
            } else if s == t.threshold && used < quota {
                used += 1;
                true
            } else {
                false
            }
        })
        .collect()
}

/// Minima–maxima common support of the two arms' propensities.
pub fn common_support(treated: &[f64], control: &[f64]) -> Result<(f64, f64)> {
    if treated.is_empty() || control.is_empty() {
        return Err(Error::EmptyArm {
            arm: u8::from(treated.is_empty()),
        });
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        min(treated).max(min(control)),
        max(treated).min(max(control)),
    ))
}

/// Distance outside the support (positive), or minus the margin to the
/// nearer boundary inside it.
pub fn trimming_score_in(p: f64, (lo, hi): (f64, f64)) -> f64 {
    if lo > hi {
        // Disjoint supports: everything is outside; order by distance to the gap centre.
        return (p - 0.5 * (lo + hi)).abs();
    }
    if p < lo {
        lo - p
    } else if p > hi {
        p - hi
    } else {
        -(p - lo).min(hi - p)
    }
}

pub fn trimming_score(p: f64, treated: &[f64], control: &[f64]) -> Result<f64> {
    Ok(trimming_score_in(p, common_support(treated, control)?))
}

/// Treatment recommendation from a CATE estimate.
pub fn recommend(cate_estimate: f64) -> Result<u8> {
    if cate_estimate.is_nan() {
        return Err(Error::invalid("cannot recommend from a NaN CATE estimate"));
    }
    Ok(u8::from(cate_estimate > 0.0))
}

/// Per-unit inputs a policy may need.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyInputs {
    pub epistemic: Option<Vec<f64>>,
    pub predictive: Option<Vec<f64>>,
    pub propensity: Option<Vec<f64>>,
    /// Treatments; the trimming policy reads them on the fitting set.
    pub treatment: Option<Vec<f64>>,
}

impl PolicyInputs {
    fn get<'a>(v: &'a Option<Vec<f64>>, what: &str) -> Result<&'a [f64]> {
        v.as_deref()
            .ok_or_else(|| Error::invalid(format!("policy needs {what} scores")))
    }

    fn len(&self) -> Option<usize> {
        [&self.epistemic, &self.predictive, &self.propensity]
            .into_iter()
            .flatten()
            .map(Vec::len)
            .next()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedPolicy {
    /// Epistemic, predictive and trimming: one upper threshold.
    Upper {
        kind: PolicyKind,
        threshold: ScoreThreshold,
        /// Common support for trimming.
        support: Option<(f64, f64)>,
    },
    /// Propensity quantiles: withhold `score < lower` or `score > upper`.
    TwoSided {
        lower: ScoreThreshold,
        upper: ScoreThreshold,
    },
    Random {
        rate: f64,
    },
}

/// Outcome of applying a fitted policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionDecision {
    pub scores: Vec<f64>,
    /// One entry for one-sided policies, `[lower, upper]` for two-sided.
    pub thresholds: Vec<f64>,
    pub withheld: Vec<bool>,
    /// Realized fraction withheld.
    pub rejection_rate: f64,
}

impl RejectionDecision {
    fn new(scores: Vec<f64>, thresholds: Vec<f64>, withheld: Vec<bool>) -> Self {
        let n = withheld.len();
        let rate = if n == 0 {
            0.0
        } else {
            withheld.iter().filter(|&&w| w).count() as f64 / n as f64
        };
        Self {
            scores,
            thresholds,
            withheld,
            rejection_rate: rate,
        }
    }

    pub fn retained(&self) -> Vec<bool> {
        self.withheld.iter().map(|w| !w).collect()
    }
}

impl FittedPolicy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            FittedPolicy::Upper { kind, .. } => *kind,
            FittedPolicy::TwoSided { .. } => PolicyKind::PropensityQuantiles,
            FittedPolicy::Random { .. } => PolicyKind::Random,
        }
    }
}

fn score_of(
    kind: PolicyKind,
    inputs: &PolicyInputs,
    support: Option<(f64, f64)>,
) -> Result<Vec<f64>> {
    Ok(match kind {
        PolicyKind::Epistemic => PolicyInputs::get(&inputs.epistemic, "epistemic")?.to_vec(),
        PolicyKind::Predictive => PolicyInputs::get(&inputs.predictive, "predictive")?.to_vec(),
        PolicyKind::PropensityQuantiles => {
            PolicyInputs::get(&inputs.propensity, "propensity")?.to_vec()
        }
        PolicyKind::PropensityTrimming => {
            let support = support.expect("trimming carries its support");
            PolicyInputs::get(&inputs.propensity, "propensity")?
                .iter()
                .map(|&p| trimming_score_in(p, support))
                .collect()
        }
        PolicyKind::Random => unreachable!("random policy has no score"),
    })
}

/// Fits `kind` at nominal rate `r` on training inputs.
pub fn fit_policy(kind: PolicyKind, train: &PolicyInputs, r: f64) -> Result<FittedPolicy> {
    check_rate(r)?;
    match kind {
        PolicyKind::Random => Ok(FittedPolicy::Random { rate: r }),
        PolicyKind::PropensityQuantiles => {
            let p = PolicyInputs::get(&train.propensity, "propensity")?;
            check_scores(p)?;
            let k = rejection_count(r, p.len());
            let k_lo = k / 2;
            // Lower tail: the k_lo smallest, via negated scores.
            let neg: Vec<f64> = p.iter().map(|v| -v).collect();
            let lower = fit_threshold_count(&neg, k_lo)?;
            let low_out = apply_threshold(&neg, &lower);
            // Upper tail: the remaining k - k_lo largest among the units kept so far.
            let rest: Vec<f64> = p
                .iter()
                .zip(&low_out)
                .filter(|(_, &w)| !w)
                .map(|(&v, _)| v)
                .collect();
            let upper = if rest.is_empty() {
                ScoreThreshold {
                    threshold: f64::NEG_INFINITY,
                    tie_fraction: 0.0,
                }
            } else {
                fit_threshold_count(&rest, k - k_lo)?
            };
            Ok(FittedPolicy::TwoSided { lower, upper })
        }
        PolicyKind::PropensityTrimming => {
            let p = PolicyInputs::get(&train.propensity, "propensity")?;
            let t = PolicyInputs::get(&train.treatment, "treatment")?;
            if t.len() != p.len() {
                return Err(Error::shape("treatments", p.len(), t.len()));
            }
            let treated: Vec<f64> = p
                .iter()
                .zip(t)
                .filter(|(_, &t)| t == 1.0)
                .map(|(&v, _)| v)
                .collect();
            let control: Vec<f64> = p
                .iter()
                .zip(t)
                .filter(|(_, &t)| t != 1.0)
                .map(|(&v, _)| v)
                .collect();
            let support = common_support(&treated, &control)?;
            let scores = score_of(kind, train, Some(support))?;
            Ok(FittedPolicy::Upper {
                kind,
                threshold: fit_threshold(&scores, r)?,
                support: Some(support),
            })
        }
        PolicyKind::Epistemic | PolicyKind::Predictive => {
            let scores = score_of(kind, train, None)?;
            Ok(FittedPolicy::Upper {
                kind,
                threshold: fit_threshold(&scores, r)?,
                support: None,
            })
        }
    }
}

/// Applies a fitted policy to test inputs. `rng` is only drawn from by the
/// random policy.
pub fn apply_policy(
    fitted: &FittedPolicy,
    test: &PolicyInputs,
    rng: &mut Rng,
) -> Result<RejectionDecision> {
    match fitted {
        FittedPolicy::Upper {
            kind,
            threshold,
            support,
        } => {
            let scores = score_of(*kind, test, *support)?;
            let withheld = apply_threshold(&scores, threshold);
            Ok(RejectionDecision::new(
                scores,
                vec![threshold.threshold],
                withheld,
            ))
        }
        FittedPolicy::TwoSided { lower, upper } => {
            let p = PolicyInputs::get(&test.propensity, "propensity")?.to_vec();
            let neg: Vec<f64> = p.iter().map(|v| -v).collect();
            let low_out = apply_threshold(&neg, lower);
            let rest_idx: Vec<usize> = (0..p.len()).filter(|&i| !low_out[i]).collect();
            let rest: Vec<f64> = rest_idx.iter().map(|&i| p[i]).collect();
            let high_out = apply_threshold(&rest, upper);
            let mut withheld = low_out;
            for (&i, &w) in rest_idx.iter().zip(&high_out) {
                withheld[i] = w;
            }
            Ok(RejectionDecision::new(
                p,
                vec![-lower.threshold, upper.threshold],
                withheld,
            ))
        }
        FittedPolicy::Random { rate } => {
            let n = test.len().ok_or_else(|| {
                Error::invalid("random policy needs at least one score vector to size the test set")
            })?;
            Ok(random_decision(n, *rate, rng))
        }
    }
}

/// Withholds a seeded uniform subset of `round(r · n)` units. The subset is a
/// prefix of one permutation, so subsets for increasing `r` are nested when
/// the generator is replayed.
pub fn random_decision(n: usize, r: f64, rng: &mut Rng) -> RejectionDecision {
    let perm = rng.permutation(n);
    let k = rejection_count(r, n);
    // Score = how early the unit appears in the permutation.
    let mut scores = vec![0.0; n];
    for (rank, &i) in perm.iter().enumerate() {
        scores[i] = (n - rank) as f64 / n.max(1) as f64;
    }
    let mut withheld = vec![false; n];
    for &i in &perm[..k] {
        withheld[i] = true;
    }
    let threshold = if k == n {
        f64::NEG_INFINITY
    } else {
        (n - k) as f64 / n as f64
    };
    RejectionDecision::new(scores, vec![threshold], withheld)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistic_threshold() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        let t = fit_threshold(&s, 0.2).unwrap();
        assert_eq!(t.threshold, 8.0);
        let w = apply_threshold(&s, &t);
        assert_eq!(w.iter().filter(|&&b| b).count(), 2);
        assert!(w[8] && w[9]);
        assert!(apply_threshold(&s, &fit_threshold(&s, 0.0).unwrap())
            .iter()
            .all(|w| !w));
        assert!(apply_threshold(&s, &fit_threshold(&s, 1.0).unwrap())
            .iter()
            .all(|&w| w));
        assert!(fit_threshold(&[], 0.5).is_err());
    }

    #[test]
    fn ties_follow_input_order() {
        let s = vec![0.0; 10];
        let t = fit_threshold(&s, 0.5).unwrap();
        let w = apply_threshold(&s, &t);
        assert_eq!(w, [vec![true; 5], vec![false; 5]].concat());
    }

    #[test]
    fn two_sided_quantiles() {
        let p: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * f64::from(i)).collect();
        let inputs = PolicyInputs {
            propensity: Some(p.clone()),
            ..Default::default()
        };
        let fitted = fit_policy(PolicyKind::PropensityQuantiles, &inputs, 0.2).unwrap();
        let d = apply_policy(&fitted, &inputs, &mut Rng::new(0)).unwrap();
        let out: Vec<usize> = (0..10).filter(|&i| d.withheld[i]).collect();
        assert_eq!(out, vec![0, 9]);
    }

    #[test]
    fn trimming_interval() {
        let treated = [0.3, 0.5, 0.9];
        let control = [0.1, 0.4, 0.7];
        assert_eq!(common_support(&treated, &control).unwrap(), (0.3, 0.7));
        assert!((trimming_score(0.95, &treated, &control).unwrap() - 0.25).abs() < 1e-12);
        let mid = trimming_score(0.5, &treated, &control).unwrap();
        let near = trimming_score(0.35, &treated, &control).unwrap();
        assert!(mid < near && near < 0.0);
        assert!(trimming_score(0.5, &[], &control).is_err());
    }

    #[test]
    fn recommendations() {
        assert_eq!(recommend(0.3).unwrap(), 1);
        assert_eq!(recommend(-0.2).unwrap(), 0);
        assert_eq!(recommend(0.0).unwrap(), 0);
        assert!(recommend(f64::NAN).is_err());
    }

    #[test]
    fn random_is_seeded_and_exact() {
        let a = random_decision(33, 0.3, &mut Rng::new(5));
        let b = random_decision(33, 0.3, &mut Rng::new(5));
        assert_eq!(a, b);
        assert_eq!(a.withheld.iter().filter(|&&w| w).count(), 10);
    }
}
