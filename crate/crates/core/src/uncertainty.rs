//! Epistemic, aleatoric and predictive uncertainty of the CATE from MC draws.
//!
//! All variances use the population (`1/M`) convention, which makes the
//! grouped decomposition `total = epistemic + aleatoric` an exact identity.
//! Entropies are in nats.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Posterior draws for `n` units.
///
/// `mu0`/`mu1` are `m × n` expected-outcome draws (one row per parameter
/// draw). `y0`/`y1` are `(m · k) × n` outcome draws, where row `j * k + i`
/// is the `i`-th outcome sampled under parameter draw `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct McOutcomeSamples {
    pub mu0: Tensor,
    pub mu1: Tensor,
    pub y0: Tensor,
    pub y1: Tensor,
    /// Outcome draws per parameter draw (`k`).
    pub inner_draws: usize,
}

impl McOutcomeSamples {
    pub fn new(
        mu0: Tensor,
        mu1: Tensor,
        y0: Tensor,
        y1: Tensor,
        inner_draws: usize,
    ) -> Result<Self> {
        let (m, n) = mu0.dims2();
        if mu1.dims2() != (m, n) {
            return Err(Error::shape("mu1 draws", (m, n), mu1.dims2()));
        }
        if inner_draws == 0 {
            return Err(Error::invalid("inner_draws must be at least 1"));
        }
        for (name, y) in [("y0 draws", &y0), ("y1 draws", &y1)] {
            if y.dims2() != (m * inner_draws, n) {
                return Err(Error::shape(name, (m * inner_draws, n), y.dims2()));
            }
        }
        if ![&mu0, &mu1, &y0, &y1].iter().all(|t| t.all_finite()) {
            return Err(Error::invalid("MC draws must be finite"));
        }
        Ok(Self {
            mu0,
            mu1,
            y0,
            y1,
            inner_draws,
        })
    }

    /// Samples where the outcome draws are the expected outcomes themselves.
    pub fn deterministic(mu0: Tensor, mu1: Tensor) -> Result<Self> {
        Self::new(mu0.clone(), mu1.clone(), mu0, mu1, 1)
    }

    pub fn num_draws(&self) -> usize {
        self.mu0.rows()
    }

    pub fn num_units(&self) -> usize {
        self.mu0.cols()
    }

    /// `mu1 - mu0` draws for unit `i`.
    pub fn cate_draws(&self, i: usize) -> Vec<f64> {
        let n = self.num_units();
        (0..self.num_draws())
            .map(|j| self.mu1.data()[j * n + i] - self.mu0.data()[j * n + i])
            .collect()
    }

    fn outcome_diff_draws(&self, i: usize) -> Vec<f64> {
        let n = self.num_units();
        (0..self.y0.rows())
            .map(|r| self.y1.data()[r * n + i] - self.y0.data()[r * n + i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    /// Variance of the parameter-draw group means of `y1 - y0`.
    pub epistemic: Vec<f64>,
    /// Variance over every `y1 - y0` draw, as `epistemic + aleatoric`.
    pub total: Vec<f64>,
    /// Mean within-group variance of `y1 - y0`.
    pub aleatoric: Vec<f64>,
    /// Mutual information per arm for binary outcomes, `[I(ω; Y⁰), I(ω; Y¹)]`.
    pub mutual_information: Option<Vec<[f64; 2]>>,
    pub cate: Vec<f64>,
}

/// Two-pass population variance.
pub(crate) fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    // Compensates the rounding error left in `mean`.
    let corr: f64 = xs.iter().map(|x| x - mean).sum();
    ((ss - corr * corr / n) / n).max(0.0)
}

/// Per-unit variance over parameter draws of `mu1 - mu0`.
pub fn epistemic_variance(samples: &McOutcomeSamples) -> Result<Vec<f64>> {
    if samples.num_draws() < 2 {
        return Err(Error::invalid("epistemic variance needs at least 2 draws"));
    }
    Ok((0..samples.num_units())
        .map(|i| population_variance(&samples.cate_draws(i)))
        .collect())
}

/// Per-unit variance over outcome draws of `y1 - y0`.
pub fn predictive_variance(samples: &McOutcomeSamples) -> Result<Vec<f64>> {
    if samples.y0.rows() < 2 {
        return Err(Error::invalid("predictive variance needs at least 2 draws"));
    }
    Ok((0..samples.num_units())
        .map(|i| population_variance(&samples.outcome_diff_draws(i)))
        .collect())
}

/// Monte-Carlo posterior mean of `mu1 - mu0` per unit.
pub fn cate_estimate(samples: &McOutcomeSamples) -> Vec<f64> {
    let m = samples.num_draws() as f64;
    (0..samples.num_units())
        .map(|i| samples.cate_draws(i).iter().sum::<f64>() / m)
        .collect()
}

/// Law-of-total-variance split of the outcome-difference draws.
///
/// Requires `inner_draws >= 2` so the within-group (aleatoric) part is defined.
pub fn decompose_variance(
    samples: &McOutcomeSamples,
    binary_outcomes: bool,
) -> Result<UncertaintyReport> {
    let k = samples.inner_draws;
    if k < 2 {
        return Err(Error::invalid(
            "aleatoric variance needs at least 2 outcome draws per parameter draw",
        ));
    }
    let m = samples.num_draws();
    let n = samples.num_units();
    let mut epistemic = Vec::with_capacity(n);
    let mut aleatoric = Vec::with_capacity(n);
    let mut total = Vec::with_capacity(n);
    for i in 0..n {
        let diffs = samples.outcome_diff_draws(i);
        let grand = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let mut between = 0.0;
        let mut within = 0.0;
        for group in diffs.chunks(k) {
            let gm = group.iter().sum::<f64>() / k as f64;
            between += (gm - grand) * (gm - grand);
            within += group.iter().map(|d| (d - gm) * (d - gm)).sum::<f64>() / k as f64;
        }
        let e = between / m as f64;
        let a = within / m as f64;
        epistemic.push(e);
        aleatoric.push(a);
        // Equal to the variance over all draws; summing keeps the identity exact.
        total.push(e + a);
    }
    let mutual_information = if binary_outcomes {
        let mut mi = Vec::with_capacity(n);
        for i in 0..n {
            let p0: Vec<f64> = (0..m).map(|j| samples.mu0.get2(j, i)).collect();
            let p1: Vec<f64> = (0..m).map(|j| samples.mu1.get2(j, i)).collect();
            mi.push([mutual_information(&p0)?, mutual_information(&p1)?]);
        }
        Some(mi)
    } else {
        None
    };
    Ok(UncertaintyReport {
        epistemic,
        total,
        aleatoric,
        mutual_information,
        cate: cate_estimate(samples),
    })
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

/// BALD mutual information `H(mean p) - mean H(p)` of Bernoulli draws.
pub fn mutual_information(p_samples: &[f64]) -> Result<f64> {
    if p_samples.is_empty() {
        return Err(Error::invalid("mutual information of no draws"));
    }
    if let Some(bad) = p_samples.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!(
            "probability draw {bad} outside [0, 1]"
        )));
    }
    let m = p_samples.len() as f64;
    let mean = p_samples.iter().sum::<f64>() / m;
    let expected = p_samples.iter().map(|&p| binary_entropy(p)).sum::<f64>() / m;
    Ok((binary_entropy(mean) - expected).clamp(0.0, std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn single_unit(mu0: &[f64], mu1: &[f64]) -> McOutcomeSamples {
        let m = mu0.len();
        McOutcomeSamples::deterministic(
            Tensor::matrix(m, 1, mu0.to_vec()).unwrap(),
            Tensor::matrix(m, 1, mu1.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identical_draws_have_zero_variance() {
        let s = single_unit(&[0.3; 5], &[0.9; 5]);
        assert_eq!(epistemic_variance(&s).unwrap(), vec![0.0]);
        assert_eq!(predictive_variance(&s).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_draw_example() {
        let s = single_unit(&[0.0, 1.0], &[1.0, 0.0]);
        assert_eq!(epistemic_variance(&s).unwrap(), vec![1.0]);
        assert_eq!(cate_estimate(&s), vec![0.0]);
    }

    #[test]
    fn single_draw_is_an_error() {
        let s = single_unit(&[0.0], &[1.0]);
        assert!(epistemic_variance(&s).is_err());
        assert!(predictive_variance(&s).is_err());
        assert_eq!(cate_estimate(&s), vec![1.0]);
    }

    #[test]
    fn deterministic_outcomes_match_epistemic() {
        let s = single_unit(&[0.1, 0.4, 0.2], &[0.5, 0.7, 0.1]);
        assert_eq!(
            epistemic_variance(&s).unwrap(),
            predictive_variance(&s).unwrap()
        );
    }

    #[test]
    fn decompose_needs_two_inner_draws() {
        let s = single_unit(&[0.1, 0.4], &[0.5, 0.7]);
        assert!(decompose_variance(&s, false).is_err());
    }

    #[test]
    fn mutual_information_cases() {
        assert_eq!(mutual_information(&[0.5; 4]).unwrap(), 0.0);
        assert!((mutual_information(&[0.0, 1.0, 0.0, 1.0]).unwrap() - LN_2).abs() < 1e-15);
        assert_eq!(mutual_information(&[0.7]).unwrap(), 0.0);
        assert!(mutual_information(&[]).is_err());
        assert!(mutual_information(&[1.2]).is_err());
    }

    #[test]
    fn shape_validation() {
        let a = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = Tensor::matrix(3, 2, vec![0.0; 6]).unwrap();
        assert!(McOutcomeSamples::deterministic(a, b).is_err());
    }
}
