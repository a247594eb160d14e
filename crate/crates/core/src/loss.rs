//! Batch-mean losses, both as plain functions and as graph nodes.

use std::f64::consts::PI;

use crate::autodiff::{self, Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_len(ctx: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(ctx, a, b));
    }
    if a == 0 {
        return Err(Error::invalid(format!("{ctx} of an empty batch")));
    }
    Ok(())
}

/// Binary cross-entropy; predictions are clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("bce", pred.len(), target.len())?;
    Ok(autodiff::bce_value(pred, target))
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("mse", pred.len(), target.len())?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Mean negative Gaussian log-density `0.5 (log σ² + (y - μ)² / σ² + ln 2π)`.
pub fn gaussian_nll(mean: &[f64], log_variance: &[f64], target: &[f64]) -> Result<f64> {
    check_len("gaussian_nll", mean.len(), target.len())?;
    check_len("gaussian_nll", log_variance.len(), target.len())?;
    let total: f64 = mean
        .iter()
        .zip(log_variance)
        .zip(target)
        .map(|((m, lv), y)| 0.5 * (lv + (y - m) * (y - m) * (-lv).exp() + (2.0 * PI).ln()))
        .sum();
    Ok(total / mean.len() as f64)
}

pub fn bce_node(g: &mut Graph, pred: NodeId, target: &[f64]) -> Result<NodeId> {
    check_len("bce", g.value(pred).len(), target.len())?;
    g.bce(pred, Tensor::vector(target.to_vec()))
}

pub fn mse_node(g: &mut Graph, pred: NodeId, target: &[f64]) -> Result<NodeId> {
    let n = g.value(pred).len();
    check_len("mse", n, target.len())?;
    let shape = g.value(pred).shape().to_vec();
    let t = g.constant(Tensor::new(shape, target.to_vec())?);
    let d = g.sub(pred, t)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// Gaussian NLL averaged over every element of `mean`. The log-variance is
/// either elementwise or one row (e.g. a per-feature or single shared
/// parameter) repeated down the rows.
pub fn gaussian_nll_node(
    g: &mut Graph,
    mean: NodeId,
    log_variance: NodeId,
    target: &[f64],
) -> Result<NodeId> {
    let n = g.value(mean).len();
    check_len("gaussian_nll", n, target.len())?;
    let lv_len = g.value(log_variance).len();
    let lv = if lv_len == n {
        log_variance
    } else if lv_len > 0 && n % lv_len == 0 {
        g.broadcast_rows(log_variance, n / lv_len)?
    } else {
        return Err(Error::shape("gaussian_nll log-variance", n, lv_len));
    };
    let t = g.constant(Tensor::vector(target.to_vec()));
    let d = g.sub(t, mean)?;
    let sq = g.square(d);
    let neg_lv = g.scale(lv, -1.0);
    let inv_var = g.exp(neg_lv);
    let weighted = g.mul(sq, inv_var)?;
    let s = g.add(weighted, lv)?;
    let m = g.mean(s);
    let half = g.scale(m, 0.5);
    Ok(g.add_scalar(half, 0.5 * (2.0 * PI).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_half_is_ln2() {
        assert!((bce(&[0.5], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let x = [0.3, -1.0, 2.5];
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_nll_unit_variance_identity() {
        let m = [0.2, -1.0, 3.0];
        let y = [0.0, 0.5, 2.0];
        let lhs = gaussian_nll(&m, &[0.0; 3], &y).unwrap();
        let rhs = 0.5 * mse(&m, &y).unwrap() + 0.5 * (2.0 * PI).ln();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(bce(&[0.5], &[1.0, 0.0]).is_err());
        assert!(mse(&[0.5], &[]).is_err());
        assert!(gaussian_nll(&[0.5], &[0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn graph_losses_match_eager() {
        let pred = [0.2, 0.7, 0.9];
        let y = [0.0, 1.0, 1.0];
        let mut g = Graph::new();
        let p = g.constant(Tensor::vector(pred.to_vec()));
        let l = bce_node(&mut g, p, &y).unwrap();
        assert!((g.value(l).item() - bce(&pred, &y).unwrap()).abs() < 1e-15);
        let l = mse_node(&mut g, p, &y).unwrap();
        assert!((g.value(l).item() - mse(&pred, &y).unwrap()).abs() < 1e-15);
        let lv = g.constant(Tensor::vector(vec![0.3]));
        let l = gaussian_nll_node(&mut g, p, lv, &y).unwrap();
        let eager = gaussian_nll(&pred, &[0.3; 3], &y).unwrap();
        assert!((g.value(l).item() - eager).abs() < 1e-14);
    }
}
