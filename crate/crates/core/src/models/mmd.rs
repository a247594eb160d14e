//! Biased squared maximum mean discrepancy with an RBF kernel
//! `k(a, b) = exp(-|a - b|² / (2 σ²))`.

use crate::autodiff::{rbf_matrix, Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn gamma(bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!(
            "RBF bandwidth must be positive, got {bandwidth}"
        )));
    }
    Ok(1.0 / (2.0 * bandwidth * bandwidth))
}

fn check_sets(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.rows() == 0 || b.rows() == 0 || a.is_empty() || b.is_empty() {
        return Err(Error::invalid("MMD of an empty set"));
    }
    if a.cols() != b.cols() {
        return Err(Error::shape("MMD representation width", a.cols(), b.cols()));
    }
    Ok(())
}

pub fn mmd2(repr_a: &Tensor, repr_b: &Tensor, bandwidth: f64) -> Result<f64> {
    check_sets(repr_a, repr_b)?;
    let gamma = gamma(bandwidth)?;
    let mean = |x: &Tensor, y: &Tensor| {
        let k = rbf_matrix(x, y, gamma);
        k.iter().sum::<f64>() / k.len() as f64
    };
    let v = mean(repr_a, repr_a) + mean(repr_b, repr_b) - 2.0 * mean(repr_a, repr_b);
    Ok(v.max(0.0))
}

/// Median pairwise distance over the pooled rows; `1.0` when that is zero.
pub fn median_bandwidth(repr_a: &Tensor, repr_b: &Tensor) -> f64 {
    let pooled: Vec<&[f64]> = (0..repr_a.rows())
        .map(|i| repr_a.row(i))
        .chain((0..repr_b.rows()).map(|i| repr_b.row(i)))
        .collect();
    let mut dists = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            let sq: f64 = pooled[i]
                .iter()
                .zip(pooled[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(sq.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 0.0 && median.is_finite() {
        median
    } else {
        1.0
    }
}

/// Differentiable [`mmd2`] on graph nodes.
pub(crate) fn mmd2_node(g: &mut Graph, a: NodeId, b: NodeId, bandwidth: f64) -> Result<NodeId> {
    check_sets(g.value(a), g.value(b))?;
    let gamma = gamma(bandwidth)?;
    let kaa = g.rbf_mean(a, a, gamma)?;
    let kbb = g.rbf_mean(b, b, gamma)?;
    let kab = g.rbf_mean(a, b, gamma)?;
    let within = g.add(kaa, kbb)?;
    let cross = g.scale(kab, 2.0);
    g.sub(within, cross)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn identical_sets_are_zero() {
        let a = Tensor::matrix(3, 2, vec![0.1, 0.2, -1.0, 0.5, 2.0, 2.0]).unwrap();
        assert!(mmd2(&a, &a, 1.3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn singleton_closed_form() {
        let v = mmd2(&col(&[0.0]), &col(&[1.0]), 1.0).unwrap();
        let expected = 2.0 * (1.0 - (-0.5f64).exp());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.7869).abs() < 1e-4);
    }

    #[test]
    fn symmetric() {
        let a = col(&[0.0, 0.3, 1.2]);
        let b = col(&[2.0, -0.5]);
        assert_eq!(mmd2(&a, &b, 0.7).unwrap(), mmd2(&b, &a, 0.7).unwrap());
    }

    #[test]
    fn empty_set_errors() {
        let a = Tensor::zeros(&[0, 1]);
        assert!(mmd2(&a, &col(&[1.0]), 1.0).is_err());
        assert!(mmd2(&col(&[1.0]), &col(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn graph_version_matches() {
        let a = col(&[0.0, 0.3, 1.2]);
        let b = col(&[2.0, -0.5]);
        let mut g = Graph::new();
        let na = g.constant(a.clone());
        let nb = g.constant(b.clone());
        let m = mmd2_node(&mut g, na, nb, 0.9).unwrap();
        assert!((g.value(m).item() - mmd2(&a, &b, 0.9).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn median_heuristic() {
        // pooled {0, 1, 3}: distances 1, 3, 2 -> median 2
        assert_eq!(median_bandwidth(&col(&[0.0, 1.0]), &col(&[3.0])), 2.0);
        assert_eq!(median_bandwidth(&col(&[1.0]), &col(&[1.0])), 1.0);
    }
}
