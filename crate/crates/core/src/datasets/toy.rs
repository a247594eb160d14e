//! One-dimensional binary-outcome data without overlap.
//!
//! Control units live on `[-6, -1]` and treated units on `[1, 6]`, so each
//! arm's absent side is a non-overlap region and `(-1, 1)` is empty for both.
//! `p(y = 1 | x, t = 0) = σ(x)` and `p(y = 1 | x, t = 1) = σ(-x)`, so the true
//! CATE `σ(-x) - σ(x)` changes sign at zero.

use crate::autodiff::sigmoid;
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{CateDataset, OutcomeKind};

pub const TOY1D_CONTROL_SUPPORT: (f64, f64) = (-6.0, -1.0);
pub const TOY1D_TREATED_SUPPORT: (f64, f64) = (1.0, 6.0);

/// Where a point sits relative to the two supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toy1dRegion {
    /// Inside the control support: treated outcomes are unobserved there.
    ControlOnly,
    TreatedOnly,
    /// Between or beyond both supports.
    Neither,
}

impl Toy1dRegion {
    pub fn of(x: f64) -> Self {
        let inside = |(lo, hi): (f64, f64)| (lo..=hi).contains(&x);
        if inside(TOY1D_CONTROL_SUPPORT) {
            Toy1dRegion::ControlOnly
        } else if inside(TOY1D_TREATED_SUPPORT) {
            Toy1dRegion::TreatedOnly
        } else {
            Toy1dRegion::Neither
        }
    }
}

/// `(mu0, mu1)` at `x`.
pub fn toy1d_truth(x: f64) -> (f64, f64) {
    (sigmoid(x), sigmoid(-x))
}

/// `n_per_region` control units followed by `n_per_region` treated units.
pub fn generate_toy1d(rng: &mut Rng, n_per_region: usize) -> Result<CateDataset> {
    let n = 2 * n_per_region;
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut mu0 = Vec::with_capacity(n);
    let mut mu1 = Vec::with_capacity(n);
    for (arm, (lo, hi)) in [(0.0, TOY1D_CONTROL_SUPPORT), (1.0, TOY1D_TREATED_SUPPORT)] {
        for _ in 0..n_per_region {
            let xi = rng.uniform_range(lo, hi);
            let (m0, m1) = toy1d_truth(xi);
            let p = if arm == 1.0 { m1 } else { m0 };
            x.push(xi);
            t.push(arm);
            y.push(if rng.bernoulli(p) { 1.0 } else { 0.0 });
            mu0.push(m0);
            mu1.push(m1);
        }
    }
    let x = Tensor::matrix(n, 1, x)?;
    CateDataset::new(x, t, y, OutcomeKind::Binary)?.with_truth(mu0, mu1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supports_do_not_overlap() {
        let d = generate_toy1d(&mut Rng::new(3), 500).unwrap();
        for i in 0..d.len() {
            let x = d.x.data()[i];
            if d.t[i] == 0.0 {
                assert!(x <= -1.0 && x >= -6.0);
            } else {
                assert!(x >= 1.0 && x <= 6.0);
            }
        }
    }

    #[test]
    fn regions() {
        assert_eq!(Toy1dRegion::of(-3.0), Toy1dRegion::ControlOnly);
        assert_eq!(Toy1dRegion::of(2.0), Toy1dRegion::TreatedOnly);
        assert_eq!(Toy1dRegion::of(0.0), Toy1dRegion::Neither);
    }
}
