use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam with bias correction and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[&Tensor], learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// Applies one update in place. Fails without touching anything if a
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::shape(
                "adam parameter count",
                self.first_moment.len(),
                (params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::shape(
                    format!("adam parameter {i}"),
                    p.shape(),
                    g.shape(),
                ));
            }
            if !g.all_finite() {
                return Err(Error::Divergence(format!("gradient of parameter {i}")));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr, wd) = (
            self.beta1,
            self.beta2,
            self.epsilon,
            self.learning_rate,
            self.weight_decay,
        );

        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(
            self.first_moment
                .iter_mut()
                .zip(self.second_moment.iter_mut()),
        ) {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *w);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = Tensor::vector(vec![1.0, -2.0]);
        let mut s = AdamState::new(&[&w], 1e-3, 0.0);
        s.step(&mut [&mut w], &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(w.data(), &[1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let g = [0.3, -5.0, 1e-3];
        let mut w = Tensor::vector(vec![0.0; 3]);
        let mut s = AdamState::new(&[&w], 1e-3, 0.0);
        s.step(&mut [&mut w], &[Tensor::vector(g.to_vec())])
            .unwrap();
        for (wi, gi) in w.data().iter().zip(g) {
            let expected = -1e-3 * gi / (gi.abs() + 1e-8);
            assert!((wi - expected).abs() < 1e-15, "{wi} vs {expected}");
            assert!((wi + 1e-3 * gi.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn nan_gradient_is_divergence() {
        let mut w = Tensor::vector(vec![1.0]);
        let mut s = AdamState::new(&[&w], 1e-3, 0.0);
        let err = s.step(&mut [&mut w], &[Tensor::vector(vec![f64::NAN])]);
        assert!(matches!(err, Err(Error::Divergence(_))));
        assert_eq!(w.data(), &[1.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let mut w = Tensor::vector(vec![0.5, 0.25]);
            let mut s = AdamState::new(&[&w], 1e-2, 1e-3);
            for k in 0..50 {
                let g = Tensor::vector(vec![(k as f64).sin(), w.data()[0] * 0.1]);
                s.step(&mut [&mut w], &[g]).unwrap();
            }
            w
        };
        assert_eq!(run(), run());
    }
}
