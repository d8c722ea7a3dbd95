use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Adam optimizer state for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![F::zero(); num_params],
            v: vec![F::zero(); num_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [F], grads: &[F]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Usage(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = F::of(self.beta1);
        let b2 = F::of(self.beta2);
        let c1 = F::of(1.0 - self.beta1.powi(t));
        let c2 = F::of(1.0 - self.beta2.powi(t));
        let lr = F::of(self.lr);
        let eps = F::of(self.eps);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (F::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (F::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = Adam::<f64>::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(opt.steps(), 10);
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut opt = Adam::<f64>::new(2, 1e-4);
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.5]).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        assert!((p[0] + 1e-4 * 3.0 / (3.0 + 1e-8)).abs() < 1e-18);
        assert!((p[1] - 1e-4 * 0.5 / (0.5 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut opt = Adam::<f64>::new(2, 1e-2);
            let mut p = vec![0.3, 0.7];
            for i in 0..50 {
                let g = [p[0] * i as f64, -p[1]];
                opt.step(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut opt = Adam::<f64>::new(2, 1e-2);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
