use rand::Rng;
use serde::{Deserialize, Serialize};

use super::head::{FactorizedHead, FlatHead};
use super::mlp::{Cache, Mlp};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::sim::{ActionVec, EnvConfig};

/// Hidden widths used throughout: three layers of 64 units.
pub const DEFAULT_HIDDEN: [usize; 3] = [64, 64, 64];

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Policy network: an [`Mlp`] feeding a [`FactorizedHead`]. Used for both
/// the replica model and the actor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct PolicyNet<F> {
    pub mlp: Mlp<F>,
    pub head: FactorizedHead,
}

impl<F: Scalar> PolicyNet<F> {
    pub fn new<R: Rng + ?Sized>(config: &EnvConfig, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let head = FactorizedHead::new(config.num_slices(), config.n_max);
        let mlp = Mlp::new(&widths(2 * config.num_slices(), hidden, head.width()), rng)?;
        Ok(Self { mlp, head })
    }

    pub fn from_parts(mlp: Mlp<F>, head: FactorizedHead) -> Result<Self> {
        if mlp.output_dim() != head.width() {
            return Err(Error::Usage(format!(
                "network output {} does not match head width {}",
                mlp.output_dim(),
                head.width()
            )));
        }
        Ok(Self { mlp, head })
    }

    pub fn log_probs(&self, x: &[F]) -> Result<Vec<F>> {
        self.head.log_probs(&self.mlp.predict(x)?)
    }

    pub fn greedy(&self, x: &[F]) -> Result<ActionVec> {
        Ok(self.head.greedy(&self.mlp.predict(x)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[F], rng: &mut R) -> Result<(ActionVec, Vec<F>)> {
        let lp = self.log_probs(x)?;
        Ok((self.head.sample(&lp, rng), lp))
    }

    /// Greedy decode for a batch of inputs.
    pub fn greedy_batch(&self, xs: &[F], batch: usize) -> Result<Vec<ActionVec>> {
        let cache = self.mlp.forward_batch(xs, batch)?;
        Ok((0..batch).map(|b| self.head.greedy(cache.output(b))).collect())
    }

    /// Accumulates the gradient of `sum_b w_b * (-log pi(a_b | s_b))` into
    /// `grads` and returns that loss.
    ///
    /// With `w_b = 1/B` this is the mean cross-entropy against the labels;
    /// with `w_b` set to an advantage it is the actor loss.
    pub fn weighted_nll(&self, xs: &[F], actions: &[ActionVec], weights: &[F], grads: &mut [F]) -> Result<F> {
        let batch = actions.len();
        if weights.len() != batch {
            return Err(Error::Usage("one weight per action is required".into()));
        }
        let cache = self.mlp.forward_batch(xs, batch)?;
        let width = self.head.width();
        let mut grad_out = vec![F::zero(); batch * width];
        let mut loss = F::zero();
        for b in 0..batch {
            let lp = self.head.log_probs(cache.output(b))?;
            loss -= weights[b] * self.head.action_log_prob(&lp, &actions[b])?;
            self.head
                .nll_grad(&lp, &actions[b], weights[b], &mut grad_out[b * width..(b + 1) * width])?;
        }
        self.mlp.backward(&cache, &grad_out, grads)?;
        Ok(loss)
    }
}

/// State-value network with a single linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ValueNet<F> {
    pub mlp: Mlp<F>,
}

impl<F: Scalar> ValueNet<F> {
    pub fn new<R: Rng + ?Sized>(config: &EnvConfig, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mlp = Mlp::new(&widths(2 * config.num_slices(), hidden, 1), rng)?;
        Ok(Self { mlp })
    }

    pub fn value(&self, x: &[F]) -> Result<F> {
        Ok(self.mlp.predict(x)?[0])
    }

    /// Accumulates the gradient of `sum_b w_b * (y_b - V(s_b))^2` with the
    /// targets held constant, and returns that loss.
    pub fn weighted_squared_error(&self, xs: &[F], targets: &[F], weights: &[F], grads: &mut [F]) -> Result<F> {
        let batch = targets.len();
        if weights.len() != batch {
            return Err(Error::Usage("one weight per target is required".into()));
        }
        let cache = self.mlp.forward_batch(xs, batch)?;
        let mut grad_out = vec![F::zero(); batch];
        let mut loss = F::zero();
        for b in 0..batch {
            let d = targets[b] - cache.output(b)[0];
            loss += weights[b] * d * d;
            grad_out[b] = -F::of(2.0) * weights[b] * d;
        }
        self.mlp.backward(&cache, &grad_out, grads)?;
        Ok(loss)
    }
}

/// Dueling Q-network over the flat action space: the trunk emits one value
/// unit followed by one advantage unit per action, combined as
/// `Q = V + A - mean(A)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DuelingNet<F> {
    pub mlp: Mlp<F>,
    pub head: FlatHead,
}

impl<F: Scalar> DuelingNet<F> {
    pub fn new<R: Rng + ?Sized>(config: &EnvConfig, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let head = FlatHead::new(config.num_slices(), config.n_max);
        let mlp = Mlp::new(&widths(2 * config.num_slices(), hidden, 1 + head.width()), rng)?;
        Ok(Self { mlp, head })
    }

    pub fn num_actions(&self) -> usize {
        self.head.width()
    }

    fn combine(raw: &[F]) -> Vec<F> {
        let v = raw[0];
        let adv = &raw[1..];
        let mean = adv.iter().copied().sum::<F>() / F::of(adv.len() as f64);
        adv.iter().map(|&a| v + a - mean).collect()
    }

    pub fn q_values(&self, x: &[F]) -> Result<Vec<F>> {
        Ok(Self::combine(&self.mlp.predict(x)?))
    }

    pub fn q_batch(&self, xs: &[F], batch: usize) -> Result<(Cache<F>, Vec<Vec<F>>)> {
        let cache = self.mlp.forward_batch(xs, batch)?;
        let q = (0..batch).map(|b| Self::combine(cache.output(b))).collect();
        Ok((cache, q))
    }

    /// Accumulates the gradient of the mean squared TD error
    /// `mean_b (Q(s_b, a_b) - y_b)^2` and returns that loss.
    pub fn td_loss(&self, xs: &[F], actions: &[usize], targets: &[F], grads: &mut [F]) -> Result<F> {
        let batch = actions.len();
        if targets.len() != batch {
            return Err(Error::Usage("one target per action is required".into()));
        }
        let (cache, q) = self.q_batch(xs, batch)?;
        let n = self.num_actions();
        let scale = F::one() / F::of(batch as f64);
        let mut grad_out = vec![F::zero(); batch * (n + 1)];
        let mut loss = F::zero();
        for b in 0..batch {
            let a = actions[b];
            if a >= n {
                return Err(Error::Usage(format!("action index {a} out of range")));
            }
            let d = q[b][a] - targets[b];
            loss += scale * d * d;
            // dQ_a/dV = 1, dQ_a/dA_j = [j == a] - 1/n.
            let g = F::of(2.0) * scale * d;
            let row = &mut grad_out[b * (n + 1)..(b + 1) * (n + 1)];
            row[0] = g;
            let share = g / F::of(n as f64);
            for r in row[1..].iter_mut() {
                *r = -share;
            }
            row[1 + a] += g;
        }
        self.mlp.backward(&cache, &grad_out, grads)?;
        Ok(loss)
    }
}
