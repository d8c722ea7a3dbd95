use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{argmax, log_softmax_into, Scalar};
use crate::sim::ActionVec;

/// One categorical distribution per slice over admit counts `0..=n_max`.
///
/// The logits of group `k` occupy `[k * choices, (k + 1) * choices)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizedHead {
    pub groups: usize,
    pub choices: usize,
}

impl FactorizedHead {
    pub fn new(num_slices: usize, n_max: usize) -> Self {
        Self {
            groups: num_slices,
            choices: n_max + 1,
        }
    }

    pub fn width(&self) -> usize {
        self.groups * self.choices
    }

    fn check_len<F>(&self, xs: &[F]) -> Result<()> {
        if xs.len() != self.width() {
            return Err(Error::Usage(format!(
                "head expects {} logits, got {}",
                self.width(),
                xs.len()
            )));
        }
        Ok(())
    }

    /// Per-group log-softmax of `logits`.
    pub fn log_probs<F: Scalar>(&self, logits: &[F]) -> Result<Vec<F>> {
        self.check_len(logits)?;
        let mut out = vec![F::zero(); logits.len()];
        for (l, o) in logits.chunks(self.choices).zip(out.chunks_mut(self.choices)) {
            log_softmax_into(l, o);
        }
        Ok(out)
    }

    pub fn probs<F: Scalar>(&self, logits: &[F]) -> Result<Vec<F>> {
        Ok(self.log_probs(logits)?.into_iter().map(F::exp).collect())
    }

    fn check_action(&self, action: &ActionVec) -> Result<()> {
        if action.0.len() != self.groups || action.0.iter().any(|&a| a >= self.choices) {
            return Err(Error::Usage(format!(
                "action {:?} outside {} groups of {} choices",
                action.0, self.groups, self.choices
            )));
        }
        Ok(())
    }

    /// `log pi(a|s)` as the sum of the per-group log-probabilities.
    pub fn action_log_prob<F: Scalar>(&self, log_probs: &[F], action: &ActionVec) -> Result<F> {
        self.check_len(log_probs)?;
        self.check_action(action)?;
        Ok(action
            .0
            .iter()
            .enumerate()
            .map(|(k, &a)| log_probs[k * self.choices + a])
            .sum())
    }

    /// Independent categorical draw per group.
    pub fn sample<F: Scalar, R: Rng + ?Sized>(&self, log_probs: &[F], rng: &mut R) -> ActionVec {
        ActionVec(
            log_probs
                .chunks(self.choices)
                .map(|g| sample_categorical(g, rng))
                .collect(),
        )
    }

    /// Per-group argmax; ties go to the smallest count.
    pub fn greedy<F: Scalar>(&self, scores: &[F]) -> ActionVec {
        ActionVec(scores.chunks(self.choices).map(argmax).collect())
    }

    /// Gradient of `weight * (-log pi(a|s))` with respect to the logits,
    /// accumulated into `grad`: `weight * (p - onehot(a))` per group.
    pub fn nll_grad<F: Scalar>(
        &self,
        log_probs: &[F],
        action: &ActionVec,
        weight: F,
        grad: &mut [F],
    ) -> Result<()> {
        self.check_len(log_probs)?;
        self.check_len(grad)?;
        self.check_action(action)?;
        for (k, &a) in action.0.iter().enumerate() {
            let base = k * self.choices;
            for j in 0..self.choices {
                let p = log_probs[base + j].exp();
                let target = if j == a { F::one() } else { F::zero() };
                grad[base + j] += weight * (p - target);
            }
        }
        Ok(())
    }

    /// Sum of per-group entropies.
    pub fn entropy<F: Scalar>(&self, log_probs: &[F]) -> F {
        -log_probs.iter().map(|&lp| lp.exp() * lp).sum::<F>()
    }
}

/// A single softmax over every action in the `(n_max + 1)^K` product space,
/// indexed by [`ActionVec::to_index`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatHead {
    pub num_slices: usize,
    pub n_max: usize,
}

impl FlatHead {
    pub fn new(num_slices: usize, n_max: usize) -> Self {
        Self { num_slices, n_max }
    }

    pub fn width(&self) -> usize {
        (self.n_max + 1).pow(self.num_slices as u32)
    }

    pub fn log_probs<F: Scalar>(&self, logits: &[F]) -> Result<Vec<F>> {
        if logits.len() != self.width() {
            return Err(Error::Usage(format!(
                "head expects {} logits, got {}",
                self.width(),
                logits.len()
            )));
        }
        let mut out = vec![F::zero(); logits.len()];
        log_softmax_into(logits, &mut out);
        Ok(out)
    }

    pub fn action(&self, index: usize) -> ActionVec {
        ActionVec::from_index(index, self.num_slices, self.n_max)
    }

    pub fn index(&self, action: &ActionVec) -> Result<usize> {
        if action.0.len() != self.num_slices || action.0.iter().any(|&a| a > self.n_max) {
            return Err(Error::Usage(format!("action {:?} out of range", action.0)));
        }
        Ok(action.to_index(self.n_max))
    }

    pub fn sample<F: Scalar, R: Rng + ?Sized>(&self, log_probs: &[F], rng: &mut R) -> ActionVec {
        self.action(sample_categorical(log_probs, rng))
    }

    pub fn greedy<F: Scalar>(&self, scores: &[F]) -> ActionVec {
        self.action(argmax(scores))
    }
}

fn sample_categorical<F: Scalar, R: Rng + ?Sized>(log_probs: &[F], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.as_f64().exp();
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver of mass at the top; give it to the last
    // category that has any.
    log_probs
        .iter()
        .rposition(|lp| lp.as_f64() > f64::NEG_INFINITY)
        .unwrap_or(0)
}
