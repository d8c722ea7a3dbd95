//! Learning agents: actor-critic with an optional replica warm start, and a
//! dueling DQN baseline.

mod a2c;
mod dqn;
mod log;

pub use a2c::{run_dt_assisted, run_scratch_a2c, A2cHyper, ActorCritic, ActorPolicy, StepLosses};
pub use dqn::{train_dqn, DqnHyper, DqnLearner, QPolicy, ReplayBuffer, Transition};
pub use log::{EpochRecord, LogWriter, TrainLog};

use crate::error::Result;
use crate::neural::RngState;

/// Temporal-difference advantage `r + gamma V(s') - V(s)`.
pub fn advantage(reward: f64, v_s: f64, v_next: f64, gamma: f64) -> f64 {
    reward + gamma * v_next - v_s
}

/// Squared TD error and its derivative with respect to `V(s)`; the
/// bootstrap target is a constant.
pub fn critic_loss(reward: f64, v_s: f64, v_next: f64, gamma: f64) -> (f64, f64) {
    let d = advantage(reward, v_s, v_next, gamma);
    (d * d, -2.0 * d)
}

/// `-A log pi(a|s)`; minimizing it raises the likelihood of actions with
/// positive advantage.
pub fn actor_loss(log_prob: f64, advantage: f64) -> f64 {
    -advantage * log_prob
}

/// Hooks invoked while training.
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) {}

    fn on_checkpoint(&mut self, _epoch: u64, _kind: &str, _model: serde_json::Value, _rng: &RngState) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[cfg(test)]
mod tests;
