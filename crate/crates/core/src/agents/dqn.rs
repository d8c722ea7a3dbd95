use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::{EpochRecord, TrainLog};
use super::TrainObserver;
use crate::error::{Error, Result};
use crate::neural::{Adam, DuelingNet, RngState, DEFAULT_HIDDEN};
use crate::num::argmax;
use crate::policy::{Observation, Policy};
use crate::sim::{ActionVec, Env};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnHyper {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub buffer: usize,
    pub batch: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Epochs over which exploration decays linearly to `eps_end`.
    pub eps_decay_epochs: u64,
    /// Gradient steps between target-network copies.
    pub target_sync: u64,
    pub epochs: u64,
    pub reward_scale: f64,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for DqnHyper {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            lr: 1e-4,
            gamma: 0.99,
            buffer: 10_000,
            batch: 32,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_epochs: 10_000,
            target_sync: 500,
            epochs: 56_000,
            reward_scale: 1.0,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub x_next: Vec<f64>,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform draw with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

/// Dueling Q-learner with experience replay and a target network. It only
/// sees encoded states, action indices and rewards, so it can be driven by
/// any environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnLearner {
    pub online: DuelingNet<f64>,
    pub target: DuelingNet<f64>,
    pub opt: Adam<f64>,
    pub buffer: ReplayBuffer,
    pub hyper: DqnHyper,
    pub updates: u64,
}

impl DqnLearner {
    pub const KIND: &'static str = "dueling-dqn";

    pub fn new(online: DuelingNet<f64>, hyper: &DqnHyper) -> Result<Self> {
        if hyper.buffer == 0 || hyper.batch == 0 || hyper.target_sync == 0 {
            return Err(Error::Usage("buffer, batch and target sync must be positive".into()));
        }
        Ok(Self {
            target: online.clone(),
            opt: Adam::new(online.mlp.num_params(), hyper.lr),
            online,
            buffer: ReplayBuffer::new(hyper.buffer),
            hyper: hyper.clone(),
            updates: 0,
        })
    }

    pub fn epsilon(&self, epoch: u64) -> f64 {
        let h = &self.hyper;
        if epoch >= h.eps_decay_epochs {
            return h.eps_end;
        }
        let frac = epoch as f64 / h.eps_decay_epochs as f64;
        h.eps_start + (h.eps_end - h.eps_start) * frac
    }

    /// Uniform over all actions with probability `epsilon`, else greedy.
    pub fn select<R: Rng + ?Sized>(&self, x: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        if rng.random::<f64>() < epsilon {
            Ok(rng.random_range(0..self.online.num_actions()))
        } else {
            Ok(argmax(&self.online.q_values(x)?))
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One replay step. Returns the TD loss, or `None` while the buffer holds
    /// fewer transitions than a batch.
    pub fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        let n = self.hyper.batch;
        if self.buffer.len() < n {
            return Ok(None);
        }
        let batch = self.buffer.sample(n, rng);
        let width = self.online.mlp.input_dim();
        let mut xs = Vec::with_capacity(n * width);
        let mut next = Vec::with_capacity(n * width);
        let mut actions = Vec::with_capacity(n);
        for t in &batch {
            xs.extend_from_slice(&t.x);
            next.extend_from_slice(&t.x_next);
            actions.push(t.action);
        }
        let (_, q_next) = self.target.q_batch(&next, n)?;
        let targets: Vec<f64> = batch
            .iter()
            .zip(&q_next)
            .map(|(t, q)| t.reward + self.hyper.gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut grads = vec![0.0; self.online.mlp.num_params()];
        let loss = self.online.td_loss(&xs, &actions, &targets, &mut grads)?;
        self.opt.step(self.online.mlp.params_mut(), &grads)?;
        self.updates += 1;
        if self.updates % self.hyper.target_sync == 0 {
            self.target = self.online.clone();
        }
        Ok(Some(loss))
    }
}

/// Online replay training on the simulator; invalid actions execute as a
/// penalized no-op.
pub fn train_dqn(env: &mut Env, hyper: &DqnHyper, observer: &mut dyn TrainObserver) -> Result<(DqnLearner, TrainLog)> {
    let config = env.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let online = DuelingNet::new(&config, &hyper.hidden, &mut rng)?;
    let mut agent = DqnLearner::new(online, hyper)?;
    rng.set_stream(1);
    let mut log = TrainLog::new(&config, "dqn", hyper.seed);
    for epoch in 0..hyper.epochs {
        let state = env.state();
        let x = config.encode_state(&state);
        let idx = agent.select(&x, agent.epsilon(epoch), &mut rng)?;
        let action = agent.online.head.action(idx);
        let out = env.step(&action)?;
        let x_next = config.encode_state(&out.next_state);
        agent.push(Transition {
            x,
            action: idx,
            reward: out.reward * hyper.reward_scale,
            x_next,
        });
        let loss = agent.learn(&mut rng)?;
        if let Some(l) = loss {
            if !l.is_finite() {
                return Err(Error::Training(format!(
                    "TD loss became {l} at epoch {epoch}; state n_req={:?} n_svc={:?}, action {:?}",
                    state.n_req, state.n_svc, action.0
                )));
            }
        }
        let mut rec = EpochRecord::from_outcome(epoch, 0, &config, &action, &out);
        rec.loss_critic = loss;
        observer.on_epoch(&rec);
        log.records.push(rec);
        if hyper.checkpoint_every > 0 && (epoch + 1) % hyper.checkpoint_every == 0 {
            let model = serde_json::to_value(&agent)?;
            observer.on_checkpoint(epoch + 1, DqnLearner::KIND, model, &RngState::capture(&rng))?;
        }
    }
    Ok((agent, log))
}

/// Greedy policy over a trained Q-network.
#[derive(Clone, Debug)]
pub struct QPolicy {
    pub net: DuelingNet<f64>,
}

impl Policy for QPolicy {
    fn name(&self) -> &str {
        "dqn"
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        let q = self
            .net
            .q_values(&obs.config.encode_state(obs.state))
            .expect("network matches config");
        self.net.head.action(argmax(&q))
    }
}
