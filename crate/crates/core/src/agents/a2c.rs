use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::{EpochRecord, TrainLog};
use super::{advantage, critic_loss, TrainObserver};
use crate::error::{Error, Result};
use crate::neural::{Adam, PolicyNet, RngState, ValueNet, DEFAULT_HIDDEN};
use crate::policy::{Observation, Policy};
use crate::sim::{ActionVec, Env, EnvConfig, NetState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct A2cHyper {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Critic-only epochs with the actor frozen (warm-started runs only).
    pub critic_epochs: u64,
    /// Epochs with both networks learning.
    pub joint_epochs: u64,
    pub entropy_coef: f64,
    /// Rewards are multiplied by this before entering the losses; logs keep
    /// the unscaled reward.
    pub reward_scale: f64,
    /// Save a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for A2cHyper {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            gamma: 0.99,
            actor_lr: 4e-4,
            critic_lr: 1e-4,
            critic_epochs: 6000,
            joint_epochs: 50_000,
            entropy_coef: 0.0,
            reward_scale: 1.0,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

/// Actor (factorized policy) and critic (state value) with their
/// optimizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: PolicyNet<f64>,
    pub critic: ValueNet<f64>,
    pub actor_opt: Adam<f64>,
    pub critic_opt: Adam<f64>,
    pub hyper: A2cHyper,
}

/// Losses and advantage of one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub advantage: f64,
    pub critic: f64,
    pub actor: Option<f64>,
}

impl ActorCritic {
    pub const KIND: &'static str = "actor-critic";

    /// Fresh networks from the hyperparameter seed.
    pub fn new(config: &EnvConfig, hyper: &A2cHyper) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let actor = PolicyNet::new(config, &hyper.hidden, &mut rng)?;
        Self::with_actor(config, actor, hyper, &mut rng)
    }

    /// Actor initialized from an existing policy network, such as a replica.
    pub fn from_actor(config: &EnvConfig, actor: PolicyNet<f64>, hyper: &A2cHyper) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        Self::with_actor(config, actor, hyper, &mut rng)
    }

    fn with_actor(config: &EnvConfig, actor: PolicyNet<f64>, hyper: &A2cHyper, rng: &mut ChaCha8Rng) -> Result<Self> {
        if actor.head.groups != config.num_slices() || actor.head.choices != config.n_max + 1 {
            return Err(Error::Config("actor head does not match the environment".into()));
        }
        if actor.mlp.input_dim() != 2 * config.num_slices() {
            return Err(Error::Config("actor input width does not match the environment".into()));
        }
        let critic = ValueNet::new(config, &hyper.hidden, rng)?;
        Ok(Self {
            actor_opt: Adam::new(actor.mlp.num_params(), hyper.actor_lr),
            critic_opt: Adam::new(critic.mlp.num_params(), hyper.critic_lr),
            actor,
            critic,
            hyper: hyper.clone(),
        })
    }

    /// One semi-gradient TD update of the critic and, if `train_actor`, one
    /// advantage-weighted likelihood step of the actor.
    pub fn update(&mut self, x: &[f64], action: &ActionVec, reward: f64, x_next: &[f64], train_actor: bool) -> Result<StepLosses> {
        let gamma = self.hyper.gamma;
        let r = reward * self.hyper.reward_scale;
        let v = self.critic.value(x)?;
        let v_next = self.critic.value(x_next)?;
        let adv = advantage(r, v, v_next, gamma);
        let (c_loss, _) = critic_loss(r, v, v_next, gamma);

        let mut grads = vec![0.0; self.critic.mlp.num_params()];
        self.critic
            .weighted_squared_error(x, &[r + gamma * v_next], &[1.0], &mut grads)?;
        self.critic_opt.step(self.critic.mlp.params_mut(), &grads)?;

        let mut a_loss = None;
        if train_actor {
            let mut grads = vec![0.0; self.actor.mlp.num_params()];
            let loss = self
                .actor
                .weighted_nll(x, std::slice::from_ref(action), &[adv], &mut grads)?;
            if self.hyper.entropy_coef != 0.0 {
                self.add_entropy_grad(x, &mut grads)?;
            }
            self.actor_opt.step(self.actor.mlp.params_mut(), &grads)?;
            a_loss = Some(loss);
        }
        Ok(StepLosses {
            advantage: adv,
            critic: c_loss,
            actor: a_loss,
        })
    }

    /// Adds the gradient of `-entropy_coef * H(pi(.|s))`.
    fn add_entropy_grad(&self, x: &[f64], grads: &mut [f64]) -> Result<()> {
        let cache = self.actor.mlp.forward(x)?;
        let lp = self.actor.head.log_probs(cache.outputs())?;
        let c = self.actor.head.choices;
        let mut g = vec![0.0; lp.len()];
        for (lg, gg) in lp.chunks(c).zip(g.chunks_mut(c)) {
            let h: f64 = -lg.iter().map(|l| l.exp() * l).sum::<f64>();
            for (l, o) in lg.iter().zip(gg.iter_mut()) {
                *o = self.hyper.entropy_coef * l.exp() * (l + h);
            }
        }
        self.actor.mlp.backward(&cache, &g, grads)
    }
}

fn check_finite(what: &str, epoch: u64, state: &NetState, action: &ActionVec, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Training(format!(
            "{what} became {value} at epoch {epoch}; state n_req={:?} n_svc={:?}, action {:?}",
            state.n_req, state.n_svc, action.0
        )))
    }
}

fn run_phase(
    ac: &mut ActorCritic,
    env: &mut Env,
    rng: &mut ChaCha8Rng,
    epochs: u64,
    phase: u8,
    log: &mut TrainLog,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    let config = env.config().clone();
    let train_actor = phase != 2;
    for _ in 0..epochs {
        let epoch = log.records.len() as u64;
        let state = env.state();
        let x = config.encode_state(&state);
        let (action, _) = ac.actor.sample(&x, rng)?;
        let out = env.step(&action)?;
        let x_next = config.encode_state(&out.next_state);
        let losses = ac.update(&x, &action, out.reward, &x_next, train_actor)?;
        check_finite("critic loss", epoch, &state, &action, losses.critic)?;
        if let Some(a) = losses.actor {
            check_finite("actor loss", epoch, &state, &action, a)?;
        }
        let mut rec = EpochRecord::from_outcome(epoch, phase, &config, &action, &out);
        rec.loss_critic = Some(losses.critic);
        rec.loss_actor = losses.actor;
        observer.on_epoch(&rec);
        log.records.push(rec);
        let every = ac.hyper.checkpoint_every;
        if every > 0 && (epoch + 1) % every == 0 {
            let model = serde_json::to_value(&*ac)?;
            observer.on_checkpoint(epoch + 1, ActorCritic::KIND, model, &RngState::capture(rng))?;
        }
    }
    Ok(())
}

fn sampling_rng(hyper: &A2cHyper) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    // Keep action sampling apart from the stream that initialized the nets.
    rng.set_stream(1);
    rng
}

/// Warm-started training: the actor starts from `actor` (a replica), the
/// critic learns alone for `critic_epochs` with the actor frozen, then both
/// learn for `joint_epochs`.
pub fn run_dt_assisted(
    env: &mut Env,
    actor: PolicyNet<f64>,
    hyper: &A2cHyper,
    observer: &mut dyn TrainObserver,
) -> Result<(ActorCritic, TrainLog)> {
    let config = env.config().clone();
    let mut ac = ActorCritic::from_actor(&config, actor, hyper)?;
    let mut rng = sampling_rng(hyper);
    let mut log = TrainLog::new(&config, "dt-assisted", hyper.seed);
    run_phase(&mut ac, env, &mut rng, hyper.critic_epochs, 2, &mut log, observer)?;
    run_phase(&mut ac, env, &mut rng, hyper.joint_epochs, 3, &mut log, observer)?;
    Ok((ac, log))
}

/// Actor-critic from random initialization for `joint_epochs`.
pub fn run_scratch_a2c(env: &mut Env, hyper: &A2cHyper, observer: &mut dyn TrainObserver) -> Result<(ActorCritic, TrainLog)> {
    let config = env.config().clone();
    let mut ac = ActorCritic::new(&config, hyper)?;
    let mut rng = sampling_rng(hyper);
    let mut log = TrainLog::new(&config, "scratch-a2c", hyper.seed);
    run_phase(&mut ac, env, &mut rng, hyper.joint_epochs, 3, &mut log, observer)?;
    Ok((ac, log))
}

/// A frozen actor used as a policy, decoding greedily or by sampling.
#[derive(Clone, Debug)]
pub struct ActorPolicy {
    pub actor: PolicyNet<f64>,
    pub sample: bool,
    rng: ChaCha8Rng,
    name: String,
}

impl ActorPolicy {
    pub fn greedy(actor: PolicyNet<f64>, name: impl Into<String>) -> Self {
        Self {
            actor,
            sample: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            name: name.into(),
        }
    }

    pub fn sampling(actor: PolicyNet<f64>, name: impl Into<String>, seed: u64) -> Self {
        Self {
            actor,
            sample: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            name: name.into(),
        }
    }
}

impl Policy for ActorPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        let x = obs.config.encode_state(obs.state);
        if self.sample {
            self.actor.sample(&x, &mut self.rng).expect("actor matches config").0
        } else {
            self.actor.greedy(&x).expect("actor matches config")
        }
    }
}
