use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{ActorCritic, ActorPolicy, DqnLearner, QPolicy};
use crate::baselines;
use crate::dt::{DtModel, DtPolicy};
use crate::error::{Error, Result};
use crate::neural::Checkpoint;
use crate::policy::Policy;
use crate::sim::{Env, EnvConfig};

pub const EVAL_EPOCHS: u64 = 400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Decision epochs whose rewards are summed.
    pub epochs: u64,
    /// Epochs run before counting starts, so the sum is not dominated by
    /// the fill-up from an empty network.
    pub warmup: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            epochs: EVAL_EPOCHS,
            warmup: 0,
        }
    }
}

/// Sum of expected rewards over `opts.epochs` decision epochs of a frozen
/// policy on a simulator seeded with `seed`.
pub fn cumulative_reward<P: Policy + ?Sized>(policy: &mut P, config: &EnvConfig, seed: u64, opts: EvalOptions) -> Result<f64> {
    let mut env = Env::new(config.clone(), seed)?;
    for _ in 0..opts.warmup {
        env.step_with(policy)?;
    }
    let mut total = 0.0;
    for _ in 0..opts.epochs {
        total += env.step_with(policy)?.1.reward;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub policy: String,
    pub options: EvalOptions,
    pub seeds: Vec<u64>,
    pub rewards: Vec<f64>,
    pub mean: f64,
}

/// Evaluates a fresh policy from `make(seed)` on every seed. Each seed
/// drives the simulator, so different policies see the same arrivals.
pub fn eval_cumulative_reward(
    mut make: impl FnMut(u64) -> Result<Box<dyn Policy + Send>>,
    config: &EnvConfig,
    seeds: &[u64],
    opts: EvalOptions,
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::Usage("at least one seed is required".into()));
    }
    let mut name = String::new();
    let mut rewards = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut policy = make(seed)?;
        name = policy.name().to_string();
        rewards.push(cumulative_reward(&mut policy, config, seed, opts)?);
    }
    Ok(EvalReport {
        config_hash: config.hash(),
        policy: name,
        options: opts,
        seeds: seeds.to_vec(),
        mean: rewards.iter().sum::<f64>() / rewards.len() as f64,
        rewards,
    })
}

/// Frozen policy from a checkpoint file: a replica, an actor-critic (its
/// actor, decoded greedily) or a Q-network.
pub fn load_policy(path: impl AsRef<Path>, config: &EnvConfig) -> Result<Box<dyn Policy + Send>> {
    let path = path.as_ref();
    let raw: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
    let kind = raw.get("kind").and_then(|k| k.as_str()).unwrap_or_default().to_string();
    let check_hash = |hash: Option<&str>| match hash {
        Some(h) if h != config.hash() => Err(Error::Config(format!(
            "{} was produced under config {h}, not {}",
            path.display(),
            config.hash()
        ))),
        _ => Ok(()),
    };
    let meta_hash = raw
        .pointer("/meta/config_hash")
        .and_then(|h| h.as_str())
        .map(str::to_string);
    check_hash(meta_hash.as_deref())?;
    let policy: Box<dyn Policy + Send> = match kind.as_str() {
        DtModel::KIND => {
            let model = Checkpoint::<DtModel>::load(path, DtModel::KIND)?.model;
            check_hash(Some(&model.config_hash))?;
            Box::new(DtPolicy::new(model))
        }
        ActorCritic::KIND => {
            let ac = Checkpoint::<ActorCritic>::load(path, ActorCritic::KIND)?.model;
            let name = raw
                .pointer("/meta/method")
                .and_then(|m| m.as_str())
                .unwrap_or("actor-critic")
                .to_string();
            Box::new(ActorPolicy::greedy(ac.actor, name))
        }
        DqnLearner::KIND => {
            let agent = Checkpoint::<DqnLearner>::load(path, DqnLearner::KIND)?.model;
            Box::new(QPolicy { net: agent.online })
        }
        other => return Err(Error::Config(format!("{} holds an unknown model kind {other:?}", path.display()))),
    };
    Ok(policy)
}

/// Baseline by name, or a checkpoint when `spec` is a path to one.
pub fn policy_from_spec(spec: &str, config: &EnvConfig, seed: u64) -> Result<Box<dyn Policy + Send>> {
    if baselines::POLICY_NAMES.contains(&spec) {
        baselines::by_name(spec, config, seed)
    } else {
        load_policy(spec, config)
    }
}
