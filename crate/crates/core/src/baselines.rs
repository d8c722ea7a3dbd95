//! Reference admission policies.
//!
//! Every policy here returns a member of the valid action set of the state
//! it is given, so none of them ever pays the invalid-action penalty.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Observation, Policy};
use crate::sim::{ActionVec, EnvConfig, NetState, StepOutcome, Trigger, RESOURCES, RESOURCE_EPS};

/// Largest action space the exhaustive ILP solver will enumerate.
pub const ILP_ACTION_LIMIT: usize = 1_000_000;

/// Objective ties closer than this are broken by the slice-order rule.
pub const ILP_TIE_TOL: f64 = 1e-12;

/// Names accepted by [`by_name`].
pub const POLICY_NAMES: [&str; 5] = ["greedy", "ilp", "prio", "fcfs", "random"];

/// Admits requests slice by slice in `order`, one at a time while the next
/// one still fits, up to `n_max` and the queue length.
pub fn fill_in_order(state: &NetState, config: &EnvConfig, order: &[usize]) -> ActionVec {
    let mut act = vec![0; state.num_slices()];
    let mut after = state.n_svc.clone();
    for &k in order {
        let limit = state.n_req[k].min(config.n_max);
        while act[k] < limit {
            after[k] += 1;
            if !config.fits(&after) {
                after[k] -= 1;
                break;
            }
            act[k] += 1;
        }
    }
    ActionVec(act)
}

/// Slices by descending radio share; ties keep index order.
pub fn radio_order(config: &EnvConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..config.num_slices()).collect();
    order.sort_by(|&a, &b| {
        config.slices[b].resource[0].total_cmp(&config.slices[a].resource[0])
    });
    order
}

pub fn greedy_action(state: &NetState, config: &EnvConfig) -> ActionVec {
    fill_in_order(state, config, &radio_order(config))
}

/// Radio resource claimed by an action.
pub fn radio_objective(config: &EnvConfig, action: &ActionVec) -> f64 {
    config
        .slices
        .iter()
        .zip(&action.0)
        .map(|(s, &n)| n as f64 * s.resource[0])
        .sum()
}

/// Tie-break key: slice 3 first, then 2, 1, and 4 (for four slices); in
/// general the third slice leads, followed by the rest in the order
/// 2, 1, 4, 5, ...
fn tie_key(action: &ActionVec) -> Vec<usize> {
    let a = &action.0;
    let mut order: Vec<usize> = Vec::with_capacity(a.len());
    if a.len() >= 3 {
        order.extend([2, 1, 0]);
        order.extend(3..a.len());
    } else {
        order.extend((0..a.len()).rev());
    }
    order.into_iter().map(|k| a[k]).collect()
}

fn check_ilp_size(config: &EnvConfig) -> Result<()> {
    let count = (config.n_max + 1).checked_pow(config.num_slices() as u32);
    match count {
        Some(c) if c <= ILP_ACTION_LIMIT => Ok(()),
        _ => Err(Error::Capacity(format!(
            "action space of {}^{} is too large for exhaustive ILP; use the greedy or prio heuristic",
            config.n_max + 1,
            config.num_slices()
        ))),
    }
}

/// Exact per-epoch radio packing by enumeration of the valid actions.
/// Returns the action and its objective.
pub fn ilp_action(state: &NetState, config: &EnvConfig) -> Result<(ActionVec, f64)> {
    check_ilp_size(config)?;
    let mut best = ActionVec::zeros(state.num_slices());
    let mut best_obj = 0.0;
    for a in config.valid_actions(state) {
        let obj = radio_objective(config, &a);
        let better = obj > best_obj + ILP_TIE_TOL
            || ((obj - best_obj).abs() <= ILP_TIE_TOL && tie_key(&a) > tie_key(&best));
        if better {
            best_obj = obj;
            best = a;
        }
    }
    Ok((best, best_obj))
}

#[derive(Clone, Debug, Default)]
pub struct Greedy;

impl Policy for Greedy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        greedy_action(obs.state, obs.config)
    }
}

#[derive(Clone, Debug)]
pub struct Ilp;

impl Ilp {
    pub fn new(config: &EnvConfig) -> Result<Self> {
        check_ilp_size(config)?;
        Ok(Ilp)
    }
}

impl Policy for Ilp {
    fn name(&self) -> &str {
        "ilp"
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        ilp_action(obs.state, obs.config)
            .expect("size checked at construction")
            .0
    }
}

/// Default fairness margin of the priority heuristic.
pub const PRIO_MARGIN: f64 = 0.15;

/// History kept by the priority heuristic.
///
/// The fairness rule is our own reconstruction: a slice whose running
/// acceptance ratio trails the mean ratio by more than `margin` moves up one
/// rank for the current epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrioState {
    pub order: Vec<usize>,
    pub accepted: Vec<u64>,
    pub arrived: Vec<u64>,
    pub margin: f64,
}

impl PrioState {
    /// URLLC, eMBB, mMTC, then the rest, for the four-slice layout
    /// (mMTC, eMBB, URLLC, other). Other slice counts use index order.
    pub fn new(num_slices: usize, margin: f64) -> Self {
        let order = if num_slices == 4 {
            vec![2, 1, 0, 3]
        } else {
            (0..num_slices).collect()
        };
        Self::with_order(order, margin)
    }

    pub fn with_order(order: Vec<usize>, margin: f64) -> Self {
        let k = order.len();
        Self {
            order,
            accepted: vec![0; k],
            arrived: vec![0; k],
            margin,
        }
    }

    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.accepted
            .iter()
            .zip(&self.arrived)
            .map(|(&a, &n)| (n > 0).then(|| a as f64 / n as f64))
            .collect()
    }

    /// Priority order for this epoch after the fairness correction.
    pub fn epoch_order(&self) -> Vec<usize> {
        let ratios = self.ratios();
        let known: Vec<f64> = ratios.iter().flatten().copied().collect();
        let mut order = self.order.clone();
        if known.is_empty() {
            return order;
        }
        let mean = known.iter().sum::<f64>() / known.len() as f64;
        let lagging = |k: usize| ratios[k].is_some_and(|r| r < mean - self.margin);
        let mut p = 1;
        while p < order.len() {
            if lagging(order[p]) && !lagging(order[p - 1]) {
                order.swap(p - 1, p);
                p += 2;
            } else {
                p += 1;
            }
        }
        order
    }

    pub fn record(&mut self, outcome: &StepOutcome) {
        for (acc, &n) in self.accepted.iter_mut().zip(&outcome.admitted) {
            *acc += n as u64;
        }
        if let Trigger::Arrival(k) = outcome.trigger {
            self.arrived[k] += 1;
        }
    }
}

/// Fills slices in the epoch's priority order. Slices below the top rank
/// are admitted only while one more request of the top-ranked slice would
/// still fit, which keeps the top slice from being crowded out by smaller
/// requests.
pub fn prio_action(state: &NetState, config: &EnvConfig, prio: &PrioState) -> ActionVec {
    let order = prio.epoch_order();
    let mut act = vec![0; state.num_slices()];
    let mut after = state.n_svc.clone();
    let mut reserve = [0.0; RESOURCES];
    for &k in &order {
        let limit = state.n_req[k].min(config.n_max);
        while act[k] < limit {
            after[k] += 1;
            let used = config.used_resource(&after);
            if (0..RESOURCES).any(|x| used[x] + reserve[x] > 1.0 + RESOURCE_EPS) {
                after[k] -= 1;
                break;
            }
            act[k] += 1;
        }
        if k == order[0] {
            reserve = config.slices[k].resource;
        }
    }
    ActionVec(act)
}

#[derive(Clone, Debug)]
pub struct Prio {
    pub state: PrioState,
}

impl Prio {
    pub fn new(config: &EnvConfig) -> Self {
        Self {
            state: PrioState::new(config.num_slices(), PRIO_MARGIN),
        }
    }
}

impl Policy for Prio {
    fn name(&self) -> &str {
        "prio"
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        prio_action(obs.state, obs.config, &self.state)
    }

    fn observe(&mut self, outcome: &StepOutcome) {
        self.state.record(outcome);
    }
}

/// Admits queued requests in global arrival order and stops at the first
/// one that cannot be admitted.
pub fn fcfs_action(state: &NetState, config: &EnvConfig, queue_order: &[usize]) -> ActionVec {
    let mut act = vec![0; state.num_slices()];
    let mut after = state.n_svc.clone();
    for &k in queue_order {
        if act[k] >= config.n_max.min(state.n_req[k]) {
            break;
        }
        after[k] += 1;
        if !config.fits(&after) {
            break;
        }
        act[k] += 1;
    }
    ActionVec(act)
}

#[derive(Clone, Debug, Default)]
pub struct Fcfs;

impl Policy for Fcfs {
    fn name(&self) -> &str {
        "fcfs"
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        fcfs_action(obs.state, obs.config, obs.queue_order)
    }
}

/// Uniform draw from the valid action set.
#[derive(Clone, Debug)]
pub struct RandomValid {
    rng: ChaCha8Rng,
}

impl RandomValid {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomValid {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        obs.config
            .valid_actions(obs.state)
            .choose(&mut self.rng)
            .cloned()
            .expect("zero action is always valid")
    }
}

/// Builds a baseline by name; `seed` only matters for `random`.
pub fn by_name(name: &str, config: &EnvConfig, seed: u64) -> Result<Box<dyn Policy + Send>> {
    Ok(match name {
        "greedy" => Box::new(Greedy),
        "ilp" => Box::new(Ilp::new(config)?),
        "prio" => Box::new(Prio::new(config)),
        "fcfs" => Box::new(Fcfs),
        "random" => Box::new(RandomValid::new(seed)),
        other => {
            return Err(Error::Usage(format!(
                "unknown policy {other:?}; expected one of {}",
                POLICY_NAMES.join(", ")
            )))
        }
    })
}
