use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::sim::{EnvConfig, NetState, RESOURCE_EPS};

/// Default ceiling on the number of enumerated states.
pub const DEFAULT_STATE_LIMIT: usize = 2_000_000;

/// Finite state set: queues capped at `queue_cap`, services resource-feasible.
///
/// States are the product of queue vectors and feasible service vectors and
/// are indexed lexicographically in `[n_req, n_svc]` without being stored.
#[derive(Clone, Debug)]
pub struct StateSpace {
    k: usize,
    queue_cap: usize,
    svc_combos: Vec<Vec<usize>>,
    svc_index: HashMap<Vec<usize>, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.queue_vectors() * self.svc_combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn queue_cap(&self) -> usize {
        self.queue_cap
    }

    pub fn num_slices(&self) -> usize {
        self.k
    }

    fn queue_vectors(&self) -> usize {
        (self.queue_cap + 1).pow(self.k as u32)
    }

    pub fn get(&self, index: usize) -> NetState {
        let n_svc_combos = self.svc_combos.len();
        let mut req_idx = index / n_svc_combos;
        let svc_idx = index % n_svc_combos;
        let mut n_req = vec![0; self.k];
        for slot in n_req.iter_mut().rev() {
            *slot = req_idx % (self.queue_cap + 1);
            req_idx /= self.queue_cap + 1;
        }
        NetState {
            n_req,
            n_svc: self.svc_combos[svc_idx].clone(),
        }
    }

    pub fn index_of(&self, state: &NetState) -> Option<usize> {
        if state.n_req.len() != self.k || state.n_req.iter().any(|&q| q > self.queue_cap) {
            return None;
        }
        let svc = *self.svc_index.get(&state.n_svc)?;
        let req = state.n_req.iter().fold(0, |acc, &q| acc * (self.queue_cap + 1) + q);
        Some(req * self.svc_combos.len() + svc)
    }

    pub fn iter(&self) -> impl Iterator<Item = NetState> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

/// Enumerates the capped state space, failing if it exceeds `limit` states.
pub fn enumerate_states(config: &EnvConfig, queue_cap: usize, limit: usize) -> Result<StateSpace> {
    config.validate()?;
    let k = config.num_slices();
    let queue_vectors = (queue_cap + 1)
        .checked_pow(k as u32)
        .filter(|&n| n <= limit)
        .ok_or_else(|| Error::Capacity(format!("more than {limit} queue vectors")))?;
    let max_combos = limit / queue_vectors;

    let mut svc_combos = Vec::new();
    let mut current = vec![0usize; k];
    let mut used = [0.0f64; 3];
    fn rec(
        config: &EnvConfig,
        slice: usize,
        current: &mut Vec<usize>,
        used: &mut [f64; 3],
        out: &mut Vec<Vec<usize>>,
        max: usize,
    ) -> bool {
        if slice == current.len() {
            if out.len() == max {
                return false;
            }
            out.push(current.clone());
            return true;
        }
        let r = config.slices[slice].resource;
        let saved = *used;
        let mut n = 0;
        loop {
            if used.iter().any(|&u| u > 1.0 + RESOURCE_EPS) {
                break;
            }
            current[slice] = n;
            if !rec(config, slice + 1, current, used, out, max) {
                return false;
            }
            n += 1;
            for x in 0..3 {
                used[x] = saved[x] + r[x] * n as f64;
            }
        }
        current[slice] = 0;
        *used = saved;
        true
    }
    if !rec(config, 0, &mut current, &mut used, &mut svc_combos, max_combos) {
        return Err(Error::Capacity(format!(
            "state space exceeds {limit} states at queue cap {queue_cap}"
        )));
    }
    let svc_index = svc_combos.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    Ok(StateSpace {
        k,
        queue_cap,
        svc_combos,
        svc_index,
    })
}
