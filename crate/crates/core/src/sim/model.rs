//! State and action algebra of the admission model: feasibility, valid
//! actions, expected sojourn and the per-epoch reward.

use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, ResourceVec, RESOURCES, RESOURCE_EPS};
use crate::error::{Error, Result};

/// Queued-request and running-service counts per slice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetState {
    pub n_req: Vec<usize>,
    pub n_svc: Vec<usize>,
}

impl NetState {
    pub fn empty(k: usize) -> Self {
        NetState {
            n_req: vec![0; k],
            n_svc: vec![0; k],
        }
    }

    pub fn num_slices(&self) -> usize {
        self.n_req.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_req.iter().chain(&self.n_svc).all(|&n| n == 0)
    }
}

/// Number of requests admitted per slice in one decision.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionVec(pub Vec<usize>);

impl ActionVec {
    pub fn zeros(k: usize) -> Self {
        ActionVec(vec![0; k])
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&n| n == 0)
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Mixed-radix index in `0..(n_max+1)^K`, first slice most significant.
    pub fn to_index(&self, n_max: usize) -> usize {
        self.0.iter().fold(0, |acc, &n| acc * (n_max + 1) + n)
    }

    pub fn from_index(mut index: usize, k: usize, n_max: usize) -> Self {
        let mut counts = vec![0; k];
        for slot in counts.iter_mut().rev() {
            *slot = index % (n_max + 1);
            index /= n_max + 1;
        }
        ActionVec(counts)
    }
}

impl From<Vec<usize>> for ActionVec {
    fn from(v: Vec<usize>) -> Self {
        ActionVec(v)
    }
}

impl EnvConfig {
    /// Resource fractions held by the given running-service counts.
    pub fn used_resource(&self, n_svc: &[usize]) -> ResourceVec {
        let mut used = [0.0; RESOURCES];
        for (slice, &n) in self.slices.iter().zip(n_svc) {
            for (u, r) in used.iter_mut().zip(&slice.resource) {
                *u += r * n as f64;
            }
        }
        used
    }

    pub fn remaining_resource(&self, n_svc: &[usize]) -> ResourceVec {
        self.used_resource(n_svc).map(|u| 1.0 - u)
    }

    pub fn fits(&self, n_svc: &[usize]) -> bool {
        self.used_resource(n_svc)
            .iter()
            .all(|&u| u <= 1.0 + RESOURCE_EPS)
    }

    /// Whether the state obeys the capacity constraint and has the right shape.
    pub fn is_state_feasible(&self, state: &NetState) -> bool {
        state.n_req.len() == self.num_slices()
            && state.n_svc.len() == self.num_slices()
            && self.fits(&state.n_svc)
    }

    /// Membership in the unrestricted action space `A`.
    pub fn in_action_space(&self, action: &ActionVec) -> bool {
        action.0.len() == self.num_slices() && action.0.iter().all(|&n| n <= self.n_max)
    }

    pub fn check_action(&self, action: &ActionVec) -> Result<()> {
        if self.in_action_space(action) {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "action {:?} is outside the action space (K = {}, n_max = {})",
                action.0,
                self.num_slices(),
                self.n_max
            )))
        }
    }

    /// Membership in the valid action set of `state`.
    pub fn is_valid(&self, state: &NetState, action: &ActionVec) -> bool {
        if !self.in_action_space(action) {
            return false;
        }
        if action.0.iter().zip(&state.n_req).any(|(&a, &q)| a > q) {
            return false;
        }
        let after: Vec<usize> = state.n_svc.iter().zip(&action.0).map(|(s, a)| s + a).collect();
        self.fits(&after)
    }

    /// All valid actions at `state`, in lexicographic order. Always contains
    /// the zero action.
    pub fn valid_actions(&self, state: &NetState) -> Vec<ActionVec> {
        let limits: Vec<usize> = state.n_req.iter().map(|&q| q.min(self.n_max)).collect();
        let mut out = Vec::new();
        let mut current = vec![0; limits.len()];
        self.extend_valid(state, &limits, 0, &mut current, &mut out);
        out
    }

    fn extend_valid(
        &self,
        state: &NetState,
        limits: &[usize],
        k: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<ActionVec>,
    ) {
        if k == limits.len() {
            let after: Vec<usize> = state.n_svc.iter().zip(current.iter()).map(|(s, a)| s + a).collect();
            if self.fits(&after) {
                out.push(ActionVec(current.clone()));
            }
            return;
        }
        for n in 0..=limits[k] {
            current[k] = n;
            // Prune: adding more of slice k only uses more resource.
            let partial: Vec<usize> = (0..limits.len())
                .map(|j| state.n_svc[j] + if j <= k { current[j] } else { 0 })
                .collect();
            if !self.fits(&partial) {
                break;
            }
            self.extend_valid(state, limits, k + 1, current, out);
        }
        current[k] = 0;
    }

    /// Every action of `A` in index order.
    pub fn action_space(&self) -> Vec<ActionVec> {
        (0..self.action_count())
            .map(|i| ActionVec::from_index(i, self.num_slices(), self.n_max))
            .collect()
    }

    /// Total event rate after applying `action` (admissions count only when valid).
    pub fn total_rate(&self, state: &NetState, action: &ActionVec) -> f64 {
        let valid = self.is_valid(state, action);
        self.slices
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let running = state.n_svc[k] + if valid { action.0[k] } else { 0 };
                s.arrival_rate + running as f64 * s.service_rate()
            })
            .sum()
    }

    /// Expected sojourn until the next trigger event.
    pub fn tau_expected(&self, state: &NetState, action: &ActionVec) -> f64 {
        1.0 / self.total_rate(state, action)
    }

    /// Time-normalized reward: admitted revenue rate for a valid action,
    /// `-penalty` otherwise.
    pub fn reward_bar(&self, state: &NetState, action: &ActionVec) -> f64 {
        if self.is_valid(state, action) {
            self.slices
                .iter()
                .zip(&action.0)
                .map(|(s, &n)| n as f64 * s.unit_revenue(&self.charge))
                .sum()
        } else {
            -self.penalty
        }
    }

    /// Maps the state to network inputs: queue counts / 10 and running counts
    /// over each slice's capacity bound.
    pub fn encode_state(&self, state: &NetState) -> Vec<f64> {
        let scale = self.service_scale();
        state
            .n_req
            .iter()
            .map(|&q| q as f64 / 10.0)
            .chain(state.n_svc.iter().zip(&scale).map(|(&n, &c)| n as f64 / c))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(req: &[usize], svc: &[usize]) -> NetState {
        NetState {
            n_req: req.to_vec(),
            n_svc: svc.to_vec(),
        }
    }

    #[test]
    fn tau_of_empty_state_is_inverse_total_arrival_rate() {
        let cfg = EnvConfig::reference();
        let tau = cfg.tau_expected(&NetState::empty(4), &ActionVec::zeros(4));
        assert!((tau - 1.0 / 13.6).abs() < 1e-15);
        assert!((tau - 0.07353).abs() < 1e-5);
    }

    #[test]
    fn tau_ignores_admissions_of_invalid_action() {
        let cfg = EnvConfig::reference();
        let s = st(&[0, 0, 0, 0], &[1, 0, 0, 0]);
        let invalid = ActionVec(vec![1, 0, 0, 0]);
        assert!(!cfg.is_valid(&s, &invalid));
        let tau = cfg.tau_expected(&s, &invalid);
        assert!((tau - 1.0 / (13.6 + 0.3125)).abs() < 1e-15);
        assert!((tau - 0.071878).abs() < 1e-6);
    }

    #[test]
    fn tau_counts_admitted_services_of_valid_action() {
        let cfg = EnvConfig::reference();
        let s = st(&[1, 0, 0, 0], &[0, 0, 0, 0]);
        let a = ActionVec(vec![1, 0, 0, 0]);
        assert!((cfg.tau_expected(&s, &a) - 1.0 / (13.6 + 0.3125)).abs() < 1e-15);
    }

    #[test]
    fn empty_queues_allow_only_the_zero_action() {
        let cfg = EnvConfig::reference();
        let s = st(&[0, 0, 0, 0], &[3, 1, 4, 1]);
        assert_eq!(cfg.valid_actions(&s), vec![ActionVec::zeros(4)]);
    }

    #[test]
    fn exact_fit_on_radio_is_valid() {
        let cfg = EnvConfig::reference();
        // 3 mMTC + 20 eMBB + 5 other hold exactly 0.98 of the radio.
        let s = st(&[1, 0, 0, 0], &[3, 20, 0, 5]);
        let used = cfg.used_resource(&s.n_svc);
        assert!((used[0] - 0.98).abs() < 1e-12);
        let valid = cfg.valid_actions(&s);
        assert_eq!(valid, vec![ActionVec(vec![0, 0, 0, 0]), ActionVec(vec![1, 0, 0, 0])]);
    }

    #[test]
    fn valid_action_count_matches_exhaustive_filter() {
        let cfg = EnvConfig::reference();
        let s = st(&[2, 2, 2, 2], &[0, 0, 0, 0]);
        let brute = (0..256)
            .map(|i| ActionVec::from_index(i, 4, 3))
            .filter(|a| {
                a.0.iter().zip(&s.n_req).all(|(x, q)| x <= q)
                    && (0..3).all(|x| {
                        let total: f64 = (0..4).map(|k| cfg.slices[k].resource[x] * a.0[k] as f64).sum();
                        total <= 1.0 + 1e-12
                    })
            })
            .count();
        // Ample resource: every component independently in 0..=2.
        assert_eq!(brute, 81);
        assert_eq!(cfg.valid_actions(&s).len(), brute);
    }

    #[test]
    fn reward_bar_values() {
        let cfg = EnvConfig::reference();
        let s = st(&[0, 0, 2, 0], &[0, 0, 0, 0]);
        assert_eq!(cfg.reward_bar(&s, &ActionVec::zeros(4)), 0.0);
        let r = cfg.reward_bar(&s, &ActionVec(vec![0, 0, 2, 0]));
        assert!((r - 3.2).abs() < 1e-12);
        assert_eq!(cfg.reward_bar(&s, &ActionVec(vec![0, 0, 3, 0])), -2.0);
    }

    #[test]
    fn action_index_round_trip() {
        for i in 0..256 {
            assert_eq!(ActionVec::from_index(i, 4, 3).to_index(3), i);
        }
        assert_eq!(ActionVec(vec![0, 0, 0, 1]).to_index(3), 1);
        assert_eq!(ActionVec(vec![1, 0, 0, 0]).to_index(3), 64);
    }

    #[test]
    fn encoding_has_unit_scale() {
        let cfg = EnvConfig::reference();
        let enc = cfg.encode_state(&st(&[10, 0, 0, 0], &[25, 0, 0, 41]));
        assert_eq!(enc, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }
}
