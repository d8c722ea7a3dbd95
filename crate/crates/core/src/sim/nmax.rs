//! Empirical estimate of the per-slice admission limit `n_max`.
//!
//! For each slice `i` the remaining resource is recorded whenever its queue
//! starts to build up. One completion of slice `j` then frees `r_j`, so at
//! most `min_X floor((rem^X + r_j^X) / r_i^X)` requests of `i` can be
//! admitted together. `n_max` is the largest such count over `i` and `j`,
//! capped by the number of slice-`i` services an idle network can hold.

use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, ResourceVec, RESOURCES};
use super::env::Env;
use crate::error::{Error, Result};
use crate::policy::Policy;

const FLOOR_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmaxEstimate {
    pub n_max: usize,
    /// Per slice, the remaining-resource vector at queue onset that gives the
    /// largest bound; `None` when the slice never queued.
    pub remaining: Vec<Option<ResourceVec>>,
    /// Number of queue-onset epochs observed per slice.
    pub onsets: Vec<usize>,
    /// Set when no slice ever queued; `n_max` is then only a lower bound.
    pub lower_bound: bool,
}

fn bound_for(i: usize, rem: &ResourceVec, resources: &[ResourceVec]) -> usize {
    resources
        .iter()
        .map(|r_j| {
            (0..RESOURCES)
                .map(|x| (((rem[x] + r_j[x]) / resources[i][x]) + FLOOR_EPS).floor().max(0.0) as usize)
                .min()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}

/// Evaluates the max–min–floor bound over all recorded slices `i`, all
/// slices `j` and all resource types. Returns `None` if nothing was recorded.
pub fn n_max_from_remaining(remaining: &[Option<ResourceVec>], resources: &[ResourceVec]) -> Option<usize> {
    remaining
        .iter()
        .enumerate()
        .filter_map(|(i, rem)| rem.as_ref().map(|rem| bound_for(i, rem, resources)))
        .max()
}

/// Runs `policy` for `horizon` epochs and estimates `n_max`.
///
/// The policy sees a copy of `config` whose `n_max` is raised to the largest
/// capacity bound so the estimate is not limited by the configured value.
pub fn estimate_n_max<P: Policy + ?Sized>(
    policy: &mut P,
    config: &EnvConfig,
    horizon: usize,
    seed: u64,
) -> Result<NmaxEstimate> {
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    let resources: Vec<ResourceVec> = config.slices.iter().map(|s| s.resource).collect();
    let caps: Vec<usize> = config.slices.iter().map(|s| s.capacity_bound()).collect();
    let mut open = config.clone();
    open.n_max = caps.iter().copied().max().unwrap_or(1).max(1);
    let mut env = Env::new(open, seed)?;

    let k = config.num_slices();
    let mut remaining: Vec<Option<ResourceVec>> = vec![None; k];
    let mut best = vec![0usize; k];
    let mut onsets = vec![0usize; k];
    let mut prev_queue = vec![0usize; k];
    for _ in 0..horizon {
        let (_, out) = env.step_with(policy)?;
        // Queue and services right after the decision, before the trigger.
        let running: Vec<usize> = out.state.n_svc.iter().zip(&out.admitted).map(|(s, a)| s + a).collect();
        let rem = config.remaining_resource(&running);
        for i in 0..k {
            let queued = out.state.n_req[i] - out.admitted[i];
            if prev_queue[i] == 0 && queued > 0 {
                onsets[i] += 1;
                let b = bound_for(i, &rem, &resources).min(caps[i]);
                if remaining[i].is_none() || b > best[i] {
                    best[i] = b;
                    remaining[i] = Some(rem);
                }
            }
            prev_queue[i] = queued;
        }
    }

    let observed = best
        .iter()
        .zip(&remaining)
        .filter(|(_, r)| r.is_some())
        .map(|(&b, _)| b)
        .max();
    Ok(NmaxEstimate {
        n_max: observed.unwrap_or(1).max(1),
        remaining,
        onsets,
        lower_bound: observed.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent evaluation: loop order X outermost, collecting all values.
    fn brute(remaining: &[Option<ResourceVec>], resources: &[ResourceVec]) -> Option<usize> {
        let mut values = Vec::new();
        for (i, rem) in remaining.iter().enumerate() {
            let Some(rem) = rem else { continue };
            for r_j in resources {
                let mut per_x = Vec::new();
                for x in 0..3 {
                    per_x.push(((rem[x] + r_j[x]) / resources[i][x] + 1e-9).floor() as usize);
                }
                values.push(*per_x.iter().min().unwrap());
            }
        }
        values.into_iter().max()
    }

    #[test]
    fn eq_matches_brute_force_on_fixed_table() {
        let cfg = EnvConfig::reference();
        let resources: Vec<_> = cfg.slices.iter().map(|s| s.resource).collect();
        let table = vec![
            Some([0.015, 0.2, 0.3]),
            None,
            Some([0.012, 0.03, 0.5]),
            Some([0.02, 0.02, 0.02]),
        ];
        assert_eq!(n_max_from_remaining(&table, &resources), brute(&table, &resources));
        // URLLC queued with 0.012 radio left; an eMBB completion frees 0.04:
        // radio allows floor(0.052 / 0.016) = 3 but compute only floor(0.05 / 0.04) = 1.
        assert_eq!(bound_for(2, &[0.012, 0.03, 0.5], &resources), 1);
        // With compute slack the radio bound of 3 is reached.
        assert_eq!(bound_for(2, &[0.012, 0.2, 0.5], &resources), 3);
    }

    #[test]
    fn empty_table_has_no_bound() {
        let resources = vec![[0.5; 3]];
        assert_eq!(n_max_from_remaining(&[None], &resources), None);
    }

    #[test]
    fn single_half_size_slice_is_capped_at_two() {
        let cfg = EnvConfig {
            slices: vec![crate::sim::SliceParams {
                name: None,
                arrival_rate: 2.0,
                mean_service_time: 1.0,
                hold_time: 0.5,
                resource: [0.5, 0.5, 0.5],
            }],
            n_max: 1,
            charge: [1.0, 1.0, 1.0],
            penalty: 1.0,
            queue_cap: None,
        };
        let mut reject = crate::policy::reject_all();
        let est = estimate_n_max(&mut reject, &cfg, 5_000, 1).unwrap();
        assert!(est.n_max <= 2);
        assert!(!est.lower_bound);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let mut reject = crate::policy::reject_all();
        assert!(estimate_n_max(&mut reject, &EnvConfig::reference(), 0, 1).is_err());
    }
}
