//! Finite SMDP with truncated queues, its equilibrium analysis and the
//! transformation to an equivalent discrete-time MDP.
//!
//! The analytic model has no abandonment: queues only shrink through
//! admissions, and arrivals to a full queue are lost.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::solve_dense;
use super::space::{enumerate_states, StateSpace, DEFAULT_STATE_LIMIT};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::sim::{ActionVec, EnvConfig, NetState};

/// Above this many states the equilibrium falls back to power iteration.
pub const DENSE_LIMIT: usize = 3_000;

const MAX_ROWS: usize = 20_000_000;

/// Sparse transition row: `(successor index, probability)`, sorted by index.
pub type Row<F> = Vec<(usize, F)>;

#[derive(Clone, Debug)]
pub struct FiniteSmdp<F> {
    config: EnvConfig,
    space: StateSpace,
    actions: Vec<ActionVec>,
    tau: Vec<F>,
    reward: Vec<F>,
    rows: Vec<Row<F>>,
}

/// Deterministic stationary policy: one action index per state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable(pub Vec<usize>);

#[derive(Clone, Debug)]
pub struct EquilibriumResult<F> {
    /// Equilibrium probabilities over all states; zero off the recurrent class.
    pub omega: Vec<F>,
    /// Long-run average reward per unit time.
    pub g: F,
    pub recurrent: Vec<usize>,
    /// `max_s |omega(s) - (omega P)(s)|`.
    pub residual: F,
}

#[derive(Clone, Debug)]
pub struct FiniteMdp<F> {
    space: StateSpace,
    actions: Vec<ActionVec>,
    reward_bar: Vec<F>,
    rows: Vec<Row<F>>,
    tau0: F,
}

#[derive(Clone, Debug)]
pub struct MdpEquilibrium<F> {
    pub omega_bar: Vec<F>,
    pub g_bar: F,
    pub residual: F,
}

/// Choice of the uniformization constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tau0 {
    /// `0.9 * min tau(s, a)`.
    Auto,
    /// A fraction of `min tau(s, a)`, in `(0, 1]`.
    FractionOfMin(f64),
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalEstimate {
    /// Total reward over total elapsed time.
    pub g_hat: f64,
    pub cycles: usize,
    pub mean_cycle_reward: f64,
    pub mean_cycle_length: f64,
    pub mean_cycle_epochs: f64,
    pub events: usize,
    pub total_time: f64,
    /// False when no cycle completed.
    pub reliable: bool,
}

fn merge_row<F: Scalar>(mut row: Vec<(usize, F)>) -> Row<F> {
    row.sort_by_key(|&(j, _)| j);
    let mut out: Row<F> = Vec::with_capacity(row.len());
    for (j, p) in row {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += p,
            _ => out.push((j, p)),
        }
    }
    out
}

/// Successor distribution of `(state, action)` in the analytic model.
///
/// Returns the expected sojourn, the rate reward and the successor states
/// with their probabilities (not merged). Arrivals to a queue at `queue_cap`
/// are lost.
pub fn successors(
    config: &EnvConfig,
    queue_cap: usize,
    state: &NetState,
    action: &ActionVec,
) -> (f64, f64, Vec<(NetState, f64)>) {
    let valid = config.is_valid(state, action);
    let (queue, running): (Vec<usize>, Vec<usize>) = if valid {
        (
            state.n_req.iter().zip(&action.0).map(|(q, a)| q - a).collect(),
            state.n_svc.iter().zip(&action.0).map(|(s, a)| s + a).collect(),
        )
    } else {
        (state.n_req.clone(), state.n_svc.clone())
    };
    let rate: f64 = config
        .slices
        .iter()
        .zip(&running)
        .map(|(s, &m)| s.arrival_rate + m as f64 * s.service_rate())
        .sum();
    let base = NetState {
        n_req: queue,
        n_svc: running,
    };
    let mut out = Vec::with_capacity(2 * config.num_slices());
    for (k, slice) in config.slices.iter().enumerate() {
        let mut next = base.clone();
        next.n_req[k] = (next.n_req[k] + 1).min(queue_cap);
        out.push((next, slice.arrival_rate / rate));
        if base.n_svc[k] > 0 {
            let mut next = base.clone();
            next.n_svc[k] -= 1;
            out.push((next, base.n_svc[k] as f64 * slice.service_rate() / rate));
        }
    }
    (1.0 / rate, config.reward_bar(state, action), out)
}

fn transition<F: Scalar>(
    config: &EnvConfig,
    space: &StateSpace,
    state: &NetState,
    action: &ActionVec,
) -> (F, F, Row<F>) {
    let (tau, rate_reward, next) = successors(config, space.queue_cap(), state, action);
    let row = next
        .into_iter()
        .map(|(s, p)| (space.index_of(&s).expect("successor is enumerated"), F::of(p)))
        .collect();
    // Expected reward over the sojourn.
    (F::of(tau), F::of(rate_reward * tau), merge_row(row))
}

/// Builds the finite SMDP for `config` with queues capped at `queue_cap`.
pub fn build_kernel<F: Scalar>(config: &EnvConfig, queue_cap: usize) -> Result<FiniteSmdp<F>> {
    let space = enumerate_states(config, queue_cap, DEFAULT_STATE_LIMIT)?;
    let actions = config.action_space();
    let n_rows = space
        .len()
        .checked_mul(actions.len())
        .filter(|&n| n <= MAX_ROWS)
        .ok_or_else(|| Error::Capacity(format!("{} states x {} actions", space.len(), actions.len())))?;
    let per_state: Vec<Vec<(F, F, Row<F>)>> = (0..space.len())
        .into_par_iter()
        .map(|i| {
            let s = space.get(i);
            actions.iter().map(|a| transition(config, &space, &s, a)).collect()
        })
        .collect();
    let mut tau = Vec::with_capacity(n_rows);
    let mut reward = Vec::with_capacity(n_rows);
    let mut rows = Vec::with_capacity(n_rows);
    for (t, r, row) in per_state.into_iter().flatten() {
        tau.push(t);
        reward.push(r);
        rows.push(row);
    }
    Ok(FiniteSmdp {
        config: config.clone(),
        space,
        actions,
        tau,
        reward,
        rows,
    })
}

impl<F: Scalar> FiniteSmdp<F> {
    /// Assembles a model from explicit tables, indexed `[s * |A| + a]`.
    #[cfg(test)]
    pub(crate) fn from_parts(
        config: EnvConfig,
        space: StateSpace,
        actions: Vec<ActionVec>,
        tau: Vec<F>,
        reward: Vec<F>,
        rows: Vec<Row<F>>,
    ) -> Self {
        FiniteSmdp {
            config,
            space,
            actions,
            tau,
            reward,
            rows,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    pub fn actions(&self) -> &[ActionVec] {
        &self.actions
    }

    fn at(&self, s: usize, a: usize) -> usize {
        s * self.actions.len() + a
    }

    pub fn tau(&self, s: usize, a: usize) -> F {
        self.tau[self.at(s, a)]
    }

    pub fn reward(&self, s: usize, a: usize) -> F {
        self.reward[self.at(s, a)]
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, F)] {
        &self.rows[self.at(s, a)]
    }

    pub fn min_tau(&self) -> F {
        self.tau.iter().copied().fold(F::infinity(), F::min)
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_error(&self) -> F {
        max_row_error(&self.rows)
    }

    /// Index of the all-zero state.
    pub fn empty_state(&self) -> usize {
        0
    }

    fn policy_rows(&self, policy: &PolicyTable) -> Vec<&[(usize, F)]> {
        policy.0.iter().enumerate().map(|(s, &a)| self.row(s, a)).collect()
    }
}

fn max_row_error<F: Scalar>(rows: &[Row<F>]) -> F {
    rows.iter()
        .map(|r| (r.iter().map(|&(_, p)| p).sum::<F>() - F::one()).abs())
        .fold(F::zero(), F::max)
}

impl PolicyTable {
    pub fn from_fn<F: Scalar>(smdp: &FiniteSmdp<F>, mut f: impl FnMut(&NetState) -> ActionVec) -> Self {
        let n_max = smdp.config.n_max;
        PolicyTable(smdp.space.iter().map(|s| f(&s).to_index(n_max)).collect())
    }

    /// Random policy that admits something whenever any admission is valid.
    ///
    /// Where admission is possible it picks uniformly among nonzero valid
    /// actions; elsewhere it picks uniformly from the whole action space, so
    /// penalized actions appear but never block the queue. Such policies
    /// empty the system with positive probability from every state, which
    /// makes the chain unichain.
    pub fn random_work_conserving<F: Scalar, R: Rng>(smdp: &FiniteSmdp<F>, rng: &mut R) -> Self {
        let cfg = &smdp.config;
        let n_max = cfg.n_max;
        PolicyTable(
            smdp.space
                .iter()
                .map(|s| {
                    let nonzero: Vec<ActionVec> =
                        cfg.valid_actions(&s).into_iter().filter(|a| !a.is_zero()).collect();
                    if nonzero.is_empty() {
                        rng.random_range(0..smdp.actions.len())
                    } else {
                        nonzero[rng.random_range(0..nonzero.len())].to_index(n_max)
                    }
                })
                .collect(),
        )
    }

    pub fn check<F: Scalar>(&self, smdp: &FiniteSmdp<F>) -> Result<()> {
        if self.0.len() != smdp.num_states() {
            return Err(Error::Usage(format!(
                "policy covers {} states, model has {}",
                self.0.len(),
                smdp.num_states()
            )));
        }
        if let Some(&a) = self.0.iter().find(|&&a| a >= smdp.actions.len()) {
            return Err(Error::Usage(format!("action index {a} out of range")));
        }
        Ok(())
    }
}

/// States reachable from `start`, and the unique closed class among them.
fn recurrent_class<F: Scalar>(rows: &[&[(usize, F)]], start: usize) -> Result<Vec<usize>> {
    let n = rows.len();
    let mut local = vec![usize::MAX; n];
    let mut order = vec![start];
    local[start] = 0;
    let mut head = 0;
    while head < order.len() {
        let s = order[head];
        head += 1;
        for &(j, p) in rows[s] {
            if p > F::zero() && local[j] == usize::MAX {
                local[j] = order.len();
                order.push(j);
            }
        }
    }
    let mut graph = DiGraph::<(), ()>::with_capacity(order.len(), order.len() * 4);
    let nodes: Vec<_> = (0..order.len()).map(|_| graph.add_node(())).collect();
    for (li, &s) in order.iter().enumerate() {
        for &(j, p) in rows[s] {
            if p > F::zero() {
                graph.add_edge(nodes[li], nodes[local[j]], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut comp = vec![0usize; order.len()];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            comp[node.index()] = c;
        }
    }
    let closed: Vec<usize> = (0..sccs.len())
        .filter(|&c| {
            sccs[c].iter().all(|node| {
                rows[order[node.index()]]
                    .iter()
                    .all(|&(j, p)| p <= F::zero() || comp[local[j]] == c)
            })
        })
        .collect();
    if closed.len() != 1 {
        return Err(Error::Structure(format!(
            "{} disjoint closed sets reachable from the initial state",
            closed.len()
        )));
    }
    let mut class: Vec<usize> = sccs[closed[0]].iter().map(|node| order[node.index()]).collect();
    class.sort_unstable();
    Ok(class)
}

/// Stationary distribution of the chain restricted to its recurrent class.
fn stationary<F: Scalar>(rows: &[&[(usize, F)]], start: usize) -> Result<(Vec<F>, Vec<usize>, F)> {
    let class = recurrent_class(rows, start)?;
    let n = class.len();
    let mut pos = vec![usize::MAX; rows.len()];
    for (i, &s) in class.iter().enumerate() {
        pos[s] = i;
    }
    let local = if n <= DENSE_LIMIT {
        // Solve (I - P)^T w = 0 with the last equation replaced by sum(w) = 1.
        let mut a = vec![F::zero(); n * n];
        for (i, &s) in class.iter().enumerate() {
            a[i * n + i] += F::one();
            for &(j, p) in rows[s] {
                a[pos[j] * n + i] -= p;
            }
        }
        for c in 0..n {
            a[(n - 1) * n + c] = F::one();
        }
        let mut b = vec![F::zero(); n];
        b[n - 1] = F::one();
        solve_dense(&mut a, &mut b)?;
        b
    } else {
        power_iteration(rows, &class, &pos)
    };
    let mut omega = vec![F::zero(); rows.len()];
    for (i, &s) in class.iter().enumerate() {
        omega[s] = local[i].max(F::zero());
    }
    let total: F = omega.iter().copied().sum();
    for w in omega.iter_mut() {
        *w /= total;
    }
    let residual = balance_residual(rows, &omega);
    Ok((omega, class, residual))
}

fn power_iteration<F: Scalar>(rows: &[&[(usize, F)]], class: &[usize], pos: &[usize]) -> Vec<F> {
    let n = class.len();
    let half = F::of(0.5);
    let mut w = vec![F::one() / F::of(n as f64); n];
    for _ in 0..1_000_000 {
        // Lazy chain avoids periodicity.
        let mut next: Vec<F> = w.iter().map(|&x| x * half).collect();
        for (i, &s) in class.iter().enumerate() {
            for &(j, p) in rows[s] {
                next[pos[j]] += half * w[i] * p;
            }
        }
        let diff = next.iter().zip(&w).map(|(a, b)| (*a - *b).abs()).fold(F::zero(), F::max);
        w = next;
        if diff < F::epsilon() * F::of(16.0) {
            break;
        }
    }
    w
}

fn balance_residual<F: Scalar>(rows: &[&[(usize, F)]], omega: &[F]) -> F {
    let mut flow = vec![F::zero(); omega.len()];
    for (s, row) in rows.iter().enumerate() {
        if omega[s] == F::zero() {
            continue;
        }
        for &(j, p) in *row {
            flow[j] += omega[s] * p;
        }
    }
    flow.iter().zip(omega).map(|(a, b)| (*a - *b).abs()).fold(F::zero(), F::max)
}

/// Equilibrium of the embedded chain and the long-run average reward
/// `sum r w / sum tau w`.
pub fn equilibrium<F: Scalar>(smdp: &FiniteSmdp<F>, policy: &PolicyTable) -> Result<EquilibriumResult<F>> {
    policy.check(smdp)?;
    let rows = smdp.policy_rows(policy);
    let (omega, recurrent, residual) = stationary(&rows, smdp.empty_state())?;
    let mut num = F::zero();
    let mut den = F::zero();
    for &s in &recurrent {
        let a = policy.0[s];
        num += smdp.reward(s, a) * omega[s];
        den += smdp.tau(s, a) * omega[s];
    }
    Ok(EquilibriumResult {
        omega,
        g: num / den,
        recurrent,
        residual,
    })
}

/// Applies `r_bar = r / tau` and the uniformized kernel.
pub fn transform_to_mdp<F: Scalar>(smdp: &FiniteSmdp<F>, tau0: Tau0) -> Result<FiniteMdp<F>> {
    let min_tau = smdp.min_tau();
    let tau0 = match tau0 {
        Tau0::Auto => min_tau * F::of(0.9),
        Tau0::FractionOfMin(f) => min_tau * F::of(f),
        Tau0::Value(v) => F::of(v),
    };
    let upper = min_tau * (F::one() + F::epsilon() * F::of(8.0));
    if !(tau0 > F::zero() && tau0 <= upper) {
        return Err(Error::Parameter(format!(
            "tau0 = {tau0} must lie in (0, {min_tau}]"
        )));
    }
    let n_actions = smdp.actions.len();
    let clamp = F::of(-1e-14);
    let mut reward_bar = Vec::with_capacity(smdp.rows.len());
    let mut rows = Vec::with_capacity(smdp.rows.len());
    for (idx, row) in smdp.rows.iter().enumerate() {
        let s = idx / n_actions;
        let tau = smdp.tau[idx];
        reward_bar.push(smdp.reward[idx] / tau);
        let scale = tau0 / tau;
        let mut out: Row<F> = row.iter().map(|&(j, p)| (j, scale * p)).collect();
        let stay = F::one() - scale;
        match out.iter_mut().find(|(j, _)| *j == s) {
            Some(entry) => entry.1 += stay,
            None => out.push((s, stay)),
        }
        for entry in out.iter_mut() {
            if entry.1 < F::zero() && entry.1 >= clamp {
                entry.1 = F::zero();
            }
        }
        rows.push(merge_row(out));
    }
    Ok(FiniteMdp {
        space: smdp.space.clone(),
        actions: smdp.actions.clone(),
        reward_bar,
        rows,
        tau0,
    })
}

impl<F: Scalar> FiniteMdp<F> {
    pub fn tau0(&self) -> F {
        self.tau0
    }

    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    pub fn reward_bar(&self, s: usize, a: usize) -> F {
        self.reward_bar[s * self.actions.len() + a]
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, F)] {
        &self.rows[s * self.actions.len() + a]
    }

    pub fn max_row_error(&self) -> F {
        max_row_error(&self.rows)
    }

    pub fn min_entry(&self) -> F {
        self.rows
            .iter()
            .flat_map(|r| r.iter().map(|&(_, p)| p))
            .fold(F::infinity(), F::min)
    }

    fn policy_rows(&self, policy: &PolicyTable) -> Vec<&[(usize, F)]> {
        policy.0.iter().enumerate().map(|(s, &a)| self.row(s, a)).collect()
    }
}

/// Equilibrium of the discrete-time chain and `g_bar = sum r_bar w_bar`.
pub fn equilibrium_mdp<F: Scalar>(mdp: &FiniteMdp<F>, policy: &PolicyTable) -> Result<MdpEquilibrium<F>> {
    if policy.0.len() != mdp.num_states() || policy.0.iter().any(|&a| a >= mdp.actions.len()) {
        return Err(Error::Usage("policy does not match the model".into()));
    }
    let rows = mdp.policy_rows(policy);
    let (omega_bar, recurrent, residual) = stationary(&rows, 0)?;
    let g_bar = recurrent
        .iter()
        .map(|&s| mdp.reward_bar(s, policy.0[s]) * omega_bar[s])
        .sum();
    Ok(MdpEquilibrium {
        omega_bar,
        g_bar,
        residual,
    })
}

pub fn long_run_reward_mdp<F: Scalar>(mdp: &FiniteMdp<F>, policy: &PolicyTable) -> Result<F> {
    Ok(equilibrium_mdp(mdp, policy)?.g_bar)
}

/// Solves `h = c + P h` with `h(0) = 0` over every state.
fn relative_values<F: Scalar>(rows: &[&[(usize, F)]], cost: &[F]) -> Result<Vec<F>> {
    let n = rows.len();
    if n > DENSE_LIMIT {
        return Err(Error::Capacity(format!("{n} states exceed the dense solver limit")));
    }
    let mut a = vec![F::zero(); n * n];
    let mut b = cost.to_vec();
    for (s, row) in rows.iter().enumerate() {
        a[s * n + s] += F::one();
        for &(j, p) in *row {
            a[s * n + j] -= p;
        }
    }
    for c in 0..n {
        a[c] = F::zero();
    }
    a[0] = F::one();
    b[0] = F::zero();
    solve_dense(&mut a, &mut b)?;
    Ok(b)
}

/// Per-state, per-action improvement scores of the SMDP, in rate form:
/// `(r - g tau + sum p h - h(s)) / tau`. The current action scores zero.
pub fn improvement_scores_smdp<F: Scalar>(smdp: &FiniteSmdp<F>, policy: &PolicyTable) -> Result<Vec<Vec<F>>> {
    let eq = equilibrium(smdp, policy)?;
    let rows = smdp.policy_rows(policy);
    let cost: Vec<F> = policy
        .0
        .iter()
        .enumerate()
        .map(|(s, &a)| smdp.reward(s, a) - eq.g * smdp.tau(s, a))
        .collect();
    let h = relative_values(&rows, &cost)?;
    Ok((0..smdp.num_states())
        .map(|s| {
            (0..smdp.actions.len())
                .map(|a| {
                    let next: F = smdp.row(s, a).iter().map(|&(j, p)| p * h[j]).sum();
                    (smdp.reward(s, a) - eq.g * smdp.tau(s, a) + next - h[s]) / smdp.tau(s, a)
                })
                .collect()
        })
        .collect())
}

/// Improvement scores of the transformed MDP: `r_bar - g_bar + sum p_bar h_bar - h_bar(s)`.
pub fn improvement_scores_mdp<F: Scalar>(mdp: &FiniteMdp<F>, policy: &PolicyTable) -> Result<Vec<Vec<F>>> {
    let eq = equilibrium_mdp(mdp, policy)?;
    let rows = mdp.policy_rows(policy);
    let cost: Vec<F> = policy
        .0
        .iter()
        .enumerate()
        .map(|(s, &a)| mdp.reward_bar(s, a) - eq.g_bar)
        .collect();
    let h = relative_values(&rows, &cost)?;
    Ok((0..mdp.num_states())
        .map(|s| {
            (0..mdp.actions.len())
                .map(|a| {
                    let next: F = mdp.row(s, a).iter().map(|&(j, p)| p * h[j]).sum();
                    mdp.reward_bar(s, a) - eq.g_bar + next - h[s]
                })
                .collect()
        })
        .collect())
}

/// Greedy one-step improvement from a score table; ties go to the lowest index.
pub fn improve<F: Scalar>(scores: &[Vec<F>]) -> PolicyTable {
    PolicyTable(scores.iter().map(|row| crate::num::argmax(row)).collect())
}

/// Whether the improved policy of one representation is also greedy under
/// the other, up to `tol` relative to the score scale.
pub fn improvements_agree<F: Scalar>(smdp_scores: &[Vec<F>], mdp_scores: &[Vec<F>], tol: F) -> bool {
    smdp_scores.iter().zip(mdp_scores).all(|(a_row, b_row)| {
        let pick_a = crate::num::argmax(a_row);
        let pick_b = crate::num::argmax(b_row);
        let max_a = a_row[pick_a];
        let max_b = b_row[pick_b];
        let scale_a = F::one() + max_a.abs();
        let scale_b = F::one() + max_b.abs();
        b_row[pick_a] >= max_b - tol * scale_b && a_row[pick_b] >= max_a - tol * scale_a
    })
}

/// Monte Carlo run of the embedded chain with exponential sojourns, split
/// into renewal cycles at returns to the empty state.
pub fn simulate_renewal_estimate<F: Scalar>(
    smdp: &FiniteSmdp<F>,
    policy: &PolicyTable,
    n_events: usize,
    seed: u64,
) -> Result<RenewalEstimate> {
    if n_events < 1_000 {
        return Err(Error::Parameter("at least 1000 events are required".into()));
    }
    policy.check(smdp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = smdp.empty_state();
    let mut s = start;
    let (mut total_reward, mut total_time) = (0.0f64, 0.0f64);
    let (mut cycle_reward, mut cycle_time, mut cycle_epochs) = (0.0f64, 0.0f64, 0usize);
    let (mut sum_r, mut sum_t, mut sum_n, mut cycles) = (0.0f64, 0.0f64, 0usize, 0usize);
    for _ in 0..n_events {
        let a = policy.0[s];
        let tau = smdp.tau(s, a).as_f64();
        let rate_reward = smdp.reward(s, a).as_f64() / tau;
        let sojourn = Exp::new(1.0 / tau)
            .map_err(|e| Error::Parameter(e.to_string()))?
            .sample(&mut rng);
        let earned = rate_reward * sojourn;
        total_reward += earned;
        total_time += sojourn;
        cycle_reward += earned;
        cycle_time += sojourn;
        cycle_epochs += 1;

        let u: f64 = rng.random();
        let row = smdp.row(s, a);
        let mut acc = 0.0;
        let mut next = row.last().expect("rows are nonempty").0;
        for &(j, p) in row {
            acc += p.as_f64();
            if u < acc {
                next = j;
                break;
            }
        }
        s = next;
        if s == start {
            cycles += 1;
            sum_r += cycle_reward;
            sum_t += cycle_time;
            sum_n += cycle_epochs;
            cycle_reward = 0.0;
            cycle_time = 0.0;
            cycle_epochs = 0;
        }
    }
    let per = |x: f64| if cycles > 0 { x / cycles as f64 } else { f64::NAN };
    Ok(RenewalEstimate {
        g_hat: total_reward / total_time,
        cycles,
        mean_cycle_reward: per(sum_r),
        mean_cycle_length: per(sum_t),
        mean_cycle_epochs: per(sum_n as f64),
        events: n_events,
        total_time,
        reliable: cycles > 0,
    })
}
