use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::smdp::{
    build_kernel, equilibrium, equilibrium_mdp, improvement_scores_mdp, improvement_scores_smdp,
    improvements_agree, simulate_renewal_estimate, transform_to_mdp, FiniteSmdp, PolicyTable,
    RenewalEstimate, Tau0,
};
use crate::error::Result;
use crate::sim::{EnvConfig, SliceParams};

/// Fractions of `min tau` at which the transformed MDP is checked.
pub const TAU0_FRACTIONS: [f64; 3] = [0.3, 0.6, 0.9];

/// Two slices, queues capped at two, at most two services of each type.
/// Small enough for dense solves, loaded enough that capacity binds.
pub fn small_instance() -> EnvConfig {
    EnvConfig {
        slices: vec![
            SliceParams {
                name: Some("a".into()),
                arrival_rate: 1.0,
                mean_service_time: 1.0,
                hold_time: 0.5,
                resource: [0.4, 0.3, 0.2],
            },
            SliceParams {
                name: Some("b".into()),
                arrival_rate: 0.8,
                mean_service_time: 1.5,
                hold_time: 0.5,
                resource: [0.3, 0.5, 0.25],
            },
        ],
        n_max: 2,
        charge: [1.0, 2.0, 3.0],
        penalty: 1.0,
        queue_cap: Some(2),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tau0Check {
    pub fraction: f64,
    pub tau0: f64,
    pub g_bar: f64,
    pub abs_err: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyReport {
    pub label: String,
    pub g: f64,
    pub residual: f64,
    pub recurrent_states: usize,
    pub transformed: Vec<Tau0Check>,
    /// `max_s |w_bar(s) - w(s) tau(s) / sum w tau|`.
    pub omega_relation_err: f64,
    pub improvement_agrees: bool,
    pub renewal: Option<RenewalEstimate>,
    pub renewal_rel_err: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub config_hash: String,
    pub queue_cap: usize,
    pub states: usize,
    pub actions: usize,
    pub min_tau: f64,
    pub kernel_row_error: f64,
    pub transformed_row_error: f64,
    pub policies: Vec<PolicyReport>,
}

impl OracleReport {
    pub fn max_transform_error(&self) -> f64 {
        self.policies
            .iter()
            .flat_map(|p| p.transformed.iter().map(|t| t.abs_err))
            .fold(0.0, f64::max)
    }
}

/// Checks one policy: equilibrium, the transformed MDP at each tau0 fraction,
/// improvement agreement and optionally a renewal simulation.
pub fn check_policy(
    smdp: &FiniteSmdp<f64>,
    policy: &PolicyTable,
    label: &str,
    renewal_events: Option<(usize, u64)>,
) -> Result<PolicyReport> {
    let eq = equilibrium(smdp, policy)?;
    let mut transformed = Vec::new();
    let mut omega_relation_err = 0.0f64;
    for &fraction in &TAU0_FRACTIONS {
        let mdp = transform_to_mdp(smdp, Tau0::FractionOfMin(fraction))?;
        let eqm = equilibrium_mdp(&mdp, policy)?;
        transformed.push(Tau0Check {
            fraction,
            tau0: mdp.tau0(),
            g_bar: eqm.g_bar,
            abs_err: (eqm.g_bar - eq.g).abs(),
            residual: eqm.residual,
        });
        let weights: Vec<f64> = (0..smdp.num_states())
            .map(|s| eq.omega[s] * smdp.tau(s, policy.0[s]))
            .collect();
        let total: f64 = weights.iter().sum();
        for (w, wb) in weights.iter().zip(&eqm.omega_bar) {
            omega_relation_err = omega_relation_err.max((w / total - wb).abs());
        }
    }
    let mdp = transform_to_mdp(smdp, Tau0::Auto)?;
    let smdp_scores = improvement_scores_smdp(smdp, policy)?;
    let mdp_scores = improvement_scores_mdp(&mdp, policy)?;
    let improvement_agrees = improvements_agree(&smdp_scores, &mdp_scores, 1e-9);
    let renewal = match renewal_events {
        Some((n, seed)) => Some(simulate_renewal_estimate(smdp, policy, n, seed)?),
        None => None,
    };
    let renewal_rel_err = renewal.as_ref().map(|r| (r.g_hat - eq.g).abs() / eq.g.abs());
    Ok(PolicyReport {
        label: label.to_string(),
        g: eq.g,
        residual: eq.residual,
        recurrent_states: eq.recurrent.len(),
        transformed,
        omega_relation_err,
        improvement_agrees,
        renewal,
        renewal_rel_err,
    })
}

/// Full verification run: `n_policies` random work-conserving policies,
/// each checked analytically and, if `renewal_events > 0`, by simulation.
pub fn verify(
    config: &EnvConfig,
    queue_cap: usize,
    n_policies: usize,
    seed: u64,
    renewal_events: usize,
) -> Result<OracleReport> {
    let smdp = build_kernel::<f64>(config, queue_cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policies = Vec::with_capacity(n_policies);
    let mut transformed_row_error = 0.0f64;
    for &fraction in &TAU0_FRACTIONS {
        let mdp = transform_to_mdp(&smdp, Tau0::FractionOfMin(fraction))?;
        transformed_row_error = transformed_row_error.max(mdp.max_row_error());
    }
    for i in 0..n_policies {
        let policy = PolicyTable::random_work_conserving(&smdp, &mut rng);
        let renewal = (renewal_events > 0).then(|| (renewal_events, seed.wrapping_add(1 + i as u64)));
        policies.push(check_policy(&smdp, &policy, &format!("random-{i}"), renewal)?);
    }
    Ok(OracleReport {
        config_hash: config.hash(),
        queue_cap,
        states: smdp.num_states(),
        actions: smdp.actions().len(),
        min_tau: smdp.min_tau(),
        kernel_row_error: smdp.max_row_error(),
        transformed_row_error,
        policies,
    })
}
