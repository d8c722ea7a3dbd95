//! Analytic model of the admission SMDP on a truncated state space.

mod linalg;
mod report;
mod smdp;
mod space;

pub use linalg::solve_dense;
pub use report::{check_policy, small_instance, verify, OracleReport, PolicyReport, Tau0Check, TAU0_FRACTIONS};
pub use smdp::{
    build_kernel, equilibrium, equilibrium_mdp, improve, successors, improvement_scores_mdp, improvement_scores_smdp,
    improvements_agree, long_run_reward_mdp, simulate_renewal_estimate, transform_to_mdp, EquilibriumResult,
    FiniteMdp, FiniteSmdp, MdpEquilibrium, PolicyTable, RenewalEstimate, Row, Tau0, DENSE_LIMIT,
};
pub use space::{enumerate_states, StateSpace, DEFAULT_STATE_LIMIT};
