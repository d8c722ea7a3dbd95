//! Experiment runs, windowed metrics, cross-seed aggregation and
//! evaluation of frozen policies.

mod aggregate;
mod compare;
mod eval;
mod experiment;
mod metrics;

pub use aggregate::{aggregate, coarsen, quantile, write_aggregate, AggregateRow, Band, BAND};
pub use compare::{compare_early_utilization, early_utilization, UtilComparison, EARLY_HORIZON};
pub use eval::{cumulative_reward, eval_cumulative_reward, load_policy, policy_from_spec, EvalOptions, EvalReport, EVAL_EPOCHS};
pub use experiment::{
    load_replica, read_runs, run_experiment, train_replica, ExperimentConfig, Method, RunSummary, SeedRun,
};
pub use metrics::{acceptance_ratio, metrics_header, metrics_rows, read_metrics, write_metrics, MetricsRow};
