//! Sliced-network model and its discrete-event simulator.

mod config;
mod env;
mod model;
mod nmax;

pub use config::{EnvConfig, ResourceVec, SliceParams, RESOURCES, RESOURCE_EPS};
pub use env::{write_trace_csv, Counters, Env, StepOutcome, TraceEvent, TraceKind, Trigger};
pub use model::{ActionVec, NetState};
pub use nmax::{estimate_n_max, n_max_from_remaining, NmaxEstimate};
