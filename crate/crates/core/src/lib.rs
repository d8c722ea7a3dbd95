//! Admission control for a sliced network.
//!
//! * [`sim`]: the network model and an exact discrete-event simulator.
//! * [`oracle`]: finite SMDP construction, equilibrium and long-run reward,
//!   and the transformation to an equivalent discrete-time MDP.
//! * [`baselines`]: greedy, ILP, priority, FCFS and random admission policies.
//! * [`neural`]: a small dense network stack with hand-written backprop.
//! * [`dt`]: supervised replicas ("digital twins") of a running policy.
//! * [`agents`]: actor-critic with twin warm start, and a dueling DQN.
//! * [`harness`]: experiment runs, metrics and aggregation.
//!
//! Numeric kernels are generic over [`num::Scalar`]; the aliases below fix
//! the scalar to `f64`, which is what training and verification use.

pub mod agents;
pub mod baselines;
pub mod dt;
pub mod error;
pub mod harness;
pub mod neural;
pub mod num;
pub mod oracle;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
pub use num::Scalar;
pub use policy::{Observation, Policy};
pub use sim::{ActionVec, Env, EnvConfig, NetState, SliceParams, StepOutcome};

pub type Mlp = neural::Mlp<f64>;
pub type Mlp32 = neural::Mlp<f32>;
pub type PolicyNet = neural::PolicyNet<f64>;
pub type ValueNet = neural::ValueNet<f64>;
pub type DuelingNet = neural::DuelingNet<f64>;
pub type Adam = neural::Adam<f64>;
pub type FiniteSmdp = oracle::FiniteSmdp<f64>;
pub type FiniteMdp = oracle::FiniteMdp<f64>;
