//! Dense networks with hand-written reverse-mode gradients.

mod adam;
mod checkpoint;
mod gradcheck;
mod head;
mod mlp;
mod nets;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use head::{FactorizedHead, FlatHead};
pub use mlp::{Cache, Mlp};
pub use nets::{DuelingNet, PolicyNet, ValueNet, DEFAULT_HIDDEN};
