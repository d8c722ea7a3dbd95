use crate::sim::{ActionVec, EnvConfig, NetState, StepOutcome};

/// What a policy sees at a decision epoch.
///
/// `queue_order` lists the slice of every queued request in global arrival
/// order; only order-aware policies (FCFS) use it.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub state: &'a NetState,
    pub config: &'a EnvConfig,
    pub queue_order: &'a [usize],
}

/// An admission policy driven by the simulator.
pub trait Policy {
    fn name(&self) -> &str;

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec;

    /// Called with the outcome of the step that executed the last action.
    fn observe(&mut self, _outcome: &StepOutcome) {}
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        (**self).act(obs)
    }

    fn observe(&mut self, outcome: &StepOutcome) {
        (**self).observe(outcome)
    }
}

/// Adapts a closure over `(state, config)` into a [`Policy`].
pub struct FnPolicy<F> {
    name: String,
    f: F,
}

impl<F> FnPolicy<F>
where
    F: FnMut(&NetState, &EnvConfig) -> ActionVec,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnPolicy { name: name.into(), f }
    }
}

impl<F> Policy for FnPolicy<F>
where
    F: FnMut(&NetState, &EnvConfig) -> ActionVec,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        (self.f)(obs.state, obs.config)
    }
}

/// Rejects everything.
pub fn reject_all() -> FnPolicy<impl FnMut(&NetState, &EnvConfig) -> ActionVec> {
    FnPolicy::new("reject", |s: &NetState, _: &EnvConfig| ActionVec::zeros(s.num_slices()))
}
