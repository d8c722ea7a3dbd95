//! Discrete-event simulation of the sliced network.
//!
//! Arrivals are Poisson per slice, services exponential, and queued requests
//! abandon at exactly `enqueue time + hold time`. Only arrivals and
//! completions open a decision epoch; abandonments are applied on the way to
//! the next trigger.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, RESOURCE_EPS};
use super::model::{ActionVec, NetState};
use crate::error::{Error, Result};
use crate::policy::{Observation, Policy};

/// Event that ended a sojourn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    Arrival(usize),
    Completion(usize),
}

impl Trigger {
    pub fn slice(&self) -> usize {
        match *self {
            Trigger::Arrival(k) | Trigger::Completion(k) => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// State observed at the decision epoch the action was taken in.
    pub state: NetState,
    pub next_state: NetState,
    /// Realized time between the two decision epochs.
    pub sojourn: f64,
    pub reward: f64,
    pub valid: bool,
    pub trigger: Trigger,
    /// Requests started by the action, per slice.
    pub admitted: Vec<usize>,
    /// Requests that left their queue during the interval, per slice.
    pub abandoned: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    Arrival,
    Admit,
    Completion,
    Abandon,
}

impl TraceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceKind::Arrival => "arrival",
            TraceKind::Admit => "admit",
            TraceKind::Completion => "completion",
            TraceKind::Abandon => "abandon",
        }
    }
}

/// One row of the event trace; counts are taken after the event.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: TraceKind,
    pub slice: usize,
    pub n_req: Vec<usize>,
    pub n_svc: Vec<usize>,
    /// Service duration for completions, waiting time for admits and abandons.
    pub elapsed: f64,
}

#[derive(Clone, Copy, Debug)]
enum EventKind {
    Arrival(usize),
    Completion { slice: usize, started: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Clone, Copy, Debug)]
struct Queued {
    enqueued: f64,
    seq: u64,
}

/// Cumulative per-slice counters since construction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub arrived: Vec<usize>,
    pub admitted: Vec<usize>,
    pub abandoned: Vec<usize>,
    pub completed: Vec<usize>,
}

/// The simulated network.
#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    seed: u64,
    now: f64,
    seq: u64,
    epochs: u64,
    queues: Vec<VecDeque<Queued>>,
    n_svc: Vec<usize>,
    events: BinaryHeap<Scheduled>,
    arrival_rng: Vec<ChaCha8Rng>,
    service_rng: Vec<ChaCha8Rng>,
    arrival_dist: Vec<Exp<f64>>,
    service_dist: Vec<Exp<f64>>,
    counters: Counters,
    trace: Option<Vec<TraceEvent>>,
}

impl Env {
    /// Builds an empty network. Each slice draws arrivals and service times
    /// from its own stream derived from `seed`, so the arrival process does
    /// not depend on the policy being run.
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let k = config.num_slices();
        let stream = |i: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            rng
        };
        let arrival_dist = config
            .slices
            .iter()
            .map(|s| Exp::new(s.arrival_rate).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let service_dist = config
            .slices
            .iter()
            .map(|s| Exp::new(s.service_rate()).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut env = Env {
            seed,
            now: 0.0,
            seq: 0,
            epochs: 0,
            queues: vec![VecDeque::new(); k],
            n_svc: vec![0; k],
            events: BinaryHeap::new(),
            arrival_rng: (0..k as u64).map(stream).collect(),
            service_rng: (0..k as u64).map(|i| stream(k as u64 + i)).collect(),
            arrival_dist,
            service_dist,
            counters: Counters {
                arrived: vec![0; k],
                admitted: vec![0; k],
                abandoned: vec![0; k],
                completed: vec![0; k],
            },
            trace: None,
            config,
        };
        for slice in 0..k {
            env.schedule_arrival(slice);
        }
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Decision epochs completed so far.
    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn state(&self) -> NetState {
        NetState {
            n_req: self.queues.iter().map(VecDeque::len).collect(),
            n_svc: self.n_svc.clone(),
        }
    }

    /// Slices of all queued requests, oldest first.
    pub fn queue_order(&self) -> Vec<usize> {
        let mut all: Vec<(u64, usize)> = self
            .queues
            .iter()
            .enumerate()
            .flat_map(|(k, q)| q.iter().map(move |r| (r.seq, k)))
            .collect();
        all.sort_unstable();
        all.into_iter().map(|(_, k)| k).collect()
    }

    /// Whether the earliest pending trigger is an arrival.
    pub fn next_event_is_arrival(&self) -> bool {
        matches!(self.events.peek().map(|e| e.kind), Some(EventKind::Arrival(_)))
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn schedule_arrival(&mut self, slice: usize) {
        let dt = self.arrival_dist[slice].sample(&mut self.arrival_rng[slice]);
        let seq = self.next_seq();
        self.events.push(Scheduled {
            time: self.now + dt,
            seq,
            kind: EventKind::Arrival(slice),
        });
    }

    fn start_service(&mut self, slice: usize) {
        let dt = self.service_dist[slice].sample(&mut self.service_rng[slice]);
        let seq = self.next_seq();
        self.n_svc[slice] += 1;
        self.events.push(Scheduled {
            time: self.now + dt,
            seq,
            kind: EventKind::Completion {
                slice,
                started: self.now,
            },
        });
    }

    fn record(&mut self, time: f64, kind: TraceKind, slice: usize, elapsed: f64) {
        if self.trace.is_some() {
            let row = TraceEvent {
                time,
                kind,
                slice,
                n_req: self.queues.iter().map(VecDeque::len).collect(),
                n_svc: self.n_svc.clone(),
                elapsed,
            };
            if let Some(t) = self.trace.as_mut() {
                t.push(row);
            }
        }
    }

    /// Applies `action` at the current epoch and advances to the next trigger.
    ///
    /// A valid action starts the oldest queued requests of each slice; an
    /// invalid one changes nothing and earns the penalty.
    pub fn step(&mut self, action: &ActionVec) -> Result<StepOutcome> {
        self.config.check_action(action)?;
        let k = self.config.num_slices();
        let state = self.state();
        let valid = self.config.is_valid(&state, action);
        let reward = self.config.reward_bar(&state, action);
        let mut admitted = vec![0; k];
        if valid {
            for slice in 0..k {
                for _ in 0..action.0[slice] {
                    let req = self.queues[slice].pop_front().expect("validity checked queue length");
                    self.start_service(slice);
                    admitted[slice] += 1;
                    self.counters.admitted[slice] += 1;
                    self.record(self.now, TraceKind::Admit, slice, self.now - req.enqueued);
                }
            }
            debug_assert!(self
                .config
                .used_resource(&self.n_svc)
                .iter()
                .all(|&u| u <= 1.0 + RESOURCE_EPS));
        }

        let event = self.events.pop().expect("arrival clocks are always pending");
        let mut abandoned = vec![0; k];
        // Deadlines are monotone within a FIFO queue, so only fronts can expire.
        for slice in 0..k {
            let hold = self.config.slices[slice].hold_time;
            while let Some(front) = self.queues[slice].front().copied() {
                let deadline = front.enqueued + hold;
                if deadline < event.time {
                    self.queues[slice].pop_front();
                    abandoned[slice] += 1;
                    self.counters.abandoned[slice] += 1;
                    self.record(deadline, TraceKind::Abandon, slice, hold);
                } else {
                    break;
                }
            }
        }
        if self.trace.is_some() && abandoned.iter().any(|&n| n > 0) {
            // Keep the trace time-ordered across slices.
            if let Some(t) = self.trace.as_mut() {
                let start = t.len() - abandoned.iter().sum::<usize>();
                t[start..].sort_by(|a, b| a.time.total_cmp(&b.time));
            }
        }

        let sojourn = event.time - self.now;
        self.now = event.time;
        let trigger = match event.kind {
            EventKind::Arrival(slice) => {
                let seq = self.next_seq();
                self.queues[slice].push_back(Queued {
                    enqueued: self.now,
                    seq,
                });
                self.counters.arrived[slice] += 1;
                self.schedule_arrival(slice);
                self.record(self.now, TraceKind::Arrival, slice, 0.0);
                Trigger::Arrival(slice)
            }
            EventKind::Completion { slice, started } => {
                self.n_svc[slice] -= 1;
                self.counters.completed[slice] += 1;
                self.record(self.now, TraceKind::Completion, slice, self.now - started);
                Trigger::Completion(slice)
            }
        };
        self.epochs += 1;

        Ok(StepOutcome {
            state,
            next_state: self.state(),
            sojourn,
            reward,
            valid,
            trigger,
            admitted,
            abandoned,
        })
    }

    /// Asks `policy` for an action at the current epoch, executes it and
    /// reports the outcome back to the policy.
    pub fn step_with<P: Policy + ?Sized>(&mut self, policy: &mut P) -> Result<(ActionVec, StepOutcome)> {
        let state = self.state();
        let order = self.queue_order();
        let action = policy.act(&Observation {
            state: &state,
            config: &self.config,
            queue_order: &order,
        });
        let outcome = self.step(&action)?;
        policy.observe(&outcome);
        Ok((action, outcome))
    }
}

/// Writes trace rows as CSV: `time,event,slice,n_req_1..K,n_svc_1..K`.
/// Slices are numbered from 1.
pub fn write_trace_csv<W: Write>(writer: W, k: usize, trace: &[TraceEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "event".to_string(), "slice".to_string()];
    header.extend((1..=k).map(|i| format!("n_req_{i}")));
    header.extend((1..=k).map(|i| format!("n_svc_{i}")));
    w.write_record(&header)?;
    for ev in trace {
        let mut row = vec![
            format!("{:.9}", ev.time),
            ev.kind.as_str().to_string(),
            (ev.slice + 1).to_string(),
        ];
        row.extend(ev.n_req.iter().map(usize::to_string));
        row.extend(ev.n_svc.iter().map(usize::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
