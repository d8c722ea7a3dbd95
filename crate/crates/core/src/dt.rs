//! Supervised replicas ("digital twins") of an admission policy.
//!
//! A replica is a [`PolicyNet`] trained by cross-entropy on the
//! state/action pairs a policy produces while it runs the simulator.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Adam, PolicyNet, DEFAULT_HIDDEN};
use crate::policy::{Observation, Policy};
use crate::sim::{ActionVec, Env, EnvConfig, NetState, StepOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub state: NetState,
    pub action: ActionVec,
    pub split: Split,
}

/// Sidecar metadata stored next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config_hash: String,
    pub policy: String,
    pub seed: u64,
    pub num_slices: usize,
    pub n_max: usize,
    pub records: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceDataset {
    pub config_hash: String,
    pub policy: String,
    pub seed: u64,
    pub num_slices: usize,
    pub n_max: usize,
    pub records: Vec<Record>,
}

/// Mixed into the split seed so the split is not correlated with the
/// simulator streams of the same seed.
const SPLIT_SALT: u64 = 0x5eed_0000_5b11_7000;

/// Train/validation/test fractions.
pub const DEFAULT_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

/// Wraps a policy and records what it sees and does. The wrapped policy
/// receives exactly the calls it would receive without the wrapper.
pub struct Recorder<'p, P: ?Sized> {
    inner: &'p mut P,
    pub log: Vec<(NetState, ActionVec)>,
}

impl<'p, P: Policy + ?Sized> Recorder<'p, P> {
    pub fn new(inner: &'p mut P) -> Self {
        Self {
            inner,
            log: Vec::new(),
        }
    }
}

impl<P: Policy + ?Sized> Policy for Recorder<'_, P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        let a = self.inner.act(obs);
        self.log.push((obs.state.clone(), a.clone()));
        a
    }

    fn observe(&mut self, outcome: &StepOutcome) {
        self.inner.observe(outcome)
    }
}

/// Runs `policy` for `n_records` decision epochs and records every
/// `(state, action)` pair, then assigns a seeded 80/10/10 split.
pub fn collect<P: Policy + ?Sized>(env: &mut Env, policy: &mut P, n_records: usize) -> Result<TraceDataset> {
    if n_records == 0 {
        return Err(Error::Usage("at least one record is required".into()));
    }
    let name = policy.name().to_string();
    let mut rec = Recorder::new(policy);
    for _ in 0..n_records {
        env.step_with(&mut rec)?;
    }
    let config = env.config();
    let mut ds = TraceDataset {
        config_hash: config.hash(),
        policy: name,
        seed: env.seed(),
        num_slices: config.num_slices(),
        n_max: config.n_max,
        records: rec
            .log
            .into_iter()
            .map(|(state, action)| Record {
                state,
                action,
                split: Split::Train,
            })
            .collect(),
    };
    ds.assign_split(DEFAULT_SPLIT, env.seed())?;
    Ok(ds)
}

impl TraceDataset {
    /// Shuffles record indices with a seeded generator and assigns the
    /// leading fractions to train, validation and test.
    pub fn assign_split(&mut self, fractions: [f64; 3], seed: u64) -> Result<()> {
        let total: f64 = fractions.iter().sum();
        if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Usage(format!("split fractions {fractions:?} must sum to 1")));
        }
        let n = self.records.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
        let n_train = (fractions[0] * n as f64).round() as usize;
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        for (rank, &i) in idx.iter().enumerate() {
            self.records[i].split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&Record> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn meta(&self) -> DatasetMeta {
        let count = |s| self.records.iter().filter(|r| r.split == s).count();
        DatasetMeta {
            config_hash: self.config_hash.clone(),
            policy: self.policy.clone(),
            seed: self.seed,
            num_slices: self.num_slices,
            n_max: self.n_max,
            records: self.records.len(),
            train: count(Split::Train),
            validation: count(Split::Validation),
            test: count(Split::Test),
        }
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the records as CSV and the metadata as a JSON sidecar.
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let k = self.num_slices;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
        let mut header: Vec<String> = Vec::with_capacity(3 * k + 1);
        header.extend((1..=k).map(|i| format!("n_req_{i}")));
        header.extend((1..=k).map(|i| format!("n_svc_{i}")));
        header.extend((1..=k).map(|i| format!("a_{i}")));
        header.push("split".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = Vec::with_capacity(3 * k + 1);
            row.extend(r.state.n_req.iter().map(|v| v.to_string()));
            row.extend(r.state.n_svc.iter().map(|v| v.to_string()));
            row.extend(r.action.0.iter().map(|v| v.to_string()));
            row.push(r.split.as_str().into());
            w.write_record(&row)?;
        }
        w.flush()?;
        let mut side = BufWriter::new(File::create(Self::sidecar_path(csv_path))?);
        serde_json::to_writer_pretty(&mut side, &self.meta())?;
        side.flush()?;
        Ok(())
    }

    pub fn load(csv_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let meta: DatasetMeta =
            serde_json::from_reader(BufReader::new(File::open(Self::sidecar_path(csv_path))?))?;
        let k = meta.num_slices;
        let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(csv_path)?));
        let mut records = Vec::with_capacity(meta.records);
        for row in rdr.records() {
            let row = row?;
            if row.len() != 3 * k + 1 {
                return Err(Error::Config(format!("dataset row has {} fields, expected {}", row.len(), 3 * k + 1)));
            }
            let nums: Vec<usize> = (0..3 * k)
                .map(|i| {
                    row[i]
                        .parse()
                        .map_err(|e| Error::Config(format!("dataset field {i}: {e}")))
                })
                .collect::<Result<_>>()?;
            let action = ActionVec(nums[2 * k..].to_vec());
            if action.0.iter().any(|&a| a > meta.n_max) {
                return Err(Error::Config(format!("label {:?} exceeds n_max {}", action.0, meta.n_max)));
            }
            records.push(Record {
                state: NetState {
                    n_req: nums[..k].to_vec(),
                    n_svc: nums[k..2 * k].to_vec(),
                },
                action,
                split: Split::parse(&row[3 * k])?,
            });
        }
        if records.len() != meta.records {
            return Err(Error::Config(format!(
                "sidecar lists {} records, CSV has {}",
                meta.records,
                records.len()
            )));
        }
        Ok(Self {
            config_hash: meta.config_hash,
            policy: meta.policy,
            seed: meta.seed,
            num_slices: k,
            n_max: meta.n_max,
            records,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtHyper {
    pub hidden: Vec<usize>,
    pub batch: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for DtHyper {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            batch: 64,
            lr: 1e-4,
            max_epochs: 400,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// A trained replica and its training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtModel {
    pub net: PolicyNet<f64>,
    pub source_policy: String,
    pub config_hash: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochStat>,
}

impl DtModel {
    pub const KIND: &'static str = "dt";

    pub fn act(&self, config: &EnvConfig, state: &NetState) -> ActionVec {
        self.net
            .greedy(&config.encode_state(state))
            .expect("replica input width matches the config")
    }
}

/// Flattened inputs and labels of a set of records.
struct Batchable {
    xs: Vec<f64>,
    actions: Vec<ActionVec>,
    width: usize,
}

impl Batchable {
    fn new(config: &EnvConfig, records: &[&Record]) -> Self {
        let width = 2 * config.num_slices();
        let mut xs = Vec::with_capacity(records.len() * width);
        for r in records {
            xs.extend(config.encode_state(&r.state));
        }
        Self {
            xs,
            actions: records.iter().map(|r| r.action.clone()).collect(),
            width,
        }
    }

    fn len(&self) -> usize {
        self.actions.len()
    }
}

const EVAL_CHUNK: usize = 512;

/// Mean cross-entropy and exact-match accuracy of `net` on `data`.
fn evaluate(net: &PolicyNet<f64>, data: &Batchable) -> Result<(f64, f64)> {
    if data.len() == 0 {
        return Ok((0.0, 0.0));
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let cache = net
            .mlp
            .forward_batch(&data.xs[start * data.width..end * data.width], end - start)?;
        for b in 0..end - start {
            let logits = cache.output(b);
            let lp = net.head.log_probs(logits)?;
            let a = &data.actions[start + b];
            loss -= net.head.action_log_prob(&lp, a)?;
            if net.head.greedy(logits) == *a {
                hits += 1;
            }
        }
        start = end;
    }
    Ok((loss / data.len() as f64, hits as f64 / data.len() as f64))
}

/// Cross-entropy training with mini-batches, Adam and early stopping on
/// validation loss. Returns the parameters of the best validation epoch.
///
/// `on_epoch` sees every epoch's statistics as they are produced.
pub fn train_dt(
    dataset: &TraceDataset,
    config: &EnvConfig,
    hyper: &DtHyper,
    mut on_epoch: impl FnMut(&EpochStat),
) -> Result<DtModel> {
    if dataset.num_slices != config.num_slices() || dataset.n_max != config.n_max {
        return Err(Error::Config(format!(
            "dataset shape (K = {}, n_max = {}) does not match the config (K = {}, n_max = {})",
            dataset.num_slices,
            dataset.n_max,
            config.num_slices(),
            config.n_max
        )));
    }
    if hyper.batch == 0 {
        return Err(Error::Usage("batch size must be positive".into()));
    }
    let train = Batchable::new(config, &dataset.split(Split::Train));
    if train.len() == 0 {
        return Err(Error::Usage("dataset has no training records".into()));
    }
    let val_records = dataset.split(Split::Validation);
    // Without a validation split, early stopping watches the training set.
    let val = if val_records.is_empty() {
        Batchable::new(config, &dataset.split(Split::Train))
    } else {
        Batchable::new(config, &val_records)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut net = PolicyNet::<f64>::new(config, &hyper.hidden, &mut rng)?;
    let mut opt = Adam::new(net.mlp.num_params(), hyper.lr);
    let mut grads = vec![0.0; net.mlp.num_params()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut xb = Vec::with_capacity(hyper.batch * train.width);
    let mut ab = Vec::with_capacity(hyper.batch);

    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();

    for epoch in 1..=hyper.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(hyper.batch) {
            xb.clear();
            ab.clear();
            for &i in chunk {
                xb.extend_from_slice(&train.xs[i * train.width..(i + 1) * train.width]);
                ab.push(train.actions[i].clone());
            }
            let w = vec![1.0 / chunk.len() as f64; chunk.len()];
            grads.iter_mut().for_each(|g| *g = 0.0);
            let loss = net.weighted_nll(&xb, &ab, &w, &mut grads)?;
            train_loss += loss * chunk.len() as f64;
            opt.step(net.mlp.params_mut(), &grads)?;
        }
        let (val_loss, val_accuracy) = evaluate(&net, &val)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!(
                "validation loss became {val_loss} at epoch {epoch} (best {best_loss} at epoch {best_epoch}, train loss {})",
                train_loss / train.len() as f64
            )));
        }
        let stat = EpochStat {
            epoch,
            train_loss: train_loss / train.len() as f64,
            val_loss,
            val_accuracy,
        };
        on_epoch(&stat);
        history.push(stat);
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = net.clone();
        } else if epoch - best_epoch >= hyper.patience {
            break;
        }
    }
    Ok(DtModel {
        net: best,
        source_policy: dataset.policy.clone(),
        config_hash: dataset.config_hash.clone(),
        epochs_run: history.len(),
        best_epoch,
        best_val_loss: best_loss,
        history,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Fraction of records whose whole action vector is predicted.
    pub exact: f64,
    /// Fraction of correct components, per slice.
    pub per_slice: Vec<f64>,
    pub records: usize,
}

/// Greedy-decode accuracy of a replica on a set of records.
pub fn accuracy(model: &DtModel, config: &EnvConfig, records: &[&Record]) -> Result<Accuracy> {
    let k = config.num_slices();
    if records.is_empty() {
        return Ok(Accuracy {
            exact: 0.0,
            per_slice: vec![0.0; k],
            records: 0,
        });
    }
    let data = Batchable::new(config, records);
    let mut exact = 0usize;
    let mut per = vec![0usize; k];
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let pred = model
            .net
            .greedy_batch(&data.xs[start * data.width..end * data.width], end - start)?;
        for (p, a) in pred.iter().zip(&data.actions[start..end]) {
            if p == a {
                exact += 1;
            }
            for j in 0..k {
                if p.0[j] == a.0[j] {
                    per[j] += 1;
                }
            }
        }
        start = end;
    }
    let n = records.len() as f64;
    Ok(Accuracy {
        exact: exact as f64 / n,
        per_slice: per.into_iter().map(|c| c as f64 / n).collect(),
        records: records.len(),
    })
}

/// Runs a replica as a policy with greedy decoding. Its actions are not
/// masked and may be invalid.
#[derive(Clone, Debug)]
pub struct DtPolicy {
    pub model: DtModel,
    name: String,
}

impl DtPolicy {
    pub fn new(model: DtModel) -> Self {
        let name = format!("dt-{}", model.source_policy);
        Self { model, name }
    }
}

impl Policy for DtPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, obs: &Observation<'_>) -> ActionVec {
        self.model.act(obs.config, obs.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{greedy_action, Greedy, Ilp};
    use crate::neural::Checkpoint;
    use crate::policy::FnPolicy;

    fn greedy_data(n: usize, seed: u64) -> (EnvConfig, TraceDataset) {
        let cfg = EnvConfig::reference();
        let mut env = Env::new(cfg.clone(), seed).unwrap();
        let ds = collect(&mut env, &mut Greedy, n).unwrap();
        (cfg, ds)
    }

    #[test]
    fn collects_exactly_n_valid_records() {
        let (cfg, ds) = greedy_data(10, 1);
        assert_eq!(ds.len(), 10);
        assert!(ds.records.iter().all(|r| cfg.is_valid(&r.state, &r.action)));
        assert!(matches!(
            collect(&mut Env::new(cfg, 1).unwrap(), &mut Greedy, 0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn split_is_eighty_ten_ten() {
        let (_, ds) = greedy_data(1000, 2);
        let m = ds.meta();
        assert_eq!((m.train, m.validation, m.test), (800, 100, 100));
    }

    #[test]
    fn collection_tap_does_not_change_the_run() {
        let cfg = EnvConfig::reference();
        let mut a = Env::new(cfg.clone(), 3).unwrap();
        a.enable_trace();
        collect(&mut a, &mut Greedy, 2000).unwrap();
        let mut b = Env::new(cfg, 3).unwrap();
        b.enable_trace();
        for _ in 0..2000 {
            b.step_with(&mut Greedy).unwrap();
        }
        assert_eq!(a.trace(), b.trace());
    }

    #[test]
    fn replayed_states_reproduce_pure_policy_labels() {
        let cfg = EnvConfig::reference();
        let mut env = Env::new(cfg.clone(), 4).unwrap();
        let mut ilp = Ilp::new(&cfg).unwrap();
        let ds = collect(&mut env, &mut ilp, 2000).unwrap();
        for r in &ds.records {
            let o = Observation {
                state: &r.state,
                config: &cfg,
                queue_order: &[],
            };
            assert_eq!(ilp.act(&o), r.action);
        }
        let (cfg, g) = greedy_data(2000, 4);
        for r in &g.records {
            assert_eq!(greedy_action(&r.state, &cfg), r.action);
        }
    }

    #[test]
    fn csv_round_trip() {
        let (_, ds) = greedy_data(300, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("greedy.csv");
        ds.save(&path).unwrap();
        assert!(path.with_extension("json").exists());
        assert_eq!(TraceDataset::load(&path).unwrap(), ds);
    }

    #[test]
    fn constant_policy_is_learned_quickly() {
        let cfg = EnvConfig::reference();
        let mut env = Env::new(cfg.clone(), 6).unwrap();
        let mut zero = FnPolicy::new("zero", |s: &NetState, _: &EnvConfig| ActionVec::zeros(s.num_slices()));
        let ds = collect(&mut env, &mut zero, 2000).unwrap();
        let hyper = DtHyper {
            max_epochs: 5,
            ..DtHyper::default()
        };
        let model = train_dt(&ds, &cfg, &hyper, |_| {}).unwrap();
        let acc = accuracy(&model, &cfg, &ds.split(Split::Test)).unwrap();
        assert_eq!(acc.exact, 1.0);
        assert!(model.epochs_run <= 5);
    }

    #[test]
    fn early_stopping_returns_the_best_epoch() {
        let (cfg, ds) = greedy_data(3000, 7);
        let hyper = DtHyper {
            max_epochs: 30,
            patience: 3,
            lr: 3e-3,
            ..DtHyper::default()
        };
        let model = train_dt(&ds, &cfg, &hyper, |_| {}).unwrap();
        let best = model.history[model.best_epoch - 1].val_loss;
        assert_eq!(best, model.best_val_loss);
        assert!(model.history.iter().all(|s| s.val_loss >= best));
        let val = Batchable::new(&cfg, &ds.split(Split::Validation));
        assert_eq!(evaluate(&model.net, &val).unwrap().0, best);
    }

    #[test]
    fn diverging_training_is_reported() {
        let (cfg, ds) = greedy_data(500, 8);
        let hyper = DtHyper {
            max_epochs: 3,
            lr: f64::NAN,
            ..DtHyper::default()
        };
        assert!(matches!(train_dt(&ds, &cfg, &hyper, |_| {}), Err(Error::Training(_))));
    }

    #[test]
    fn untrained_replica_is_near_chance_on_diverse_labels() {
        let cfg = EnvConfig::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = PolicyNet::from_parts(
            crate::neural::Mlp::zeros(&[8, 64, 64, 64, 16]).unwrap(),
            crate::neural::FactorizedHead::new(4, 3),
        )
        .unwrap();
        let model = DtModel {
            net,
            source_policy: "none".into(),
            config_hash: cfg.hash(),
            epochs_run: 0,
            best_epoch: 0,
            best_val_loss: 0.0,
            history: vec![],
        };
        use rand::Rng;
        let records: Vec<Record> = (0..25_600)
            .map(|_| Record {
                state: NetState::empty(4),
                action: ActionVec((0..4).map(|_| rng.random_range(0..4)).collect()),
                split: Split::Test,
            })
            .collect();
        let refs: Vec<&Record> = records.iter().collect();
        let acc = accuracy(&model, &cfg, &refs).unwrap();
        // The zero net always predicts the zero action: 1/256 of the labels.
        assert!((acc.exact - 1.0 / 256.0).abs() < 0.002);
        assert_eq!(acc, accuracy(&model, &cfg, &refs).unwrap());
    }

    #[test]
    fn replica_survives_checkpoint_round_trip() {
        let (cfg, ds) = greedy_data(1000, 10);
        let hyper = DtHyper {
            max_epochs: 2,
            ..DtHyper::default()
        };
        let model = train_dt(&ds, &cfg, &hyper, |_| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dt.json");
        Checkpoint::new(DtModel::KIND, model.clone()).save(&path).unwrap();
        let back = Checkpoint::<DtModel>::load(&path, DtModel::KIND).unwrap().model;
        for r in &ds.records {
            assert_eq!(back.act(&cfg, &r.state), model.act(&cfg, &r.state));
        }
    }
}
