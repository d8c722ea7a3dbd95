use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_rows, write_metrics, MetricsRow};
use crate::agents::{
    run_dt_assisted, run_scratch_a2c, train_dqn, A2cHyper, ActorCritic, DqnHyper, DqnLearner, EpochRecord,
    LogWriter, TrainLog, TrainObserver,
};
use crate::baselines::{self, POLICY_NAMES};
use crate::dt::{collect, train_dt, DtHyper, DtModel};
use crate::error::{Error, Result};
use crate::neural::{Checkpoint, RngState};
use crate::sim::{Env, EnvConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Method {
    Baseline(String),
    DtAssisted,
    ScratchA2c,
    Dqn,
}

impl Method {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "dt-assisted" => Method::DtAssisted,
            "scratch-a2c" => Method::ScratchA2c,
            "dqn" => Method::Dqn,
            b if POLICY_NAMES.contains(&b) => Method::Baseline(b.to_string()),
            other => {
                return Err(Error::Config(format!(
                    "unknown method {other:?}; expected dt-assisted, scratch-a2c, dqn or one of {POLICY_NAMES:?}"
                )))
            }
        })
    }
}

/// One experiment: a method run once per seed on a shared environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: String,
    /// Policy whose traces train the replica for `dt-assisted`.
    pub dt_source: String,
    pub seeds: Vec<u64>,
    /// Learning epochs. For `dt-assisted` these follow the critic-only
    /// epochs in `a2c.critic_epochs`.
    pub epochs: u64,
    pub record_interval: usize,
    /// Aggregation window, a multiple of `record_interval`.
    pub window: usize,
    pub dt_samples: usize,
    pub dt_seed: u64,
    /// Use a saved replica instead of training one.
    pub dt_checkpoint: Option<PathBuf>,
    pub a2c: A2cHyper,
    pub dqn: DqnHyper,
    pub dt: DtHyper,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: "dt-assisted".into(),
            dt_source: "greedy".into(),
            seeds: vec![1, 2, 3, 4],
            epochs: 50_000,
            record_interval: 200,
            window: 4000,
            dt_samples: 100_000,
            dt_seed: 0,
            dt_checkpoint: None,
            a2c: A2cHyper::default(),
            dqn: DqnHyper::default(),
            dt: DtHyper::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn parsed_method(&self) -> Result<Method> {
        Method::parse(&self.method)
    }

    pub fn validate(&self) -> Result<()> {
        let method = self.parsed_method()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.record_interval == 0 || self.epochs % self.record_interval as u64 != 0 {
            return Err(Error::Config(format!(
                "record interval {} must be positive and divide the {} epochs",
                self.record_interval, self.epochs
            )));
        }
        if self.window == 0 || self.window % self.record_interval != 0 {
            return Err(Error::Config(format!(
                "window {} must be a positive multiple of the record interval {}",
                self.window, self.record_interval
            )));
        }
        if method == Method::DtAssisted {
            if !POLICY_NAMES.contains(&self.dt_source.as_str()) {
                return Err(Error::Config(format!("unknown replica source {:?}", self.dt_source)));
            }
            if self.dt_checkpoint.is_none() && self.dt_samples == 0 {
                return Err(Error::Config("dt_samples must be positive".into()));
            }
        }
        Ok(())
    }

    /// Name used for output files and the `method` column.
    pub fn label(&self) -> String {
        match self.parsed_method() {
            Ok(Method::DtAssisted) => format!("dt-assisted-{}", self.dt_source),
            _ => self.method.clone(),
        }
    }
}

/// Collects `samples` epochs of `source` and fits a replica to them.
pub fn train_replica(config: &EnvConfig, source: &str, samples: usize, seed: u64, hyper: &DtHyper) -> Result<DtModel> {
    let mut env = Env::new(config.clone(), seed)?;
    let mut policy = baselines::by_name(source, config, seed)?;
    let dataset = collect(&mut env, &mut policy, samples)?;
    train_dt(&dataset, config, hyper, |_| {})
}

pub fn load_replica(path: impl AsRef<Path>, config: &EnvConfig) -> Result<DtModel> {
    let model = Checkpoint::<DtModel>::load(path, DtModel::KIND)?.model;
    if model.config_hash != config.hash() {
        return Err(Error::Config(format!(
            "replica was trained on config {}, not {}",
            model.config_hash,
            config.hash()
        )));
    }
    Ok(model)
}

/// Output files of one seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: PathBuf,
    pub log: PathBuf,
    pub model: Option<PathBuf>,
    pub windows: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub config_hash: String,
    pub replica: Option<PathBuf>,
    pub runs: Vec<SeedRun>,
}

/// Streams epoch records to CSV and writes periodic checkpoints.
struct FileObserver {
    writer: LogWriter<BufWriter<File>>,
    error: Option<Error>,
    stem: PathBuf,
    meta: serde_json::Map<String, serde_json::Value>,
}

impl FileObserver {
    fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        match self.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl TrainObserver for FileObserver {
    fn on_epoch(&mut self, record: &EpochRecord) {
        if self.error.is_none() {
            if let Err(e) = self.writer.write(record) {
                self.error = Some(e);
            }
        }
    }

    fn on_checkpoint(&mut self, epoch: u64, kind: &str, model: serde_json::Value, rng: &RngState) -> Result<()> {
        let mut ck = Checkpoint::new(kind, model);
        ck.rng = Some(rng.clone());
        ck.meta = self.meta.clone();
        ck.meta.insert("epoch".into(), epoch.into());
        ck.save(with_suffix(&self.stem, &format!("-ckpt{epoch}.json")))
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_seed(
    config: &EnvConfig,
    exp: &ExperimentConfig,
    replica: Option<&DtModel>,
    seed: u64,
    out_dir: &Path,
) -> Result<SeedRun> {
    let label = exp.label();
    let hash = config.hash();
    let stem = out_dir.join(format!("{label}-seed{seed}"));
    let log_path = with_suffix(&stem, "-log.csv");
    let mut meta = serde_json::Map::new();
    meta.insert("config_hash".into(), hash.clone().into());
    meta.insert("method".into(), label.clone().into());
    meta.insert("seed".into(), seed.into());
    let mut obs = FileObserver {
        writer: LogWriter::new(BufWriter::new(File::create(&log_path)?), &hash, &label, seed, config.num_slices())?,
        error: None,
        stem: stem.clone(),
        meta: meta.clone(),
    };
    let mut env = Env::new(config.clone(), seed)?;

    let result: Result<(TrainLog, Option<(&str, serde_json::Value)>)> = match exp.parsed_method()? {
        Method::Baseline(name) => (|| {
            let mut policy = baselines::by_name(&name, config, seed)?;
            let mut log = TrainLog::new(config, &label, seed);
            for epoch in 0..exp.epochs {
                let (action, out) = env.step_with(&mut policy)?;
                let rec = EpochRecord::from_outcome(epoch, 0, config, &action, &out);
                obs.on_epoch(&rec);
                log.records.push(rec);
            }
            Ok((log, None))
        })(),
        Method::ScratchA2c => {
            let hyper = A2cHyper {
                seed,
                joint_epochs: exp.epochs,
                ..exp.a2c.clone()
            };
            run_scratch_a2c(&mut env, &hyper, &mut obs)
                .and_then(|(ac, log)| Ok((log, Some((ActorCritic::KIND, serde_json::to_value(&ac)?)))))
        }
        Method::DtAssisted => {
            let replica = replica.ok_or_else(|| Error::Usage("dt-assisted needs a replica".into()))?;
            let hyper = A2cHyper {
                seed,
                joint_epochs: exp.epochs,
                ..exp.a2c.clone()
            };
            run_dt_assisted(&mut env, replica.net.clone(), &hyper, &mut obs)
                .and_then(|(ac, log)| Ok((log.joint_phase(), Some((ActorCritic::KIND, serde_json::to_value(&ac)?)))))
        }
        Method::Dqn => {
            let hyper = DqnHyper {
                seed,
                epochs: exp.epochs,
                ..exp.dqn.clone()
            };
            train_dqn(&mut env, &hyper, &mut obs)
                .and_then(|(agent, log)| Ok((log, Some((DqnLearner::KIND, serde_json::to_value(&agent)?)))))
        }
    };
    // The streamed log is flushed even when the run failed.
    let flushed = obs.finish();
    let (mut log, model) = result?;
    flushed?;

    log.method = label;
    let rows = metrics_rows(&log, exp.record_interval)?;
    let metrics_path = with_suffix(&stem, ".csv");
    write_metrics(BufWriter::new(File::create(&metrics_path)?), config.num_slices(), &rows)?;
    let model_path = match model {
        Some((kind, value)) => {
            let path = with_suffix(&stem, "-model.json");
            let mut ck = Checkpoint::new(kind, value);
            ck.meta = meta;
            ck.meta.insert("epoch".into(), log.records.len().into());
            ck.save(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(SeedRun {
        seed,
        metrics: metrics_path,
        log: log_path,
        model: model_path,
        windows: rows.len(),
    })
}

/// Runs the experiment for every seed in parallel and writes, per seed,
/// `<label>-seed<S>.csv` (windowed metrics), `<label>-seed<S>-log.csv`
/// (every epoch) and, for learners, `<label>-seed<S>-model.json`.
///
/// `dt-assisted` trains one replica shared by all seeds (saved as
/// `dt-<source>.json`) unless `dt_checkpoint` names one. For
/// `dt-assisted` the metrics cover the joint phase only; the full log keeps
/// the critic-only epochs as phase 2.
pub fn run_experiment(config: &EnvConfig, exp: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<RunSummary> {
    config.validate()?;
    exp.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut replica_path = None;
    let replica = if exp.parsed_method()? == Method::DtAssisted {
        Some(match &exp.dt_checkpoint {
            Some(path) => {
                replica_path = Some(path.clone());
                load_replica(path, config)?
            }
            None => {
                let model = train_replica(config, &exp.dt_source, exp.dt_samples, exp.dt_seed, &exp.dt)?;
                let path = out_dir.join(format!("dt-{}.json", exp.dt_source));
                Checkpoint::new(DtModel::KIND, model.clone()).save(&path)?;
                replica_path = Some(path);
                model
            }
        })
    } else {
        None
    };
    let runs = exp
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, exp, replica.as_ref(), seed, out_dir))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary {
        label: exp.label(),
        config_hash: config.hash(),
        replica: replica_path,
        runs,
    })
}

/// Reads the metrics files of a finished experiment.
pub fn read_runs(summary: &RunSummary) -> Result<Vec<Vec<MetricsRow>>> {
    summary
        .runs
        .iter()
        .map(|r| super::metrics::read_metrics(File::open(&r.metrics)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(method: &str, epochs: u64, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            method: method.into(),
            seeds,
            epochs,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn greedy_run_writes_one_row_per_interval() {
        let dir = tempfile::tempdir().unwrap();
        let exp = quick("greedy", 2000, vec![1, 2]);
        let s = run_experiment(&EnvConfig::reference(), &exp, dir.path()).unwrap();
        assert_eq!(s.runs.len(), 2);
        for r in &s.runs {
            assert_eq!(r.windows, 10);
            assert!(r.model.is_none());
        }
        let rows = read_runs(&s).unwrap();
        assert_eq!(rows[0].len(), 10);
        assert_ne!(rows[0], rows[1]);
        let log = TrainLog::read_csv(File::open(&s.runs[0].log).unwrap()).unwrap();
        assert_eq!(log.records.len(), 2000);
    }

    #[test]
    fn zero_epochs_give_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&EnvConfig::reference(), &quick("prio", 0, vec![3]), dir.path()).unwrap();
        let text = std::fs::read_to_string(&s.runs[0].metrics).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn reruns_are_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut exp = quick("scratch-a2c", 400, vec![5]);
        exp.a2c.hidden = vec![8];
        let cfg = EnvConfig::reference();
        let sa = run_experiment(&cfg, &exp, a.path()).unwrap();
        let sb = run_experiment(&cfg, &exp, b.path()).unwrap();
        for (x, y) in sa.runs.iter().zip(&sb.runs) {
            assert_eq!(std::fs::read(&x.metrics).unwrap(), std::fs::read(&y.metrics).unwrap());
            assert_eq!(std::fs::read(&x.log).unwrap(), std::fs::read(&y.log).unwrap());
            assert_eq!(
                std::fs::read(x.model.as_ref().unwrap()).unwrap(),
                std::fs::read(y.model.as_ref().unwrap()).unwrap()
            );
        }
    }

    #[test]
    fn dt_assisted_metrics_skip_the_critic_phase() {
        let dir = tempfile::tempdir().unwrap();
        let mut exp = quick("dt-assisted", 400, vec![1]);
        exp.dt_samples = 500;
        exp.dt = DtHyper {
            hidden: vec![8],
            max_epochs: 2,
            ..DtHyper::default()
        };
        exp.a2c.hidden = vec![8];
        exp.a2c.critic_epochs = 200;
        let s = run_experiment(&EnvConfig::reference(), &exp, dir.path()).unwrap();
        assert_eq!(s.label, "dt-assisted-greedy");
        assert!(s.replica.as_ref().unwrap().exists());
        assert_eq!(s.runs[0].windows, 2);
        let log = TrainLog::read_csv(File::open(&s.runs[0].log).unwrap()).unwrap();
        assert_eq!(log.records.len(), 600);
        assert_eq!(log.joint_phase().records.len(), 400);
    }

    #[test]
    fn checkpoints_land_next_to_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let mut exp = quick("dqn", 200, vec![2]);
        exp.dqn.hidden = vec![8];
        exp.dqn.checkpoint_every = 100;
        run_experiment(&EnvConfig::reference(), &exp, dir.path()).unwrap();
        let ck = Checkpoint::<DqnLearner>::load(dir.path().join("dqn-seed2-ckpt200.json"), DqnLearner::KIND).unwrap();
        assert!(ck.rng.is_some());
        assert_eq!(ck.meta["epoch"], 200);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ok = ExperimentConfig::default();
        ok.validate().unwrap();
        for bad in [
            ExperimentConfig { seeds: vec![], ..ok.clone() },
            ExperimentConfig { epochs: 1000, record_interval: 300, ..ok.clone() },
            ExperimentConfig { window: 300, ..ok.clone() },
            ExperimentConfig { method: "sarsa".into(), ..ok.clone() },
            ExperimentConfig { dt_source: "oracle".into(), ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let exp = ExperimentConfig::from_toml_str("method = \"dqn\"\nepochs = 4000\n[dqn]\nlr = 0.001\n").unwrap();
        assert_eq!(exp.seeds, vec![1, 2, 3, 4]);
        assert_eq!(exp.dqn.lr, 1e-3);
        assert_eq!(exp.dqn.batch, DqnHyper::default().batch);
        assert!(ExperimentConfig::from_toml_str("metod = \"dqn\"").is_err());
    }
}
