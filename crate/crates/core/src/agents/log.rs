use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ActionVec, EnvConfig, NetState, StepOutcome, Trigger, RESOURCES};

/// One decision epoch of a training or evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// 0 for runs without phases, 2 for critic-only warm-up, 3 for joint
    /// training.
    pub phase: u8,
    pub state: NetState,
    pub action: ActionVec,
    pub valid: bool,
    pub reward: f64,
    pub sojourn: f64,
    /// Resource held during the sojourn that follows the decision.
    pub util: [f64; RESOURCES],
    pub accepted: Vec<usize>,
    pub arrived: Vec<usize>,
    pub loss_actor: Option<f64>,
    pub loss_critic: Option<f64>,
}

impl EpochRecord {
    pub fn from_outcome(epoch: u64, phase: u8, config: &EnvConfig, action: &ActionVec, out: &StepOutcome) -> Self {
        let held: Vec<usize> = out
            .state
            .n_svc
            .iter()
            .zip(&out.admitted)
            .map(|(s, a)| s + a)
            .collect();
        let mut arrived = vec![0; config.num_slices()];
        if let Trigger::Arrival(k) = out.trigger {
            arrived[k] = 1;
        }
        Self {
            epoch,
            phase,
            state: out.state.clone(),
            action: action.clone(),
            valid: out.valid,
            reward: out.reward,
            sojourn: out.sojourn,
            util: config.used_resource(&held),
            accepted: out.admitted.clone(),
            arrived,
            loss_actor: None,
            loss_critic: None,
        }
    }

    pub fn mean_util(&self) -> f64 {
        self.util.iter().sum::<f64>() / RESOURCES as f64
    }
}

/// Per-epoch log of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config_hash: String,
    pub method: String,
    pub seed: u64,
    pub num_slices: usize,
    pub records: Vec<EpochRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainLog {
    pub fn new(config: &EnvConfig, method: impl Into<String>, seed: u64) -> Self {
        Self {
            config_hash: config.hash(),
            method: method.into(),
            seed,
            num_slices: config.num_slices(),
            records: Vec::new(),
        }
    }

    /// The same log without the critic-only warm-up records.
    pub fn joint_phase(&self) -> TrainLog {
        TrainLog {
            records: self.records.iter().filter(|r| r.phase != 2).cloned().collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> TrainLog {
        TrainLog {
            config_hash: self.config_hash.clone(),
            method: self.method.clone(),
            seed: self.seed,
            num_slices: self.num_slices,
            records: Vec::new(),
        }
    }

    pub fn header(k: usize) -> Vec<String> {
        let mut h: Vec<String> = ["config_hash", "method", "seed", "epoch", "phase", "reward", "valid", "sojourn", "util_R", "util_C", "util_S"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for prefix in ["accepted", "arrived", "n_req", "n_svc", "a"] {
            h.extend((1..=k).map(|i| format!("{prefix}_{i}")));
        }
        h.push("loss_actor".into());
        h.push("loss_critic".into());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = LogWriter::new(w, &self.config_hash, &self.method, self.seed, self.num_slices)?;
        for r in &self.records {
            out.write(r)?;
        }
        out.flush()
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let k = header.iter().filter(|h| h.starts_with("accepted_")).count();
        if header.iter().collect::<Vec<_>>() != Self::header(k) {
            return Err(Error::Config("not a training log: unexpected header".into()));
        }
        let mut log = TrainLog {
            num_slices: k,
            ..Default::default()
        };
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Config(format!("{what}: {e}")))
        };
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            if line == 0 {
                log.config_hash = row[0].to_string();
                log.method = row[1].to_string();
                log.seed = num(&row[2], "seed")? as u64;
            } else if row[0] != *log.config_hash {
                return Err(Error::Alignment("config hash changes within a log".into()));
            }
            let ints = |off: usize| -> Result<Vec<usize>> {
                (off..off + k)
                    .map(|i| row[i].parse().map_err(|e| Error::Config(format!("column {i}: {e}"))))
                    .collect()
            };
            let base = 11;
            let loss = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s, "loss").map(Some)
                }
            };
            log.records.push(EpochRecord {
                epoch: num(&row[3], "epoch")? as u64,
                phase: num(&row[4], "phase")? as u8,
                reward: num(&row[5], "reward")?,
                valid: &row[6] == "1",
                sojourn: num(&row[7], "sojourn")?,
                util: [num(&row[8], "util")?, num(&row[9], "util")?, num(&row[10], "util")?],
                accepted: ints(base)?,
                arrived: ints(base + k)?,
                state: NetState {
                    n_req: ints(base + 2 * k)?,
                    n_svc: ints(base + 3 * k)?,
                },
                action: ActionVec(ints(base + 4 * k)?),
                loss_actor: loss(&row[base + 5 * k])?,
                loss_critic: loss(&row[base + 5 * k + 1])?,
            });
        }
        Ok(log)
    }
}

/// Streams [`EpochRecord`]s to CSV as they are produced.
pub struct LogWriter<W: Write> {
    out: csv::Writer<W>,
    prefix: [String; 3],
}

impl<W: Write> LogWriter<W> {
    pub fn new(w: W, config_hash: &str, method: &str, seed: u64, num_slices: usize) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TrainLog::header(num_slices))?;
        Ok(Self {
            out,
            prefix: [config_hash.to_string(), method.to_string(), seed.to_string()],
        })
    }

    pub fn write(&mut self, r: &EpochRecord) -> Result<()> {
        let mut row: Vec<String> = self.prefix.to_vec();
        row.extend([
            r.epoch.to_string(),
            r.phase.to_string(),
            r.reward.to_string(),
            u8::from(r.valid).to_string(),
            r.sojourn.to_string(),
        ]);
        row.extend(r.util.iter().map(|u| u.to_string()));
        for v in [&r.accepted, &r.arrived, &r.state.n_req, &r.state.n_svc, &r.action.0] {
            row.extend(v.iter().map(|x| x.to_string()));
        }
        row.push(opt(r.loss_actor));
        row.push(opt(r.loss_critic));
        self.out.write_record(&row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::Greedy;
    use crate::sim::Env;

    #[test]
    fn csv_round_trip() {
        let cfg = EnvConfig::reference();
        let mut env = Env::new(cfg.clone(), 1).unwrap();
        let mut log = TrainLog::new(&cfg, "greedy", 1);
        for e in 0..200 {
            let (a, out) = env.step_with(&mut Greedy).unwrap();
            let mut r = EpochRecord::from_outcome(e, 0, &cfg, &a, &out);
            if e % 2 == 0 {
                r.loss_critic = Some(0.25 * e as f64);
            }
            log.records.push(r);
        }
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(TrainLog::read_csv(buf.as_slice()).unwrap(), log);
    }

    #[test]
    fn utilization_counts_admitted_services() {
        let cfg = EnvConfig::reference();
        let mut env = Env::new(cfg.clone(), 2).unwrap();
        env.step(&ActionVec::zeros(4)).unwrap();
        let s = env.state();
        let k = s.n_req.iter().position(|&q| q > 0).unwrap();
        let mut a = ActionVec::zeros(4);
        a.0[k] = 1;
        let out = env.step(&a).unwrap();
        let r = EpochRecord::from_outcome(1, 0, &cfg, &a, &out);
        assert_eq!(r.util, cfg.slices[k].resource);
        assert_eq!(r.accepted[k], 1);
    }
}
