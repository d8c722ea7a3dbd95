use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::agents::{EpochRecord, TrainLog};
use crate::error::{Error, Result};
use crate::sim::RESOURCES;

/// Summary of one recording window of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub config_hash: String,
    pub method: String,
    pub seed: u64,
    pub window: usize,
    /// Epoch count at the end of the window.
    pub epoch_end: u64,
    pub epochs: usize,
    /// Utilization sampled at decision epochs.
    pub util: [f64; RESOURCES],
    /// Utilization weighted by sojourn time.
    pub time_util: [f64; RESOURCES],
    pub time: f64,
    pub accepted: Vec<usize>,
    pub arrived: Vec<usize>,
    pub mean_reward: f64,
}

/// Accepted over arrived, clamped to [0, 1]; windows without arrivals
/// report 0. Requests admitted in a window may have arrived in an earlier
/// one, hence the clamp.
pub fn acceptance_ratio(accepted: usize, arrived: usize) -> f64 {
    if arrived == 0 {
        0.0
    } else {
        (accepted as f64 / arrived as f64).min(1.0)
    }
}

impl MetricsRow {
    pub fn mean_util(&self) -> f64 {
        self.util.iter().sum::<f64>() / RESOURCES as f64
    }

    pub fn acceptance(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.arrived)
            .map(|(&a, &n)| acceptance_ratio(a, n))
            .collect()
    }

    fn from_records(log: &TrainLog, window: usize, recs: &[EpochRecord]) -> Self {
        let k = log.num_slices;
        let n = recs.len() as f64;
        let mut util = [0.0; RESOURCES];
        let mut time_util = [0.0; RESOURCES];
        let mut time = 0.0;
        let mut accepted = vec![0; k];
        let mut arrived = vec![0; k];
        let mut reward = 0.0;
        for r in recs {
            for x in 0..RESOURCES {
                util[x] += r.util[x];
                time_util[x] += r.util[x] * r.sojourn;
            }
            time += r.sojourn;
            for j in 0..k {
                accepted[j] += r.accepted[j];
                arrived[j] += r.arrived[j];
            }
            reward += r.reward;
        }
        for x in 0..RESOURCES {
            util[x] /= n;
            time_util[x] = if time > 0.0 { time_util[x] / time } else { 0.0 };
        }
        Self {
            config_hash: log.config_hash.clone(),
            method: log.method.clone(),
            seed: log.seed,
            window,
            epoch_end: recs.last().map(|r| r.epoch + 1).unwrap_or(0),
            epochs: recs.len(),
            util,
            time_util,
            time,
            accepted,
            arrived,
            mean_reward: reward / n,
        }
    }

    /// Merges consecutive rows into one covering all of them.
    pub fn merge(rows: &[MetricsRow], window: usize) -> Self {
        let first = &rows[0];
        let epochs: usize = rows.iter().map(|r| r.epochs).sum();
        let time: f64 = rows.iter().map(|r| r.time).sum();
        let k = first.accepted.len();
        let mut util = [0.0; RESOURCES];
        let mut time_util = [0.0; RESOURCES];
        for r in rows {
            for x in 0..RESOURCES {
                util[x] += r.util[x] * r.epochs as f64 / epochs as f64;
                if time > 0.0 {
                    time_util[x] += r.time_util[x] * r.time / time;
                }
            }
        }
        Self {
            config_hash: first.config_hash.clone(),
            method: first.method.clone(),
            seed: first.seed,
            window,
            epoch_end: rows.last().unwrap().epoch_end,
            epochs,
            util,
            time_util,
            time,
            accepted: (0..k).map(|j| rows.iter().map(|r| r.accepted[j]).sum()).collect(),
            arrived: (0..k).map(|j| rows.iter().map(|r| r.arrived[j]).sum()).collect(),
            mean_reward: rows.iter().map(|r| r.mean_reward * r.epochs as f64).sum::<f64>() / epochs as f64,
        }
    }
}

/// One row per `interval` epochs of the log; a shorter final window is kept.
pub fn metrics_rows(log: &TrainLog, interval: usize) -> Result<Vec<MetricsRow>> {
    if interval == 0 {
        return Err(Error::Usage("record interval must be positive".into()));
    }
    Ok(log
        .records
        .chunks(interval)
        .enumerate()
        .map(|(w, recs)| MetricsRow::from_records(log, w, recs))
        .collect())
}

pub fn metrics_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["config_hash", "method", "seed", "window", "epoch_end", "epochs", "util_R", "util_C", "util_S", "util_mean", "time_util_R", "time_util_C", "time_util_S", "time"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=k).map(|i| format!("accept_ratio_{i}")));
    h.extend((1..=k).map(|i| format!("accepted_{i}")));
    h.extend((1..=k).map(|i| format!("arrived_{i}")));
    h.push("mean_reward".into());
    h
}

pub fn write_metrics<W: Write>(w: W, num_slices: usize, rows: &[MetricsRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(metrics_header(num_slices))?;
    for r in rows {
        let mut row = vec![
            r.config_hash.clone(),
            r.method.clone(),
            r.seed.to_string(),
            r.window.to_string(),
            r.epoch_end.to_string(),
            r.epochs.to_string(),
        ];
        row.extend(r.util.iter().map(|u| u.to_string()));
        row.push(r.mean_util().to_string());
        row.extend(r.time_util.iter().map(|u| u.to_string()));
        row.push(r.time.to_string());
        row.extend(r.acceptance().iter().map(|u| u.to_string()));
        row.extend(r.accepted.iter().map(|u| u.to_string()));
        row.extend(r.arrived.iter().map(|u| u.to_string()));
        row.push(r.mean_reward.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let k = header.iter().filter(|h| h.starts_with("accepted_")).count();
    if header.iter().collect::<Vec<_>>() != metrics_header(k) {
        return Err(Error::Config("not a metrics file: unexpected header".into()));
    }
    let f = |s: &str| -> Result<f64> { s.parse().map_err(|e| Error::Config(format!("metrics field {s:?}: {e}"))) };
    let u = |s: &str| -> Result<usize> { s.parse().map_err(|e| Error::Config(format!("metrics field {s:?}: {e}"))) };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ints = |off: usize| -> Result<Vec<usize>> { (off..off + k).map(|i| u(&rec[i])).collect() };
        rows.push(MetricsRow {
            config_hash: rec[0].to_string(),
            method: rec[1].to_string(),
            seed: u(&rec[2])? as u64,
            window: u(&rec[3])?,
            epoch_end: u(&rec[4])? as u64,
            epochs: u(&rec[5])?,
            util: [f(&rec[6])?, f(&rec[7])?, f(&rec[8])?],
            time_util: [f(&rec[10])?, f(&rec[11])?, f(&rec[12])?],
            time: f(&rec[13])?,
            accepted: ints(14 + k)?,
            arrived: ints(14 + 2 * k)?,
            mean_reward: f(&rec[14 + 3 * k])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::Greedy;
    use crate::sim::{Env, EnvConfig};

    fn greedy_log(epochs: u64, seed: u64) -> TrainLog {
        let cfg = EnvConfig::reference();
        let mut env = Env::new(cfg.clone(), seed).unwrap();
        let mut log = TrainLog::new(&cfg, "greedy", seed);
        for e in 0..epochs {
            let (a, out) = env.step_with(&mut Greedy).unwrap();
            log.records.push(EpochRecord::from_outcome(e, 0, &cfg, &a, &out));
        }
        log
    }

    #[test]
    fn rows_per_interval() {
        let log = greedy_log(1000, 1);
        let rows = metrics_rows(&log, 200).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4].epoch_end, 1000);
        for r in &rows {
            assert!(r.util.iter().chain(&r.time_util).all(|&u| (0.0..=1.0).contains(&u)));
            assert!(r.acceptance().iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
        assert!(metrics_rows(&greedy_log(0, 1), 200).unwrap().is_empty());
    }

    #[test]
    fn merge_matches_a_direct_wide_window() {
        let log = greedy_log(800, 2);
        let narrow = metrics_rows(&log, 200).unwrap();
        let wide = &metrics_rows(&log, 800).unwrap()[0];
        let merged = MetricsRow::merge(&narrow, 0);
        for x in 0..RESOURCES {
            assert!((merged.util[x] - wide.util[x]).abs() < 1e-12);
            assert!((merged.time_util[x] - wide.time_util[x]).abs() < 1e-12);
        }
        assert_eq!(merged.accepted, wide.accepted);
        assert!((merged.mean_reward - wide.mean_reward).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let rows = metrics_rows(&greedy_log(600, 3), 200).unwrap();
        let mut buf = Vec::new();
        write_metrics(&mut buf, 4, &rows).unwrap();
        let back = read_metrics(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn ratio_edge_cases() {
        assert_eq!(acceptance_ratio(0, 0), 0.0);
        assert_eq!(acceptance_ratio(3, 2), 1.0);
        assert_eq!(acceptance_ratio(1, 4), 0.25);
    }
}
