use serde::{Deserialize, Serialize};

use crate::agents::TrainLog;
use crate::error::{Error, Result};
use crate::sim::RESOURCES;

pub const EARLY_HORIZON: usize = 4000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilComparison {
    pub horizon: usize,
    /// Seed-averaged utilization per resource over the horizon.
    pub a: [f64; RESOURCES],
    pub b: [f64; RESOURCES],
    /// `(a - b) / b` per resource.
    pub relative: [f64; RESOURCES],
    /// Relative improvement of the three-resource mean.
    pub relative_mean: f64,
}

/// Seed-averaged per-resource utilization over the first `horizon`
/// learning epochs. Critic-only epochs of warm-started runs are skipped.
pub fn early_utilization(logs: &[TrainLog], horizon: usize) -> Result<[f64; RESOURCES]> {
    if logs.is_empty() {
        return Err(Error::Usage("no logs to compare".into()));
    }
    let mut out = [0.0; RESOURCES];
    for log in logs {
        let joint = log.joint_phase();
        if joint.records.len() < horizon {
            return Err(Error::Range(format!(
                "horizon {horizon} exceeds the {} learning epochs of {} seed {}",
                joint.records.len(),
                log.method,
                log.seed
            )));
        }
        for r in &joint.records[..horizon] {
            for x in 0..RESOURCES {
                out[x] += r.util[x] / (horizon * logs.len()) as f64;
            }
        }
    }
    Ok(out)
}

/// Relative utilization improvement of runs `a` over runs `b` during the
/// first `horizon` epochs.
pub fn compare_early_utilization(a: &[TrainLog], b: &[TrainLog], horizon: usize) -> Result<UtilComparison> {
    if horizon == 0 {
        return Err(Error::Range("horizon must be positive".into()));
    }
    let hashes: Vec<&str> = a.iter().chain(b).map(|l| l.config_hash.as_str()).collect();
    if hashes.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Alignment("logs come from different configs".into()));
    }
    let ua = early_utilization(a, horizon)?;
    let ub = early_utilization(b, horizon)?;
    let rel = |x: f64, y: f64| -> Result<f64> {
        if y > 0.0 {
            Ok((x - y) / y)
        } else {
            Err(Error::Range("reference utilization is zero".into()))
        }
    };
    let mut relative = [0.0; RESOURCES];
    for x in 0..RESOURCES {
        relative[x] = rel(ua[x], ub[x])?;
    }
    let mean = |u: &[f64; RESOURCES]| u.iter().sum::<f64>() / RESOURCES as f64;
    Ok(UtilComparison {
        horizon,
        relative_mean: rel(mean(&ua), mean(&ub))?,
        a: ua,
        b: ub,
        relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::EpochRecord;
    use crate::baselines::{Greedy, RandomValid};
    use crate::policy::Policy;
    use crate::sim::{Env, EnvConfig};

    fn run<P: Policy>(mut p: P, method: &str, seed: u64, n: u64) -> TrainLog {
        let cfg = EnvConfig::reference();
        let mut env = Env::new(cfg.clone(), seed).unwrap();
        let mut log = TrainLog::new(&cfg, method, seed);
        for e in 0..n {
            let (a, out) = env.step_with(&mut p).unwrap();
            log.records.push(EpochRecord::from_outcome(e, 0, &cfg, &a, &out));
        }
        log
    }

    #[test]
    fn identical_logs_show_no_improvement() {
        let logs = vec![run(Greedy, "g", 1, 500), run(Greedy, "g", 2, 500)];
        let c = compare_early_utilization(&logs, &logs, 500).unwrap();
        assert_eq!(c.relative, [0.0; RESOURCES]);
        assert_eq!(c.relative_mean, 0.0);
    }

    #[test]
    fn greedy_beats_random_early() {
        let g = vec![run(Greedy, "g", 1, 1000)];
        let r = vec![run(RandomValid::new(1), "r", 1, 1000)];
        assert!(compare_early_utilization(&g, &r, 1000).unwrap().relative_mean > 0.0);
    }

    #[test]
    fn horizon_beyond_logs_is_a_range_error() {
        let logs = vec![run(Greedy, "g", 1, 100)];
        assert!(matches!(compare_early_utilization(&logs, &logs, 101), Err(Error::Range(_))));
    }

    #[test]
    fn critic_only_epochs_do_not_count() {
        let mut log = run(Greedy, "g", 1, 300);
        for r in &mut log.records[..100] {
            r.phase = 2;
        }
        assert!(early_utilization(&[log.clone()], 200).is_ok());
        assert!(matches!(early_utilization(&[log], 201), Err(Error::Range(_))));
    }
}
