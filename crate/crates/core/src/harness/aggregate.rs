use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsRow;
use crate::error::{Error, Result};

/// Lower and upper quantiles of the cross-seed spread band.
pub const BAND: (f64, f64) = (0.125, 0.875);

/// Quantile with linear interpolation between order statistics (the
/// common "linear" definition: position `q (n - 1)`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lo: quantile(values, BAND.0),
            hi: quantile(values, BAND.1),
        }
    }
}

/// Cross-seed statistics of one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub window: usize,
    pub epoch_end: u64,
    pub seeds: usize,
    /// Metric name and band, in a fixed order.
    pub metrics: Vec<(String, Band)>,
}

fn metric_values(row: &MetricsRow) -> Vec<(String, f64)> {
    let mut m = vec![
        ("util_R".to_string(), row.util[0]),
        ("util_C".to_string(), row.util[1]),
        ("util_S".to_string(), row.util[2]),
        ("util_mean".to_string(), row.mean_util()),
        ("time_util_R".to_string(), row.time_util[0]),
        ("time_util_C".to_string(), row.time_util[1]),
        ("time_util_S".to_string(), row.time_util[2]),
    ];
    for (j, a) in row.acceptance().into_iter().enumerate() {
        m.push((format!("accept_ratio_{}", j + 1), a));
    }
    m.push(("mean_reward".to_string(), row.mean_reward));
    m
}

/// Merges every `group` consecutive rows of a run into one.
pub fn coarsen(rows: &[MetricsRow], group: usize) -> Vec<MetricsRow> {
    rows.chunks(group.max(1))
        .enumerate()
        .map(|(w, c)| MetricsRow::merge(c, w))
        .collect()
}

/// Cross-seed mean and spread band per window. Every run must share the
/// config hash, the window layout and the slice count.
pub fn aggregate(runs: &[Vec<MetricsRow>]) -> Result<Vec<AggregateRow>> {
    if runs.len() < 2 {
        return Err(Error::Usage(format!("aggregation needs at least 2 runs, got {}", runs.len())));
    }
    let first = &runs[0];
    let hash = first.first().map(|r| r.config_hash.clone());
    for run in runs {
        if run.len() != first.len() {
            return Err(Error::Alignment(format!(
                "runs have {} and {} windows",
                first.len(),
                run.len()
            )));
        }
        for (a, b) in run.iter().zip(first) {
            if Some(&a.config_hash) != hash.as_ref() {
                return Err(Error::Alignment(format!(
                    "config hash {} differs from {}",
                    a.config_hash,
                    hash.clone().unwrap_or_default()
                )));
            }
            if a.window != b.window || a.epoch_end != b.epoch_end || a.accepted.len() != b.accepted.len() {
                return Err(Error::Alignment(format!(
                    "window {} (epoch {}) does not line up with window {} (epoch {})",
                    a.window, a.epoch_end, b.window, b.epoch_end
                )));
            }
        }
    }
    Ok((0..first.len())
        .map(|w| {
            let per_run: Vec<Vec<(String, f64)>> = runs.iter().map(|r| metric_values(&r[w])).collect();
            let metrics = per_run[0]
                .iter()
                .enumerate()
                .map(|(i, (name, _))| {
                    let vals: Vec<f64> = per_run.iter().map(|m| m[i].1).collect();
                    (name.clone(), Band::of(&vals))
                })
                .collect();
            AggregateRow {
                window: w,
                epoch_end: first[w].epoch_end,
                seeds: runs.len(),
                metrics,
            }
        })
        .collect())
}

pub fn write_aggregate<W: Write>(w: W, config_hash: &str, rows: &[AggregateRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["config_hash".to_string(), "window".into(), "epoch_end".into(), "seeds".into()];
    if let Some(r) = rows.first() {
        for (name, _) in &r.metrics {
            header.extend([format!("{name}_mean"), format!("{name}_lo"), format!("{name}_hi")]);
        }
    }
    out.write_record(&header)?;
    for r in rows {
        let mut row = vec![
            config_hash.to_string(),
            r.window.to_string(),
            r.epoch_end.to_string(),
            r.seeds.to_string(),
        ];
        for (_, b) in &r.metrics {
            row.extend([b.mean.to_string(), b.lo.to_string(), b.hi.to_string()]);
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(hash: &str, window: usize, util: f64) -> MetricsRow {
        MetricsRow {
            config_hash: hash.into(),
            method: "m".into(),
            seed: 0,
            window,
            epoch_end: 200 * (window as u64 + 1),
            epochs: 200,
            util: [util; 3],
            time_util: [util; 3],
            time: 1.0,
            accepted: vec![1, 1],
            arrived: vec![2, 2],
            mean_reward: util,
        }
    }

    #[test]
    fn quantiles_of_one_to_four() {
        let v = [3.0, 1.0, 4.0, 2.0];
        let b = Band::of(&v);
        assert_eq!(b.mean, 2.5);
        assert!((b.lo - 1.375).abs() < 1e-12);
        assert!((b.hi - 3.625).abs() < 1e-12);
    }

    #[test]
    fn identical_runs_have_zero_width() {
        let runs = vec![vec![row("h", 0, 0.5)]; 4];
        let agg = aggregate(&runs).unwrap();
        for (_, b) in &agg[0].metrics {
            assert_eq!(b.lo, b.hi);
            assert_eq!(b.mean, b.lo);
        }
    }

    #[test]
    fn band_contains_the_mean() {
        let runs: Vec<Vec<MetricsRow>> = [0.1, 0.9, 0.2, 0.25]
            .iter()
            .map(|&u| vec![row("h", 0, u), row("h", 1, u * u)])
            .collect();
        for r in aggregate(&runs).unwrap() {
            for (_, b) in r.metrics {
                assert!(b.lo <= b.mean && b.mean <= b.hi);
            }
        }
    }

    #[test]
    fn misaligned_or_mixed_runs_are_refused() {
        let a = vec![row("h", 0, 0.1), row("h", 1, 0.2)];
        let short = vec![row("h", 0, 0.1)];
        assert!(matches!(aggregate(&[a.clone(), short]), Err(Error::Alignment(_))));
        let other = vec![row("x", 0, 0.1), row("x", 1, 0.2)];
        assert!(matches!(aggregate(&[a.clone(), other]), Err(Error::Alignment(_))));
        assert!(matches!(aggregate(&[a]), Err(Error::Usage(_))));
    }
}
