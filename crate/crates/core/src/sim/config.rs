use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of resource types: radio, compute, storage.
pub const RESOURCES: usize = 3;

/// Slack allowed when comparing summed resource fractions against capacity.
pub const RESOURCE_EPS: f64 = 1e-12;

pub type ResourceVec = [f64; RESOURCES];

/// Traffic and resource profile of a single slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Poisson arrival rate of service requests.
    pub arrival_rate: f64,
    /// Mean of the exponential service duration.
    pub mean_service_time: f64,
    /// Deterministic time a request may wait in queue before it abandons.
    pub hold_time: f64,
    /// Fraction of total radio / compute / storage held by one running service.
    pub resource: ResourceVec,
}

impl SliceParams {
    pub fn service_rate(&self) -> f64 {
        1.0 / self.mean_service_time
    }

    /// Most services of this slice that fit in an otherwise idle network.
    pub fn capacity_bound(&self) -> usize {
        self.resource
            .iter()
            .map(|&r| ((1.0 + RESOURCE_EPS) / r).floor() as usize)
            .min()
            .unwrap_or(0)
    }

    /// Inner product of the resource vector with a charge vector.
    pub fn unit_revenue(&self, charge: &ResourceVec) -> f64 {
        self.resource.iter().zip(charge).map(|(r, c)| r * c).sum()
    }
}

/// Full environment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub slices: Vec<SliceParams>,
    /// Largest per-slice admission count in one decision.
    pub n_max: usize,
    /// Revenue per unit of each resource per unit time.
    pub charge: ResourceVec,
    /// Per-epoch penalty for an invalid action.
    pub penalty: f64,
    /// Queue truncation used only when enumerating a finite state space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_cap: Option<usize>,
}

impl EnvConfig {
    /// The four-slice setting (mMTC, eMBB, URLLC, other) with storage-revenue charges.
    pub fn reference() -> Self {
        let slice = |name: &str, lambda, mean, hold, r: ResourceVec| SliceParams {
            name: Some(name.to_string()),
            arrival_rate: lambda,
            mean_service_time: mean,
            hold_time: hold,
            resource: r,
        };
        EnvConfig {
            slices: vec![
                slice("mMTC", 4.0, 3.2, 0.8, [0.02, 0.03, 0.04]),
                slice("eMBB", 3.6, 4.0, 1.0, [0.04, 0.02, 0.016]),
                slice("URLLC", 3.2, 1.6, 0.2, [0.016, 0.04, 0.016]),
                slice("other", 2.8, 2.4, 0.6, [0.024, 0.024, 0.024]),
            ],
            n_max: 3,
            charge: [0.0, 0.0, 100.0],
            penalty: 2.0,
            queue_cap: None,
        }
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    /// Number of actions in the unrestricted action space, `(n_max + 1)^K`.
    pub fn action_count(&self) -> usize {
        (self.n_max + 1).pow(self.slices.len() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slices.is_empty() {
            return Err(Error::Config("at least one slice is required".into()));
        }
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        for (k, s) in self.slices.iter().enumerate() {
            if !(s.arrival_rate > 0.0 && s.arrival_rate.is_finite()) {
                return Err(Error::Config(format!("slice {k}: arrival_rate must be positive")));
            }
            if !(s.mean_service_time > 0.0 && s.mean_service_time.is_finite()) {
                return Err(Error::Config(format!("slice {k}: mean_service_time must be positive")));
            }
            if !(s.hold_time >= 0.0 && s.hold_time.is_finite()) {
                return Err(Error::Config(format!("slice {k}: hold_time must be nonnegative")));
            }
            if s.resource.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
                return Err(Error::Config(format!("slice {k}: resource fractions must lie in (0, 1]")));
            }
        }
        if self.charge.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::Config("charge components must be nonnegative".into()));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::Config("penalty must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: EnvConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short content hash; embedded in every output file.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.slices.iter().map(|s| s.arrival_rate).sum()
    }

    /// Per-slice scale for service counts in network inputs.
    pub fn service_scale(&self) -> Vec<f64> {
        self.slices
            .iter()
            .map(|s| s.capacity_bound().max(1) as f64)
            .collect()
    }

    pub fn slice_name(&self, k: usize) -> String {
        self.slices[k]
            .name
            .clone()
            .unwrap_or_else(|| format!("slice{}", k + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_valid() {
        let cfg = EnvConfig::reference();
        cfg.validate().unwrap();
        assert_eq!(cfg.action_count(), 256);
        assert!((cfg.total_arrival_rate() - 13.6).abs() < 1e-12);
    }

    #[test]
    fn zero_arrival_rate_is_rejected() {
        let mut cfg = EnvConfig::reference();
        cfg.slices[0].arrival_rate = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn empty_slice_list_is_rejected() {
        let mut cfg = EnvConfig::reference();
        cfg.slices.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let cfg = EnvConfig::reference();
        let back = EnvConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn parses_handwritten_toml() {
        let text = r#"
            n_max = 2
            charge = [1.0, 0.0, 0.0]
            penalty = 0.5

            [[slices]]
            arrival_rate = 1.0
            mean_service_time = 2.0
            hold_time = 0.5
            resource = [0.5, 0.5, 0.5]
        "#;
        let cfg = EnvConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.num_slices(), 1);
        assert_eq!(cfg.slices[0].capacity_bound(), 2);
        assert_eq!(cfg.slice_name(0), "slice1");
    }

    #[test]
    fn capacity_bounds_for_reference() {
        let cfg = EnvConfig::reference();
        let caps: Vec<_> = cfg.slices.iter().map(|s| s.capacity_bound()).collect();
        assert_eq!(caps, vec![25, 25, 25, 41]);
    }
}
