use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "slice-admission-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializable position of a ChaCha8 generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Word position as a decimal string; it does not fit a JSON number.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Config(format!("rng seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Config("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Config(format!("rng word position: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Self-describing JSON checkpoint around any serializable model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub model: T,
    #[serde(default)]
    pub rng: Option<RngState>,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl<T: Serialize + DeserializeOwned> Checkpoint<T> {
    pub fn new(kind: impl Into<String>, model: T) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: kind.into(),
            model,
            rng: None,
            meta: serde_json::Map::new(),
        }
    }

    pub fn with_rng(mut self, rng: &ChaCha8Rng) -> Self {
        self.rng = Some(RngState::capture(rng));
        self
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    /// Loads a checkpoint, checking the format tag and the model kind.
    pub fn load(path: impl AsRef<Path>, kind: &str) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let ck: Self = serde_json::from_reader(r)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.kind != kind {
            return Err(Error::Config(format!("expected a {kind} checkpoint, found {}", ck.kind)));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{PolicyNet, DEFAULT_HIDDEN};
    use crate::sim::EnvConfig;
    use rand::Rng;

    #[test]
    fn rng_state_round_trip_continues_the_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        rng.set_stream(3);
        for _ in 0..17 {
            let _: u64 = rng.random();
        }
        let state = RngState::capture(&rng);
        let mut restored = state.restore().unwrap();
        let a: Vec<u32> = (0..10).map(|_| rng.random()).collect();
        let b: Vec<u32> = (0..10).map(|_| restored.random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn policy_checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = PolicyNet::<f64>::new(&EnvConfig::reference(), &DEFAULT_HIDDEN, &mut rng).unwrap();
        Checkpoint::new("policy", net.clone()).with_rng(&rng).save(&path).unwrap();
        let back = Checkpoint::<PolicyNet<f64>>::load(&path, "policy").unwrap();
        assert_eq!(back.model, net);
        let x = [0.3; 8];
        assert_eq!(back.model.greedy(&x).unwrap(), net.greedy(&x).unwrap());
        assert!(matches!(
            Checkpoint::<PolicyNet<f64>>::load(&path, "value"),
            Err(Error::Config(_))
        ));
    }
}
