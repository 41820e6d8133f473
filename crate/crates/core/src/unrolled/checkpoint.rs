use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{History, TrainConfig, UnrolledModel, Variant};
use crate::error::{Error, Result};
use crate::operators::ForwardModel;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// On-disk form of a trained network.
///
/// Parameters are stored unconstrained as shortest round-trip decimal
/// strings, so reloading reproduces them bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub variant: Variant,
    pub k: usize,
    pub cg_iters: usize,
    /// Hash of the forward model the network was trained for.
    pub forward_fingerprint: String,
    pub layers: Vec<Vec<String>>,
    pub shared: Vec<String>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub history: Option<History>,
}

/// Digest of everything a network's parameters depend on in `H` and `Kπ`.
pub fn forward_fingerprint(op: &ForwardModel) -> String {
    let mut h = Sha256::new();
    h.update(b"forward-v1");
    h.update((op.n() as u64).to_le_bytes());
    h.update((op.kernel().offset as i64).to_le_bytes());
    for t in &op.kernel().taps {
        h.update(t.to_le_bytes());
    }
    h.update(op.sigma_g().to_le_bytes());
    hex::encode(h.finalize())
}

fn encode(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| format!("{x:?}")).collect()
}

fn decode(v: &[String]) -> Result<Vec<f64>> {
    v.iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Incompatible(format!("bad parameter value {s:?}")))
        })
        .collect()
}

impl Checkpoint {
    pub fn from_model(model: &UnrolledModel, train_config: Option<TrainConfig>, history: Option<History>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            variant: model.variant(),
            k: model.k(),
            cg_iters: model.cg_iters(),
            forward_fingerprint: forward_fingerprint(model.op()),
            layers: model.unconstrained_layers().iter().map(|r| encode(r)).collect(),
            shared: encode(model.unconstrained_shared()),
            train_config,
            history,
        }
    }

    /// Rebuilds the network on `op`, which must match the one it was trained
    /// for.
    pub fn into_model(&self, op: Arc<ForwardModel>) -> Result<UnrolledModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Incompatible(format!(
                "checkpoint format {} (expected {CHECKPOINT_FORMAT})",
                self.format
            )));
        }
        let fp = forward_fingerprint(&op);
        if fp != self.forward_fingerprint {
            return Err(Error::Incompatible(
                "checkpoint was trained for a different forward model".into(),
            ));
        }
        if self.layers.len() != self.k {
            return Err(Error::Incompatible(format!(
                "checkpoint declares K = {} but stores {} layers",
                self.k,
                self.layers.len()
            )));
        }
        let layers = self.layers.iter().map(|r| decode(r)).collect::<Result<Vec<_>>>()?;
        let shared = decode(&self.shared)?;
        UnrolledModel::from_unconstrained(self.variant, layers, shared, self.cg_iters, op)
            .map_err(|e| Error::Incompatible(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}
