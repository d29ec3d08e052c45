//! Versioned JSON checkpoints for denoisers, n-gram models and NCE
//! energies. Floats are written in shortest round-trip form, so a saved
//! model reloads bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::energy::NceEnergy;
use crate::error::{EdlmError, Result};
use crate::models::{FactorizedDenoiser, NGramCounts, NGramModel};
use crate::schedule::NoiseSchedule;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelPayload {
    Denoiser { denoiser: FactorizedDenoiser },
    NGram { counts: NGramCounts },
    Nce { energy: NceEnergy },
}

impl ModelPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Denoiser { .. } => "denoiser",
            Self::NGram { .. } => "n-gram",
            Self::Nce { .. } => "nce",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub steps: usize,
    pub seed: u64,
    /// SHA-256 of the training token stream.
    pub corpus_digest: String,
    /// Schedule the model was trained under, where one applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<NoiseSchedule>,
    /// Sequence length of the training chunks, where one applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<usize>,
    /// Digest of the effective run configuration that produced the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    /// The effective run configuration itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub vocabulary: Vocabulary,
    pub meta: TrainingMeta,
    pub payload: ModelPayload,
}

impl Checkpoint {
    pub fn new(vocabulary: Vocabulary, meta: TrainingMeta, payload: ModelPayload) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            vocabulary,
            meta,
            payload,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| EdlmError::Checkpoint(format!("not a checkpoint: {e}")))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(EdlmError::Checkpoint(format!(
                    "checkpoint format version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(EdlmError::Checkpoint("missing format_version".into())),
        }
        serde_json::from_value(value).map_err(|e| EdlmError::Checkpoint(format!("malformed checkpoint: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| EdlmError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn mismatch(&self, want: &str) -> EdlmError {
        EdlmError::Checkpoint(format!("expected a {want} checkpoint, found {}", self.payload.kind()))
    }

    pub fn denoiser(&self) -> Result<&FactorizedDenoiser> {
        match &self.payload {
            ModelPayload::Denoiser { denoiser } => Ok(denoiser),
            _ => Err(self.mismatch("denoiser")),
        }
    }

    pub fn ngram(&self) -> Result<NGramModel> {
        match &self.payload {
            ModelPayload::NGram { counts } => NGramModel::from_counts(counts.clone()),
            _ => Err(self.mismatch("n-gram")),
        }
    }

    pub fn nce(&self) -> Result<&NceEnergy> {
        match &self.payload {
            ModelPayload::Nce { energy } => Ok(energy),
            _ => Err(self.mismatch("nce")),
        }
    }
}
