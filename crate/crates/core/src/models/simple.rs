use super::{Denoiser, DenoiserOutput};
use crate::error::{EdlmError, Result};
use crate::seq::TokenSeq;

/// Predicts the uniform distribution at every masked position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformDenoiser {
    pub vocab_size: usize,
}

impl Denoiser for UniformDenoiser {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, x_t: &TokenSeq, _noise_level: f64) -> Result<DenoiserOutput> {
        DenoiserOutput::from_logits(x_t, &vec![0.0; x_t.len() * self.vocab_size])
    }
}

/// Puts all mass on a single target sequence: the exact denoiser for a
/// one-sequence data distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaDenoiser {
    target: TokenSeq,
}

impl DeltaDenoiser {
    pub fn new(target: TokenSeq) -> Result<Self> {
        target.require_clean("delta target")?;
        Ok(Self { target })
    }
}

impl Denoiser for DeltaDenoiser {
    fn vocab_size(&self) -> usize {
        self.target.vocab_size()
    }

    fn predict(&self, x_t: &TokenSeq, _noise_level: f64) -> Result<DenoiserOutput> {
        if x_t.len() != self.target.len() {
            return Err(EdlmError::precondition("length differs from delta target"));
        }
        let v = self.vocab_size();
        let mut probs = vec![0.0; x_t.len() * v];
        for (i, &tok) in self.target.tokens().iter().enumerate() {
            probs[i * v + tok as usize] = 1.0;
        }
        DenoiserOutput::from_probs(x_t, &probs)
    }
}

/// Position-wise fixed categorical rows, independent of `x_t` and time.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDenoiser {
    vocab_size: usize,
    rows: Vec<f64>,
}

impl FixedDenoiser {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let vocab_size = rows.first().map_or(0, Vec::len);
        if vocab_size == 0 || rows.iter().any(|r| r.len() != vocab_size) {
            return Err(EdlmError::Model("rows must be nonempty and equal length".into()));
        }
        Ok(Self {
            vocab_size,
            rows: rows.into_iter().flatten().collect(),
        })
    }

    /// The same row at every one of `len` positions.
    pub fn repeated(row: Vec<f64>, len: usize) -> Result<Self> {
        Self::new(vec![row; len])
    }
}

impl Denoiser for FixedDenoiser {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, x_t: &TokenSeq, _noise_level: f64) -> Result<DenoiserOutput> {
        DenoiserOutput::from_probs(x_t, &self.rows)
    }
}
