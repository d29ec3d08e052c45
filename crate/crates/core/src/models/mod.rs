//! x0 predictors (denoisers) and autoregressive models.

mod ar;
mod factorized;
mod simple;

pub use ar::{ar_fit, AutoregressiveModel, NGramCounts, NGramModel};
pub use factorized::{DenoiserTrainConfig, DEFAULT_CONTEXT_RADIUS, FactorizedDenoiser, TrainReport};
pub use simple::{DeltaDenoiser, FixedDenoiser, UniformDenoiser};

use rand::Rng;

use crate::error::{EdlmError, Result};
use crate::rng::{categorical_from_uniform, uniform};
use crate::seq::{Token, TokenSeq};

const ROW_TOLERANCE: f64 = 1e-9;

/// Per-position categorical distributions over the data vocabulary: the
/// prediction of `x0` given `x_t`. The mask id carries no mass.
///
/// Rows at unmasked positions of the `x_t` the output was built for are
/// one-hot on the observed token.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    len: usize,
    vocab_size: usize,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl DenoiserOutput {
    /// Builds the factorized predictor from raw scores: softmax rows at
    /// masked positions of `x_t`, one-hot copies elsewhere. `logits` is
    /// `L x V`, row-major.
    pub fn from_logits(x_t: &TokenSeq, logits: &[f64]) -> Result<Self> {
        let (len, v) = (x_t.len(), x_t.vocab_size());
        if logits.len() != len * v {
            return Err(EdlmError::Model(format!(
                "expected {} logits, got {}",
                len * v,
                logits.len()
            )));
        }
        if let Some(bad) = logits.iter().find(|x| !x.is_finite()) {
            return Err(EdlmError::Model(format!("non-finite logit {bad}")));
        }
        let mut log_probs = vec![f64::NEG_INFINITY; len * v];
        for i in 0..len {
            let row = &mut log_probs[i * v..(i + 1) * v];
            if x_t.is_masked_at(i) {
                let src = &logits[i * v..(i + 1) * v];
                let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + src.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
                for (dst, &z) in row.iter_mut().zip(src) {
                    *dst = z - lse;
                }
            } else {
                row[x_t.get(i) as usize] = 0.0;
            }
        }
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        Ok(Self {
            len,
            vocab_size: v,
            probs,
            log_probs,
        })
    }

    /// Builds the factorized predictor from explicit probability rows at
    /// masked positions (rows at unmasked positions are ignored and replaced
    /// by one-hot copies). Rows must be normalized within 1e-9.
    pub fn from_probs(x_t: &TokenSeq, probs: &[f64]) -> Result<Self> {
        let (len, v) = (x_t.len(), x_t.vocab_size());
        if probs.len() != len * v {
            return Err(EdlmError::Model(format!(
                "expected {} probabilities, got {}",
                len * v,
                probs.len()
            )));
        }
        let mut out = vec![0.0; len * v];
        for i in 0..len {
            let row = &mut out[i * v..(i + 1) * v];
            if x_t.is_masked_at(i) {
                let src = &probs[i * v..(i + 1) * v];
                if src.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(EdlmError::Model(format!("invalid probability in row {i}")));
                }
                row.copy_from_slice(src);
            } else {
                row[x_t.get(i) as usize] = 1.0;
            }
        }
        let log_probs = out.iter().map(|p| p.ln()).collect();
        let output = Self {
            len,
            vocab_size: v,
            probs: out,
            log_probs,
        };
        output.validate()?;
        Ok(output)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn probs_row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.vocab_size..(i + 1) * self.vocab_size]
    }

    pub fn log_probs_row(&self, i: usize) -> &[f64] {
        &self.log_probs[i * self.vocab_size..(i + 1) * self.vocab_size]
    }

    pub fn prob(&self, i: usize, token: Token) -> f64 {
        self.probs[i * self.vocab_size + token as usize]
    }

    /// Checks every row sums to one within 1e-9.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.len {
            let sum: f64 = self.probs_row(i).iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(EdlmError::Model(format!(
                    "denoiser row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(())
    }

    fn check_shape(&self, x: &TokenSeq) -> Result<()> {
        if x.len() != self.len || x.vocab_size() != self.vocab_size {
            return Err(EdlmError::precondition(format!(
                "sequence shape (L={}, V={}) does not match denoiser output (L={}, V={})",
                x.len(),
                x.vocab_size(),
                self.len,
                self.vocab_size
            )));
        }
        Ok(())
    }

    /// `log p_theta(x0 | x_t)`: the sum of `log mu_i(x0_i)` over masked
    /// positions of `x_t`. Unmasked positions contribute zero.
    pub fn log_prob_of(&self, x_t: &TokenSeq, x0: &TokenSeq) -> Result<f64> {
        self.check_shape(x_t)?;
        x_t.require_completion(x0)?;
        Ok(x_t
            .masked_positions()
            .map(|i| self.log_probs[i * self.vocab_size + x0.get(i) as usize])
            .sum())
    }

    /// Draws `x0 ~ p_theta(. | x_t)`, consuming one uniform per masked
    /// position, left to right. Unmasked positions are copied.
    pub fn sample_x0<R: Rng + ?Sized>(&self, x_t: &TokenSeq, rng: &mut R) -> Result<TokenSeq> {
        self.check_shape(x_t)?;
        let mut x0 = x_t.clone();
        for i in 0..self.len {
            if x_t.is_masked_at(i) {
                let tok = categorical_from_uniform(self.probs_row(i), uniform(rng));
                x0.set(i, tok as Token);
            }
        }
        Ok(x0)
    }
}

/// A factorized x0 predictor.
///
/// `noise_level` is the masking probability `1 - alpha(t)` at the time
/// being denoised; it is the only way time reaches a model.
pub trait Denoiser: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn predict(&self, x_t: &TokenSeq, noise_level: f64) -> Result<DenoiserOutput>;
}

/// Model-independent form of the factorized predictor: applies the copy
/// branch at unmasked positions and softmax at masked ones.
pub fn factorized_predict(x_t: &TokenSeq, logits: &[f64]) -> Result<DenoiserOutput> {
    DenoiserOutput::from_logits(x_t, logits)
}
