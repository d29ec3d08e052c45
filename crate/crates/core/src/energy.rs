//! Residual energies `E(x0, x_t, t)` that reweight the factorized
//! denoiser: `p(x0 | x_t) = mu(x0 | x_t) exp(-E) / Z(x_t)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{EdlmError, Result};
use crate::models::{AutoregressiveModel, DenoiserOutput};
use crate::seq::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyKind {
    None,
    Ar,
    CoAr,
    Nce,
}

impl EnergyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "ar" => Ok(Self::Ar),
            "coar" => Ok(Self::CoAr),
            "nce" => Ok(Self::Nce),
            other => Err(EdlmError::Config(format!("unknown energy kind '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Ar => "ar",
            Self::CoAr => "coar",
            Self::Nce => "nce",
        }
    }
}

#[derive(Clone)]
pub enum EnergyModel {
    /// `E = 0`: the joint model is the base denoiser.
    Zero,
    /// `-log p_AR(x0) + log mu(x0 | x_t)`.
    Ar(Arc<dyn AutoregressiveModel>),
    /// Carry-over variant: AR factors at unmasked positions are fixed to 1,
    /// which makes the joint model self-normalized.
    CoAr(Arc<dyn AutoregressiveModel>),
    Nce(NceEnergy),
}

impl fmt::Debug for EnergyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Nce(e) => f.debug_tuple("Nce").field(e).finish(),
            other => write!(f, "{}", other.kind().as_str()),
        }
    }
}

impl EnergyModel {
    pub fn kind(&self) -> EnergyKind {
        match self {
            Self::Zero => EnergyKind::None,
            Self::Ar(_) => EnergyKind::Ar,
            Self::CoAr(_) => EnergyKind::CoAr,
            Self::Nce(_) => EnergyKind::Nce,
        }
    }

    /// True when `Z(x_t) = 1` holds exactly, so `log Z` needs no estimate.
    pub fn is_self_normalized(&self) -> bool {
        matches!(self, Self::Zero | Self::CoAr(_))
    }

    /// Energy of candidate `x0` for the noisy sequence `x_t`. `mu` must be
    /// the denoiser output for `x_t`.
    pub fn energy(
        &self,
        x0: &TokenSeq,
        x_t: &TokenSeq,
        mu: &DenoiserOutput,
        noise_level: f64,
    ) -> Result<f64> {
        match self {
            Self::Zero => {
                x_t.require_completion(x0)?;
                Ok(0.0)
            }
            Self::Ar(ar) => energy_ar(ar.as_ref(), mu, x0, x_t),
            Self::CoAr(ar) => energy_coar(ar.as_ref(), mu, x0, x_t),
            Self::Nce(nce) => {
                x_t.require_completion(x0)?;
                nce.energy(x0, x_t, noise_level)
            }
        }
    }
}

/// AR residual energy `-log p_AR(x0) + log mu(x0 | x_t)`.
pub fn energy_ar(
    ar: &dyn AutoregressiveModel,
    mu: &DenoiserOutput,
    x0: &TokenSeq,
    x_t: &TokenSeq,
) -> Result<f64> {
    let log_mu = mu.log_prob_of(x_t, x0)?;
    Ok(-ar.log_prob(x0)? + log_mu)
}

/// Carry-over AR energy: like [`energy_ar`], but only the AR conditionals
/// at masked positions of `x_t` enter.
pub fn energy_coar(
    ar: &dyn AutoregressiveModel,
    mu: &DenoiserOutput,
    x0: &TokenSeq,
    x_t: &TokenSeq,
) -> Result<f64> {
    let log_mu = mu.log_prob_of(x_t, x0)?;
    let toks = x0.tokens();
    let log_ar: f64 = x_t
        .masked_positions()
        .map(|i| ar.cond_log_prob(&toks[..i], toks[i]))
        .sum();
    Ok(-log_ar + log_mu)
}

/// Sum of AR conditionals at the unmasked positions of `x_t`, the term
/// that separates [`energy_coar`] from [`energy_ar`]:
/// `energy_coar = energy_ar + carried_log_prob`.
pub fn carried_log_prob(ar: &dyn AutoregressiveModel, x0: &TokenSeq, x_t: &TokenSeq) -> Result<f64> {
    x_t.require_completion(x0)?;
    let toks = x0.tokens();
    Ok((0..toks.len())
        .filter(|&i| !x_t.is_masked_at(i))
        .map(|i| ar.cond_log_prob(&toks[..i], toks[i]))
        .sum())
}

/// `log mu(x0 | x_t) - E(x0, x_t, t)`: the joint model up to `log Z(x_t)`.
pub fn joint_logprob_unnormalized(
    energy: &EnergyModel,
    mu: &DenoiserOutput,
    x0: &TokenSeq,
    x_t: &TokenSeq,
    noise_level: f64,
) -> Result<f64> {
    Ok(mu.log_prob_of(x_t, x0)? - energy.energy(x0, x_t, mu, noise_level)?)
}

/// Learnable energy: a linear function of pooled local features of
/// `(x0, x_t, t)`.
///
/// Features, each averaged over the `L` positions:
/// token identity split by whether `x_t` masked the position; token pairs
/// at distance 1 and 2 split by whether either end was masked; and three
/// scalars (constant, noise level, masked fraction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NceEnergy {
    vocab_size: usize,
    params: Vec<f64>,
}

impl NceEnergy {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(EdlmError::domain("NCE energy needs V >= 1"));
        }
        Ok(Self {
            vocab_size,
            params: vec![0.0; Self::feature_count(vocab_size)],
        })
    }

    pub fn from_params(vocab_size: usize, params: Vec<f64>) -> Result<Self> {
        let mut e = Self::new(vocab_size)?;
        if params.len() != e.params.len() {
            return Err(EdlmError::Model(format!(
                "expected {} NCE parameters, got {}",
                e.params.len(),
                params.len()
            )));
        }
        e.params = params;
        Ok(e)
    }

    pub fn feature_count(v: usize) -> usize {
        2 * v + 4 * v * v + 3
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Sparse pooled feature vector as `(index, value)` pairs; indices may
    /// repeat.
    pub fn features(&self, x0: &TokenSeq, x_t: &TokenSeq, noise_level: f64) -> Result<Vec<(usize, f64)>> {
        if !noise_level.is_finite() {
            return Err(EdlmError::Model(format!("non-finite noise level {noise_level}")));
        }
        if x0.vocab_size() != self.vocab_size || x0.len() != x_t.len() {
            return Err(EdlmError::precondition("sequence shape does not match NCE energy"));
        }
        let (v, len) = (self.vocab_size, x0.len());
        if len == 0 {
            return Ok(vec![(Self::feature_count(v) - 3, 1.0)]);
        }
        let w = 1.0 / len as f64;
        let toks = x0.tokens();
        let masked: Vec<bool> = (0..len).map(|i| x_t.is_masked_at(i)).collect();
        let mut feats = Vec::with_capacity(3 * len + 3);
        for i in 0..len {
            feats.push((masked[i] as usize * v + toks[i] as usize, w));
        }
        for (dist, base) in [(1usize, 2 * v), (2, 2 * v + 2 * v * v)] {
            for i in 0..len.saturating_sub(dist) {
                let flag = (masked[i] || masked[i + dist]) as usize;
                let idx = base + flag * v * v + toks[i] as usize * v + toks[i + dist] as usize;
                feats.push((idx, w));
            }
        }
        let scalars = 2 * v + 4 * v * v;
        let frac = masked.iter().filter(|&&m| m).count() as f64 * w;
        feats.push((scalars, 1.0));
        feats.push((scalars + 1, noise_level));
        feats.push((scalars + 2, frac));
        Ok(feats)
    }

    pub fn energy(&self, x0: &TokenSeq, x_t: &TokenSeq, noise_level: f64) -> Result<f64> {
        x0.require_clean("x0")?;
        let e: f64 = self
            .features(x0, x_t, noise_level)?
            .into_iter()
            .map(|(i, f)| self.params[i] * f)
            .sum();
        if !e.is_finite() {
            return Err(EdlmError::Model(format!("non-finite NCE energy {e}")));
        }
        Ok(e)
    }

    /// Adds `scale * dE/dphi` into `grad`.
    pub fn accumulate_gradient(
        &self,
        x0: &TokenSeq,
        x_t: &TokenSeq,
        noise_level: f64,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        for (i, f) in self.features(x0, x_t, noise_level)? {
            grad[i] += scale * f;
        }
        Ok(())
    }
}
