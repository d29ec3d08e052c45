use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserOutput};
use crate::diffusion::forward_sample;
use crate::error::{EdlmError, Result};
use crate::rng::uniform;
use crate::schedule::NoiseSchedule;
use crate::seq::TokenSeq;

pub const DEFAULT_CONTEXT_RADIUS: usize = 3;

/// Linear factorized denoiser over a symmetric context window.
///
/// The score for token `v` at position `i` is
/// `bias[v] + noise * time[v] + sum_d W[d, feat(i + d), v]` for offsets
/// `d` in `-r..=r`, `d != 0`, where `feat` is the token at that offset, the
/// mask id, or a padding id past either end of the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizedDenoiser {
    vocab_size: usize,
    radius: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 0.1,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Minibatch objective per step, in nats per token.
    pub losses: Vec<f64>,
}

impl FactorizedDenoiser {
    /// Zero-initialized model (uniform predictions).
    pub fn new(vocab_size: usize, radius: usize) -> Result<Self> {
        if vocab_size == 0 || radius == 0 {
            return Err(EdlmError::domain("denoiser needs V >= 1 and radius >= 1"));
        }
        let n = Self::param_count(vocab_size, radius);
        Ok(Self {
            vocab_size,
            radius,
            params: vec![0.0; n],
        })
    }

    pub fn from_params(vocab_size: usize, radius: usize, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(vocab_size, radius)?;
        if params.len() != m.params.len() {
            return Err(EdlmError::Model(format!(
                "expected {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    fn param_count(v: usize, r: usize) -> usize {
        2 * r * (v + 2) * v + 2 * v
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn feature_ids<'a>(
        &self,
        x_t: &'a TokenSeq,
        i: usize,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        let r = self.radius as isize;
        let (len, v) = (x_t.len() as isize, self.vocab_size);
        let pad = v + 1;
        let toks = x_t.tokens();
        (-r..=r).filter(|&d| d != 0).enumerate().map(move |(slot, d)| {
            let j = i as isize + d;
            let feat = if j < 0 || j >= len { pad } else { toks[j as usize] as usize };
            (slot, feat)
        })
    }

    #[inline]
    fn w_offset(&self, slot: usize, feat: usize) -> usize {
        (slot * (self.vocab_size + 2) + feat) * self.vocab_size
    }

    fn bias_offset(&self) -> usize {
        2 * self.radius * (self.vocab_size + 2) * self.vocab_size
    }

    fn row_logits(&self, x_t: &TokenSeq, i: usize, noise: f64, out: &mut [f64]) {
        let v = self.vocab_size;
        let b = self.bias_offset();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.params[b + k] + noise * self.params[b + v + k];
        }
        for (slot, feat) in self.feature_ids(x_t, i) {
            let w = &self.params[self.w_offset(slot, feat)..][..v];
            for (o, wk) in out.iter_mut().zip(w) {
                *o += wk;
            }
        }
    }

    /// Raw scores `f_theta(x_t)`, `L x V` row-major. Rows at unmasked
    /// positions are left at zero; the copy branch overrides them.
    pub fn logits(&self, x_t: &TokenSeq, noise_level: f64) -> Result<Vec<f64>> {
        if x_t.vocab_size() != self.vocab_size {
            return Err(EdlmError::precondition("vocabulary size mismatch"));
        }
        let v = self.vocab_size;
        let mut logits = vec![0.0; x_t.len() * v];
        for i in x_t.masked_positions() {
            self.row_logits(x_t, i, noise_level, &mut logits[i * v..(i + 1) * v]);
        }
        Ok(logits)
    }

    /// Loss `weight * sum_{masked i} -log mu_i(x0_i)` for one example and,
    /// if `grad` is given, adds `scale` times its gradient into it.
    pub fn example_loss(
        &self,
        x0: &TokenSeq,
        x_t: &TokenSeq,
        noise_level: f64,
        weight: f64,
        grad: Option<(&mut [f64], f64)>,
    ) -> Result<f64> {
        x_t.require_completion(x0)?;
        let v = self.vocab_size;
        let mut row = vec![0.0; v];
        let mut loss = 0.0;
        let mut grad = grad;
        let b = self.bias_offset();
        for i in x_t.masked_positions() {
            self.row_logits(x_t, i, noise_level, &mut row);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&s| (s - max).exp()).sum();
            let target = x0.get(i) as usize;
            loss += weight * (z.ln() + max - row[target]);
            if let Some((g, scale)) = grad.as_mut() {
                // d/dlogit_k = weight * (p_k - 1[k = target])
                for (k, s) in row.iter_mut().enumerate() {
                    let p = (*s - max).exp() / z;
                    *s = *scale * weight * (p - if k == target { 1.0 } else { 0.0 });
                }
                for k in 0..v {
                    g[b + k] += row[k];
                    g[b + v + k] += noise_level * row[k];
                }
                for (slot, feat) in self.feature_ids(x_t, i) {
                    let off = self.w_offset(slot, feat);
                    for k in 0..v {
                        g[off + k] += row[k];
                    }
                }
            }
        }
        Ok(loss)
    }

    /// One Monte Carlo draw of the continuous-time training loss for `x0`:
    /// `t ~ U[0,1]`, `x_t ~ q(. | x0)`, weight `-alpha'(t) / (1 - alpha(t))`.
    pub fn sample_loss<R: Rng + ?Sized>(
        &self,
        x0: &TokenSeq,
        schedule: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<f64> {
        let t = uniform(rng);
        let x_t = forward_sample(x0, t, schedule, rng)?;
        let noise = schedule.noise_level(t)?;
        let weight = -schedule.alpha_prime(t)? / noise;
        self.example_loss(x0, &x_t, noise, weight, None)
    }

    /// Plain SGD on the continuous-time masked cross-entropy. Times within a
    /// minibatch are stratified over `[0, 1]`.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        corpus: &[TokenSeq],
        schedule: &NoiseSchedule,
        cfg: &DenoiserTrainConfig,
        rng: &mut R,
    ) -> Result<TrainReport> {
        if corpus.is_empty() {
            return Err(EdlmError::Data("empty training corpus".into()));
        }
        if cfg.batch_size == 0 {
            return Err(EdlmError::Config("batch size must be positive".into()));
        }
        let mut report = TrainReport::default();
        let mut grad = vec![0.0; self.params.len()];
        for step in 0..cfg.steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut total = 0.0;
            let mut tokens = 0usize;
            let bsz = cfg.batch_size;
            for b in 0..bsz {
                let x0 = &corpus[rng.random_range(0..corpus.len())];
                tokens += x0.len();
                let t = (b as f64 + uniform(rng)) / bsz as f64;
                let x_t = forward_sample(x0, t, schedule, rng)?;
                let noise = schedule.noise_level(t)?;
                let weight = -schedule.alpha_prime(t)? / noise;
                total += self.example_loss(x0, &x_t, noise, weight, Some((&mut grad, 1.0)))?;
            }
            let norm = tokens.max(1) as f64;
            let loss = total / norm;
            if !loss.is_finite() {
                return Err(EdlmError::TrainingDiverged { step, loss });
            }
            for (p, g) in self.params.iter_mut().zip(&grad) {
                *p -= cfg.lr * g / norm;
            }
            report.losses.push(loss);
        }
        Ok(report)
    }
}

impl Denoiser for FactorizedDenoiser {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, x_t: &TokenSeq, noise_level: f64) -> Result<DenoiserOutput> {
        DenoiserOutput::from_logits(x_t, &self.logits(x_t, noise_level)?)
    }
}
