//! Noise contrastive training of the feature energy against a frozen
//! denoiser: positives are clean data, negatives are factorized samples
//! at the same noise level.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::forward_sample;
use crate::energy::NceEnergy;
use crate::error::{EdlmError, Result};
use crate::eval::standard_error;
use crate::models::Denoiser;
use crate::rng::uniform;
use crate::schedule::NoiseSchedule;
use crate::seq::TokenSeq;

/// One positive/negative pair sharing a noisy input.
#[derive(Debug, Clone, PartialEq)]
pub struct NceBatch {
    pub t: f64,
    pub noise_level: f64,
    pub x_t: TokenSeq,
    /// Positive: the clean sequence itself.
    pub x_plus: TokenSeq,
    /// Negative: a draw from the denoiser given `x_t`.
    pub x_minus: TokenSeq,
}

impl NceBatch {
    /// Draws `t ~ U[0, 1]`, `x_t ~ q(. | x0)` and a negative from the
    /// denoiser at the same `t`.
    pub fn draw<R: Rng + ?Sized>(
        x0: &TokenSeq,
        denoiser: &dyn Denoiser,
        schedule: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        let t = uniform(rng);
        let x_t = forward_sample(x0, t, schedule, rng)?;
        let noise_level = schedule.noise_level(t)?;
        let mu = denoiser.predict(&x_t, noise_level)?;
        let x_minus = mu.sample_x0(&x_t, rng)?;
        Ok(Self {
            t,
            noise_level,
            x_t,
            x_plus: x0.clone(),
            x_minus,
        })
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log sigma(-E+) - log sigma(E-)`.
pub fn nce_loss_value(energy: &NceEnergy, batch: &NceBatch) -> Result<f64> {
    let e_pos = energy.energy(&batch.x_plus, &batch.x_t, batch.noise_level)?;
    let e_neg = energy.energy(&batch.x_minus, &batch.x_t, batch.noise_level)?;
    Ok(softplus(e_pos) + softplus(-e_neg))
}

/// Loss and its gradient with respect to the energy parameters.
pub fn nce_loss(energy: &NceEnergy, batch: &NceBatch) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; energy.params().len()];
    let loss = nce_loss_accumulate(energy, batch, 1.0, &mut grad)?;
    Ok((loss, grad))
}

fn nce_loss_accumulate(energy: &NceEnergy, batch: &NceBatch, scale: f64, grad: &mut [f64]) -> Result<f64> {
    let e_pos = energy.energy(&batch.x_plus, &batch.x_t, batch.noise_level)?;
    let e_neg = energy.energy(&batch.x_minus, &batch.x_t, batch.noise_level)?;
    energy.accumulate_gradient(&batch.x_plus, &batch.x_t, batch.noise_level, scale * sigmoid(e_pos), grad)?;
    energy.accumulate_gradient(&batch.x_minus, &batch.x_t, batch.noise_level, -scale * sigmoid(-e_neg), grad)?;
    Ok(softplus(e_pos) + softplus(-e_neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NceTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Held-out loss is recorded every this many steps (and at the end).
    pub eval_every: usize,
}

impl Default for NceTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 0.5,
            batch_size: 16,
            eval_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NceStep {
    pub step: usize,
    pub loss: f64,
    pub heldout_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NceReport {
    pub trace: Vec<NceStep>,
}

impl NceReport {
    pub fn final_heldout_loss(&self) -> Option<f64> {
        self.trace.iter().rev().find_map(|s| s.heldout_loss)
    }
}

/// Fixed evaluation pairs, one per held-out document draw.
pub fn heldout_batches<R: Rng + ?Sized>(
    docs: &[TokenSeq],
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    count: usize,
    rng: &mut R,
) -> Result<Vec<NceBatch>> {
    if docs.is_empty() {
        return Err(EdlmError::Data("no held-out documents".into()));
    }
    (0..count)
        .map(|i| NceBatch::draw(&docs[i % docs.len()], denoiser, schedule, rng))
        .collect()
}

pub fn mean_loss(energy: &NceEnergy, batches: &[NceBatch]) -> Result<f64> {
    let mut total = 0.0;
    for b in batches {
        total += nce_loss_value(energy, b)?;
    }
    Ok(total / batches.len() as f64)
}

/// Mean energies of positives and negatives over held-out pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGap {
    pub mean_positive: f64,
    pub mean_negative: f64,
    /// `mean_negative - mean_positive`.
    pub gap: f64,
    /// Standard error of the paired per-batch differences.
    pub standard_error: f64,
}

pub fn energy_gap(energy: &NceEnergy, batches: &[NceBatch]) -> Result<EnergyGap> {
    let mut pos = Vec::with_capacity(batches.len());
    let mut diffs = Vec::with_capacity(batches.len());
    let mut neg_total = 0.0;
    for b in batches {
        let ep = energy.energy(&b.x_plus, &b.x_t, b.noise_level)?;
        let en = energy.energy(&b.x_minus, &b.x_t, b.noise_level)?;
        pos.push(ep);
        neg_total += en;
        diffs.push(en - ep);
    }
    let n = batches.len() as f64;
    let mean_positive = pos.iter().sum::<f64>() / n;
    let mean_negative = neg_total / n;
    Ok(EnergyGap {
        mean_positive,
        mean_negative,
        gap: mean_negative - mean_positive,
        standard_error: standard_error(&diffs),
    })
}

/// Stochastic gradient descent on the NCE loss. Each step averages the
/// gradient over `batch_size` fresh pairs drawn from `corpus`.
pub fn nce_train<R: Rng + ?Sized>(
    energy: &mut NceEnergy,
    denoiser: &dyn Denoiser,
    corpus: &[TokenSeq],
    heldout: &[NceBatch],
    schedule: &NoiseSchedule,
    cfg: &NceTrainConfig,
    rng: &mut R,
) -> Result<NceReport> {
    if corpus.is_empty() {
        return Err(EdlmError::Data("NCE training corpus is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(EdlmError::Config("NCE training needs batch_size >= 1 and lr > 0".into()));
    }
    let mut report = NceReport::default();
    let mut grad = vec![0.0; energy.params().len()];
    let scale = 1.0 / cfg.batch_size as f64;
    for step in 1..=cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            let x0 = &corpus[rng.random_range(0..corpus.len())];
            let batch = NceBatch::draw(x0, denoiser, schedule, rng)?;
            loss += scale * nce_loss_accumulate(energy, &batch, scale, &mut grad)?;
        }
        if !loss.is_finite() {
            return Err(EdlmError::TrainingDiverged { step, loss });
        }
        for (p, g) in energy.params_mut().iter_mut().zip(&grad) {
            *p -= cfg.lr * g;
        }
        let record = !heldout.is_empty() && (step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0));
        let heldout_loss = if record { Some(mean_loss(energy, heldout)?) } else { None };
        if let Some(h) = heldout_loss {
            if !h.is_finite() {
                return Err(EdlmError::TrainingDiverged { step, loss: h });
            }
        }
        report.trace.push(NceStep { step, loss, heldout_loss });
    }
    Ok(report)
}
