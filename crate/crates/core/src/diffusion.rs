//! Masked (absorbing-state) forward process, its exact posterior, and the
//! reverse step driven by an x0 predictor.
//!
//! Every kernel consumes random numbers left to right, one uniform per
//! position it has to decide, so a fixed seed fixes the trajectory.

use rand::Rng;

use crate::error::{EdlmError, Result};
use crate::models::DenoiserOutput;
use crate::rng::uniform;
use crate::schedule::NoiseSchedule;
use crate::seq::{Token, TokenSeq};

/// Samples `x_t ~ q(x_t | x0)`: every position keeps its token with
/// probability `alpha(t)`, otherwise it becomes the mask.
pub fn forward_sample<R: Rng + ?Sized>(
    x0: &TokenSeq,
    t: f64,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<TokenSeq> {
    x0.require_clean("forward_sample input")?;
    let keep = schedule.alpha(t)?;
    Ok(forward_transition(x0, keep, rng))
}

/// Masks each unmasked position of `x` independently with probability
/// `1 - keep`. Masked positions stay masked and consume no randomness.
/// With `keep = alpha_{t'|t}` this moves `x_t` to `x_{t'}`.
pub fn forward_transition<R: Rng + ?Sized>(x: &TokenSeq, keep: f64, rng: &mut R) -> TokenSeq {
    let mut out = x.clone();
    let mask = x.mask_id();
    for i in 0..x.len() {
        if !x.is_masked_at(i) && uniform(rng) >= keep {
            out.set(i, mask);
        }
    }
    out
}

/// Per-position posterior `q(x_s | x_t, x0)`. The support at a position is
/// at most two states: the clean token and the mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionPosterior {
    pub token: Token,
    pub token_prob: f64,
    pub mask_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStep {
    pub s: f64,
    pub t: f64,
    pub positions: Vec<PositionPosterior>,
}

impl PosteriorStep {
    /// Probability of `x_s` under this posterior.
    pub fn prob_of(&self, x_s: &TokenSeq) -> f64 {
        let mask = x_s.mask_id();
        self.positions
            .iter()
            .zip(x_s.tokens())
            .map(|(p, &tok)| {
                if tok == mask {
                    p.mask_prob
                } else if tok == p.token {
                    p.token_prob
                } else {
                    0.0
                }
            })
            .product()
    }
}

/// Probability that a masked position is revealed when stepping from `t`
/// back to `s`: `(alpha_s - alpha_t) / (1 - alpha_t)`.
pub fn unmask_probability(schedule: &NoiseSchedule, s: f64, t: f64) -> Result<f64> {
    if s > t {
        return Err(EdlmError::domain(format!("reverse step needs s <= t, got s={s}, t={t}")));
    }
    let (a_s, a_t) = (schedule.alpha(s)?, schedule.alpha(t)?);
    Ok((a_s - a_t) / (1.0 - a_t))
}

/// Exact posterior `q(x_s | x_t, x0)` for the masked process.
///
/// `s == t` is accepted and yields the identity kernel.
pub fn posterior(
    x_t: &TokenSeq,
    x0: &TokenSeq,
    s: f64,
    t: f64,
    schedule: &NoiseSchedule,
) -> Result<PosteriorStep> {
    let reveal = unmask_probability(schedule, s, t)?;
    x_t.require_completion(x0)?;
    let positions = (0..x_t.len())
        .map(|i| {
            if x_t.is_masked_at(i) {
                PositionPosterior {
                    token: x0.get(i),
                    token_prob: reveal,
                    mask_prob: 1.0 - reveal,
                }
            } else {
                PositionPosterior {
                    token: x_t.get(i),
                    token_prob: 1.0,
                    mask_prob: 0.0,
                }
            }
        })
        .collect();
    Ok(PosteriorStep { s, t, positions })
}

/// Samples `x_s ~ q(x_s | x_t, x0)` given the per-position reveal
/// probability. One uniform per masked position of `x_t`.
pub fn posterior_sample<R: Rng + ?Sized>(
    x_t: &TokenSeq,
    x0: &TokenSeq,
    reveal: f64,
    rng: &mut R,
) -> Result<TokenSeq> {
    x_t.require_completion(x0)?;
    let mut x_s = x_t.clone();
    for i in 0..x_t.len() {
        if x_t.is_masked_at(i) && uniform(rng) < reveal {
            x_s.set(i, x0.get(i));
        }
    }
    Ok(x_s)
}

/// One reverse step `x_s ~ q(x_s | x_t, x0 = mu(x_t))`, drawing the
/// revealed tokens from `mu`.
pub fn reverse_step<R: Rng + ?Sized>(
    x_t: &TokenSeq,
    mu: &DenoiserOutput,
    s: f64,
    t: f64,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<TokenSeq> {
    let reveal = unmask_probability(schedule, s, t)?;
    reverse_step_with_reveal(x_t, mu, reveal, rng)
}

/// [`reverse_step`] with an explicit reveal probability. The draw order is
/// a full `x0 ~ mu` (one uniform per masked position) followed by the
/// posterior draw (one more uniform per masked position).
pub fn reverse_step_with_reveal<R: Rng + ?Sized>(
    x_t: &TokenSeq,
    mu: &DenoiserOutput,
    reveal: f64,
    rng: &mut R,
) -> Result<TokenSeq> {
    mu.validate()?;
    let x0 = mu.sample_x0(x_t, rng)?;
    posterior_sample(x_t, &x0, reveal, rng)
}
