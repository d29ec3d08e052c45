//! Ancestral sampling from the factorized denoiser, and the importance
//! sampling denoiser that corrects it with an energy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{posterior_sample, unmask_probability};
use crate::energy::EnergyModel;
use crate::error::{EdlmError, Result};
use crate::eval::{ess, EssForm};
use crate::models::{Denoiser, DenoiserOutput};
use crate::rng::{categorical_from_uniform, uniform};
use crate::schedule::NoiseSchedule;
use crate::seq::TokenSeq;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Sequence length to generate.
    pub seq_len: usize,
    /// Number of reverse steps `N`.
    pub num_steps: usize,
    /// Candidates drawn per importance step.
    pub k: usize,
    /// Fraction of the trajectory, counted from `t = 1`, in which
    /// importance resampling is active.
    pub window: f64,
    /// Explicit time grid `1 = t_0 > ... > t_N = 0`; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

impl SamplerConfig {
    pub fn new(seq_len: usize, num_steps: usize, k: usize, window: f64) -> Self {
        Self {
            seq_len,
            num_steps,
            k,
            window,
            grid: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_steps == 0 {
            return Err(EdlmError::Config("sampler needs at least one step".into()));
        }
        if self.k == 0 {
            return Err(EdlmError::Config("importance size k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.window) {
            return Err(EdlmError::Config(format!("window must lie in [0, 1], got {}", self.window)));
        }
        if let Some(g) = &self.grid {
            if g.len() != self.num_steps + 1 {
                return Err(EdlmError::Config(format!(
                    "grid needs {} points, got {}",
                    self.num_steps + 1,
                    g.len()
                )));
            }
            if g[0] != 1.0 || g[self.num_steps] != 0.0 || g.windows(2).any(|w| w[1] >= w[0]) {
                return Err(EdlmError::Config("grid must fall strictly from 1 to 0".into()));
            }
        }
        Ok(())
    }

    /// The `N + 1` times visited, from 1 down to 0.
    pub fn timesteps(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match &self.grid {
            Some(g) => g.clone(),
            None => {
                let n = self.num_steps;
                (0..=n).map(|j| if j == n { 0.0 } else { 1.0 - j as f64 / n as f64 }).collect()
            }
        })
    }

    /// Whether resampling runs at a step starting from time `t`.
    pub fn window_active(&self, t: f64) -> bool {
        t > 1.0 - self.window
    }
}

/// Per-step record of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub t: f64,
    pub masked_before: usize,
    pub importance: bool,
    /// Effective sample size of the candidate weights at importance steps.
    pub ess: Option<f64>,
    /// Candidate energies at importance steps, in candidate order.
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub sample: TokenSeq,
    pub steps: Vec<StepTrace>,
}

impl SampleTrace {
    pub fn mean_ess(&self) -> Option<f64> {
        let vals: Vec<f64> = self.steps.iter().filter_map(|s| s.ess).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean ESS over importance steps under a chosen formula.
    pub fn mean_ess_as(&self, form: EssForm) -> Result<Option<f64>> {
        let vals = self
            .steps
            .iter()
            .filter(|s| s.ess.is_some())
            .map(|s| form.compute(&s.energies))
            .collect::<Result<Vec<f64>>>()?;
        Ok((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
    }
}

/// Draws index `i` with probability `exp(-e_i) / sum_j exp(-e_j)`, using
/// max-shifted exponentials and one uniform. Non-finite energies get zero
/// weight.
pub fn resample_index<R: Rng + ?Sized>(energies: &[f64], rng: &mut R) -> Result<usize> {
    let weights = resample_weights(energies)?;
    Ok(categorical_from_uniform(&weights, uniform(rng)))
}

/// Unnormalized resampling weights `exp(-(e_i - min e))`.
pub fn resample_weights(energies: &[f64]) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(EdlmError::domain("cannot resample from zero candidates"));
    }
    let best = energies
        .iter()
        .copied()
        .filter(|e| e.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(EdlmError::Sampler("every candidate energy is non-finite".into()));
    }
    Ok(energies
        .iter()
        .map(|&e| if e.is_finite() { (best - e).exp() } else { 0.0 })
        .collect())
}

/// Plain ancestral sampling: every step draws `x0` from the factorized
/// denoiser and then the masked posterior.
pub fn sample_base<R: Rng + ?Sized>(
    denoiser: &dyn Denoiser,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<TokenSeq> {
    Ok(run(denoiser, None, config, schedule, rng)?.sample)
}

/// Importance-sampling denoiser: inside the window, draw `k` candidates
/// from the denoiser and keep one with probability proportional to
/// `exp(-E)`.
pub fn sample_edlm<R: Rng + ?Sized>(
    denoiser: &dyn Denoiser,
    energy: &EnergyModel,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<TokenSeq> {
    Ok(sample_edlm_traced(denoiser, energy, config, schedule, rng)?.sample)
}

pub fn sample_edlm_traced<R: Rng + ?Sized>(
    denoiser: &dyn Denoiser,
    energy: &EnergyModel,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<SampleTrace> {
    run(denoiser, Some(energy), config, schedule, rng)
}

fn run<R: Rng + ?Sized>(
    denoiser: &dyn Denoiser,
    energy: Option<&EnergyModel>,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<SampleTrace> {
    let times = config.timesteps()?;
    let n = config.num_steps;
    let mut x = TokenSeq::all_masked(config.seq_len, denoiser.vocab_size());
    let mut steps = Vec::with_capacity(n);
    for j in 0..n {
        let (t, s) = (times[j], times[j + 1]);
        let masked_before = x.num_masked();
        let importance = energy.is_some() && config.window_active(t);
        let mut trace = StepTrace {
            t,
            masked_before,
            importance,
            ess: None,
            energies: Vec::new(),
        };
        if masked_before == 0 {
            steps.push(trace);
            continue;
        }
        let noise = schedule.noise_level(t)?;
        let mu = denoiser.predict(&x, noise)?;
        mu.validate()?;
        // the last step lands on t = 0, where nothing may stay masked
        let reveal = if j + 1 == n { 1.0 } else { unmask_probability(schedule, s, t)? };
        let x0 = match energy {
            Some(e) if importance => {
                let (x0, ess, energies) = importance_draw(&mu, e, &x, noise, config.k, rng)?;
                trace.ess = Some(ess);
                trace.energies = energies;
                x0
            }
            _ => mu.sample_x0(&x, rng)?,
        };
        x = posterior_sample(&x, &x0, reveal, rng)?;
        steps.push(trace);
    }
    if x.has_mask() {
        return Err(EdlmError::Sampler(format!(
            "{} positions still masked after the last step",
            x.num_masked()
        )));
    }
    Ok(SampleTrace { sample: x, steps })
}

/// Draws `k` candidates in index order, then (only when `k > 1`) one
/// resampling uniform. With `k = 1` this consumes exactly the draws of a
/// plain `x0 ~ mu` step.
fn importance_draw<R: Rng + ?Sized>(
    mu: &DenoiserOutput,
    energy: &EnergyModel,
    x_t: &TokenSeq,
    noise: f64,
    k: usize,
    rng: &mut R,
) -> Result<(TokenSeq, f64, Vec<f64>)> {
    let mut candidates = Vec::with_capacity(k);
    for _ in 0..k {
        candidates.push(mu.sample_x0(x_t, rng)?);
    }
    let energies = candidates
        .iter()
        .map(|c| energy.energy(c, x_t, mu, noise))
        .collect::<Result<Vec<f64>>>()?;
    if k == 1 {
        resample_weights(&energies)?;
        return Ok((candidates.pop().expect("one candidate"), 1.0, energies));
    }
    let idx = resample_index(&energies, rng)?;
    let e = ess(&energies)?;
    Ok((candidates.swap_remove(idx), e, energies))
}
