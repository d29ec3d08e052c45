//! Partition-function bounds, likelihood bounds and reported metrics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::forward_sample;
use crate::energy::EnergyModel;
use crate::error::{EdlmError, Result};
use crate::models::{AutoregressiveModel, Denoiser};
use crate::rng::{uniform, SeedTree};
use crate::schedule::NoiseSchedule;
use crate::seq::TokenSeq;

/// Lower and upper estimates of `log Z(x_t)` from one batch of `n`
/// candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    /// `log Z_n`, the plug-in estimate, biased low.
    pub lower: f64,
    /// Leave-one-out corrected `(2n-1) log Z_n - 2(n-1) mean_j log Z_{n-1}^{(-j)}`.
    pub upper: f64,
    pub n: usize,
    /// Jackknife variance of `log Z_n`.
    pub variance: f64,
}

/// Bounds on `log (1/n) sum_i exp(-e_i)` from the energies of `n >= 2`
/// candidates drawn from the denoiser.
pub fn bounds_from_energies(energies: &[f64]) -> Result<BoundPair> {
    let n = energies.len();
    if n < 2 {
        return Err(EdlmError::domain(format!("partition bounds need n >= 2, got {n}")));
    }
    if energies.iter().any(|e| e.is_nan() || *e == f64::NEG_INFINITY) {
        return Err(EdlmError::Model("energies must be finite or +inf".into()));
    }
    let neg: Vec<f64> = energies.iter().map(|e| -e).collect();
    let (arg, m) = neg
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if m == f64::NEG_INFINITY {
        return Err(EdlmError::Model("every energy is infinite".into()));
    }
    let w: Vec<f64> = neg.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let lower = m + (total / n as f64).ln();

    // leave-one-out sums from prefix and suffix sums, so no subtraction
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + w[i];
    }
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + w[i];
    }
    let k = (n - 1) as f64;
    let mut diffs = Vec::with_capacity(n);
    for j in 0..n {
        let loo = if j == arg {
            // dropping the largest term: rescale by the runner-up so the
            // remaining sum cannot underflow
            let m2 = neg
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if m2 == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                let s: f64 = neg
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != j)
                    .map(|(_, &v)| (v - m2).exp())
                    .sum();
                m2 + (s / k).ln()
            }
        } else {
            m + ((prefix[j] + suffix[j + 1]) / k).ln()
        };
        diffs.push(loo - lower);
    }
    let mean_diff = diffs.iter().sum::<f64>() / n as f64;
    let upper = lower - 2.0 * k * mean_diff;
    let variance = if mean_diff.is_finite() {
        k / n as f64 * diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>()
    } else {
        f64::INFINITY
    };
    Ok(BoundPair {
        lower,
        upper,
        n,
        variance,
    })
}

/// Draws `n` candidates `x0 ~ mu(. | x_t)` and bounds `log Z(x_t)`.
pub fn log_partition_bounds<R: Rng + ?Sized>(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x_t: &TokenSeq,
    noise_level: f64,
    n: usize,
    rng: &mut R,
) -> Result<BoundPair> {
    if n < 2 {
        return Err(EdlmError::domain(format!("partition bounds need n >= 2, got {n}")));
    }
    let mu = denoiser.predict(x_t, noise_level)?;
    let mut energies = Vec::with_capacity(n);
    for _ in 0..n {
        let x0 = mu.sample_x0(x_t, rng)?;
        energies.push(energy.energy(&x0, x_t, &mu, noise_level)?);
    }
    bounds_from_energies(&energies)
}

/// `-log p(x0 | x_t)` under the joint model, with `log Z` taken as 0 for
/// self-normalized energies and from the upper estimator otherwise.
pub fn reconstruction_nll<R: Rng + ?Sized>(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x0: &TokenSeq,
    x_t: &TokenSeq,
    noise_level: f64,
    partition_n: usize,
    rng: &mut R,
) -> Result<f64> {
    let mu = denoiser.predict(x_t, noise_level)?;
    let log_mu = mu.log_prob_of(x_t, x0)?;
    let e = energy.energy(x0, x_t, &mu, noise_level)?;
    let log_z = if energy.is_self_normalized() {
        0.0
    } else {
        log_partition_bounds(energy, denoiser, x_t, noise_level, partition_n, rng)?.upper
    };
    Ok(-log_mu + e + log_z)
}

/// How diffusion times are drawn for the continuous bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeSampling {
    /// One uniform draw inside each of `mc_samples` equal strata.
    #[default]
    Stratified,
    Uniform,
}

/// Discrete-time bound with `T` steps: `t_i = i/T`, `s_i = (i-1)/T` and
/// one draw of `x_{t_i}` per step.
#[allow(clippy::too_many_arguments)]
pub fn nelbo_discrete<R: Rng + ?Sized>(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x0: &TokenSeq,
    schedule: &NoiseSchedule,
    steps: usize,
    partition_n: usize,
    rng: &mut R,
) -> Result<f64> {
    if steps == 0 {
        return Err(EdlmError::domain("discrete bound needs T >= 1"));
    }
    x0.require_clean("x0")?;
    let mut total = 0.0;
    for i in 1..=steps {
        let t = i as f64 / steps as f64;
        let s = (i - 1) as f64 / steps as f64;
        let (a_t, a_s) = (schedule.alpha(t)?, schedule.alpha(s)?);
        let weight = (a_s - a_t) / (1.0 - a_t);
        let x_t = forward_sample(x0, t, schedule, rng)?;
        total += weight * reconstruction_nll(energy, denoiser, x0, &x_t, 1.0 - a_t, partition_n, rng)?;
    }
    Ok(total)
}

/// Continuous-time bound: Monte Carlo average over `t` of
/// `-a'_t / (1 - a_t) * (-log p(x0 | x_t))`.
#[allow(clippy::too_many_arguments)]
pub fn nelbo_continuous<R: Rng + ?Sized>(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x0: &TokenSeq,
    schedule: &NoiseSchedule,
    mc_samples: usize,
    partition_n: usize,
    sampling: TimeSampling,
    rng: &mut R,
) -> Result<f64> {
    if mc_samples == 0 {
        return Err(EdlmError::domain("continuous bound needs at least one sample"));
    }
    x0.require_clean("x0")?;
    let mut total = 0.0;
    for m in 0..mc_samples {
        let u = uniform(rng);
        let t = match sampling {
            TimeSampling::Stratified => (m as f64 + u) / mc_samples as f64,
            TimeSampling::Uniform => u,
        };
        let a_t = schedule.alpha(t)?;
        let weight = -schedule.alpha_prime(t)? / (1.0 - a_t);
        let x_t = forward_sample(x0, t, schedule, rng)?;
        total += weight * reconstruction_nll(energy, denoiser, x0, &x_t, 1.0 - a_t, partition_n, rng)?;
    }
    Ok(total / mc_samples as f64)
}

/// Effective sample size `1 / sum w_i^2` of the normalized weights
/// `w_i ~ exp(-e_i)`.
pub fn ess(energies: &[f64]) -> Result<f64> {
    if energies.is_empty() {
        return Err(EdlmError::domain("ESS of an empty set"));
    }
    let best = energies.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(EdlmError::domain("ESS needs at least one finite energy"));
    }
    let w: Vec<f64> = energies.iter().map(|e| (best - e).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(1.0 / w.iter().map(|x| (x / z).powi(2)).sum::<f64>())
}

/// ESS with raw energies normalized by their sum, `w_i = e_i / sum e_j`.
/// Kept for comparison; unstable when energies change sign.
pub fn ess_literal(energies: &[f64]) -> Result<f64> {
    if energies.is_empty() {
        return Err(EdlmError::domain("ESS of an empty set"));
    }
    let z: f64 = energies.iter().sum();
    if z == 0.0 || !z.is_finite() {
        return Err(EdlmError::domain("energies sum to zero or a non-finite value"));
    }
    Ok(1.0 / energies.iter().map(|e| (e / z).powi(2)).sum::<f64>())
}

/// Which ESS formula a diagnostic reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EssForm {
    #[default]
    Standard,
    Literal,
}

impl EssForm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "literal" => Ok(Self::Literal),
            other => Err(EdlmError::Config(format!("unknown ESS form '{other}' (standard|literal)"))),
        }
    }

    pub fn compute(self, energies: &[f64]) -> Result<f64> {
        match self {
            Self::Standard => ess(energies),
            Self::Literal => ess_literal(energies),
        }
    }
}

/// One evaluation unit (a document or the aggregate of a corpus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub unit: String,
    pub tokens: usize,
    /// Nats per token.
    pub nelbo: f64,
    pub bpc: f64,
    pub ppl: f64,
    pub gen_ppl: Option<f64>,
    pub entropy: Option<f64>,
    pub ess: Option<f64>,
}

impl MetricsRow {
    /// Row from a total NELBO in nats over `tokens` tokens.
    pub fn from_total(unit: impl Into<String>, total_nelbo: f64, tokens: usize) -> Self {
        let per_token = total_nelbo / tokens as f64;
        Self {
            unit: unit.into(),
            tokens,
            nelbo: per_token,
            bpc: per_token / std::f64::consts::LN_2,
            ppl: per_token.exp(),
            gen_ppl: None,
            entropy: None,
            ess: None,
        }
    }
}

/// Which likelihood bound [`corpus_metrics`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum BoundForm {
    Continuous { mc_samples: usize, sampling: TimeSampling },
    Discrete { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub form: BoundForm,
    pub partition_n: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            form: BoundForm::Continuous {
                mc_samples: 32,
                sampling: TimeSampling::Stratified,
            },
            partition_n: 64,
        }
    }
}

/// NELBO of one document under `cfg`.
pub fn document_nelbo<R: Rng + ?Sized>(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    doc: &TokenSeq,
    schedule: &NoiseSchedule,
    cfg: &EvalConfig,
    rng: &mut R,
) -> Result<f64> {
    match cfg.form {
        BoundForm::Continuous { mc_samples, sampling } => {
            nelbo_continuous(energy, denoiser, doc, schedule, mc_samples, cfg.partition_n, sampling, rng)
        }
        BoundForm::Discrete { steps } => nelbo_discrete(energy, denoiser, doc, schedule, steps, cfg.partition_n, rng),
    }
}

/// Per-document rows followed by one aggregate row named `"all"`.
/// Documents are evaluated in parallel, each with its own indexed stream.
pub fn corpus_metrics(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    docs: &[TokenSeq],
    schedule: &NoiseSchedule,
    cfg: &EvalConfig,
    seeds: &SeedTree,
) -> Result<Vec<MetricsRow>> {
    if docs.is_empty() {
        return Err(EdlmError::Data("evaluation corpus is empty".into()));
    }
    let totals = docs
        .par_iter()
        .enumerate()
        .map(|(i, doc)| {
            let mut rng = seeds.indexed("eval/doc", i as u64);
            document_nelbo(energy, denoiser, doc, schedule, cfg, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rows: Vec<MetricsRow> = docs
        .iter()
        .zip(&totals)
        .enumerate()
        .map(|(i, (doc, &total))| MetricsRow::from_total(format!("doc{i}"), total, doc.len()))
        .collect();
    let tokens: usize = docs.iter().map(TokenSeq::len).sum();
    rows.push(MetricsRow::from_total("all", totals.iter().sum(), tokens));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeMetrics {
    /// `exp` of the mean oracle NLL per token.
    pub gen_ppl: f64,
    /// Mean oracle NLL per token over all sample tokens.
    pub mean_nll: f64,
    /// Per-sample mean NLL per token.
    pub sample_nll: Vec<f64>,
    /// Entropy in nats of the pooled token frequencies of the samples.
    pub entropy: f64,
    pub tokens: usize,
}

impl GenerativeMetrics {
    /// Standard error of the mean of the per-sample NLLs.
    pub fn nll_standard_error(&self) -> f64 {
        standard_error(&self.sample_nll)
    }
}

/// Standard error of the mean of `xs`.
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::INFINITY;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Oracle perplexity and unigram entropy of a set of samples.
pub fn generative_metrics(samples: &[TokenSeq], oracle: &dyn AutoregressiveModel) -> Result<GenerativeMetrics> {
    if samples.is_empty() {
        return Err(EdlmError::Data("no samples to score".into()));
    }
    let v = oracle.vocab_size();
    let mut counts = vec![0u64; v];
    let mut sample_nll = Vec::with_capacity(samples.len());
    let mut total_nll = 0.0;
    let mut tokens = 0;
    for (k, s) in samples.iter().enumerate() {
        if let Some(i) = s.masked_positions().next() {
            return Err(EdlmError::Data(format!("sample {k} is masked at position {i}")));
        }
        if s.vocab_size() != v || s.is_empty() {
            return Err(EdlmError::Data(format!("sample {k} does not fit the oracle vocabulary")));
        }
        let nll = -oracle.log_prob(s)?;
        total_nll += nll;
        tokens += s.len();
        sample_nll.push(nll / s.len() as f64);
        for &t in s.tokens() {
            counts[t as usize] += 1;
        }
    }
    let mean_nll = total_nll / tokens as f64;
    let entropy = -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / tokens as f64;
            p * p.ln()
        })
        .sum::<f64>();
    Ok(GenerativeMetrics {
        gen_ppl: mean_nll.exp(),
        mean_nll,
        sample_nll,
        entropy,
        tokens,
    })
}
