//! Exact reference computations by brute-force enumeration on tiny state
//! spaces. Nothing here reuses the numeric helpers of the production
//! modules: log-sum-exp, products of conditionals and quadrature are all
//! written out again so a shared bug cannot hide on both sides.

use std::collections::HashMap;

use crate::energy::EnergyModel;
use crate::error::{EdlmError, Result};
use crate::models::{AutoregressiveModel, Denoiser, DenoiserOutput};
use crate::schedule::NoiseSchedule;
use crate::seq::{Token, TokenSeq};

/// Largest state space the oracle will enumerate.
pub const STATE_CAP: u128 = 15_625;

fn checked_states(v: usize, n: usize) -> Result<u128> {
    let mut states: u128 = 1;
    for _ in 0..n {
        states = states.saturating_mul(v as u128);
    }
    if states > STATE_CAP {
        return Err(EdlmError::Capacity { states, cap: STATE_CAP });
    }
    Ok(states)
}

fn lse(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut acc = 0.0;
    for &x in xs {
        acc += (x - m).exp();
    }
    m + acc.ln()
}

/// All `V^L` clean sequences in lexicographic order (position 0 most
/// significant).
pub fn enumerate_sequences(vocab_size: usize, len: usize) -> Result<Vec<Vec<Token>>> {
    let n = checked_states(vocab_size, len)? as usize;
    let mut out = Vec::with_capacity(n);
    for mut code in 0..n {
        let mut seq = vec![0; len];
        for slot in seq.iter_mut().rev() {
            *slot = (code % vocab_size) as Token;
            code /= vocab_size;
        }
        out.push(seq);
    }
    Ok(out)
}

/// All clean sequences that agree with `x_t` at its unmasked positions.
pub fn completions(x_t: &TokenSeq) -> Result<Vec<TokenSeq>> {
    let v = x_t.vocab_size();
    let holes: Vec<usize> = (0..x_t.len()).filter(|&i| x_t.tokens()[i] as usize == v).collect();
    let fills = enumerate_sequences(v, holes.len())?;
    fills
        .into_iter()
        .map(|fill| {
            let mut toks = x_t.tokens().to_vec();
            for (&h, tok) in holes.iter().zip(fill) {
                toks[h] = tok;
            }
            TokenSeq::new(toks, v)
        })
        .collect()
}

/// Exact distribution over an explicit list of clean sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedDistribution {
    vocab_size: usize,
    support: Vec<Vec<Token>>,
    probs: Vec<f64>,
}

impl EnumeratedDistribution {
    /// Normalizes `log_weights` over `support`.
    pub fn from_log_weights(vocab_size: usize, support: Vec<Vec<Token>>, log_weights: &[f64]) -> Result<Self> {
        if support.is_empty() || support.len() != log_weights.len() {
            return Err(EdlmError::domain("support and weights must be nonempty and aligned"));
        }
        let z = lse(log_weights);
        if !z.is_finite() {
            return Err(EdlmError::domain("distribution has no finite mass"));
        }
        let probs = log_weights.iter().map(|w| (w - z).exp()).collect();
        Ok(Self {
            vocab_size,
            support,
            probs,
        })
    }

    /// Distribution over all `V^L` sequences given unnormalized weights.
    pub fn from_weights(vocab_size: usize, len: usize, weight: impl Fn(&[Token]) -> f64) -> Result<Self> {
        let support = enumerate_sequences(vocab_size, len)?;
        let lw: Vec<f64> = support.iter().map(|s| weight(s).ln()).collect();
        Self::from_log_weights(vocab_size, support, &lw)
    }

    pub fn uniform(vocab_size: usize, len: usize) -> Result<Self> {
        Self::from_weights(vocab_size, len, |_| 1.0)
    }

    /// The joint distribution defined by an autoregressive model, built by
    /// multiplying its conditionals.
    pub fn from_ar(ar: &dyn AutoregressiveModel, len: usize) -> Result<Self> {
        Self::from_weights(ar.vocab_size(), len, |s| {
            let mut p = 1.0;
            for i in 0..s.len() {
                p *= ar.cond_log_prob(&s[..i], s[i]).exp();
            }
            p
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn support(&self) -> &[Vec<Token>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of(&self, seq: &[Token]) -> f64 {
        self.support
            .iter()
            .position(|s| s.as_slice() == seq)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Token], f64)> {
        self.support.iter().map(Vec::as_slice).zip(self.probs.iter().copied())
    }

    /// Per-token Shannon entropy of the distribution, in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Total variation distance to an empirical histogram over the same
    /// support (counts keyed by sequence).
    pub fn tv_to_counts(&self, counts: &HashMap<Vec<Token>, u64>) -> f64 {
        let n: u64 = counts.values().sum();
        let mut tv = 0.0;
        let mut covered = 0u64;
        for (s, p) in self.iter() {
            let c = counts.get(s).copied().unwrap_or(0);
            covered += c;
            tv += (p - c as f64 / n as f64).abs();
        }
        tv += (n - covered) as f64 / n as f64;
        tv / 2.0
    }

    /// Delta-method standard error of [`tv_to_counts`](Self::tv_to_counts):
    /// the TV estimate is `(1/2) sum_x |q(x) - p(x)|`, whose gradient in
    /// the empirical frequencies is half the sign of each deviation.
    pub fn tv_standard_error(&self, counts: &HashMap<Vec<Token>, u64>) -> f64 {
        let n: u64 = counts.values().sum();
        let nf = n as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        let mut covered = 0u64;
        for (s, p) in self.iter() {
            let c = counts.get(s).copied().unwrap_or(0);
            covered += c;
            let q = c as f64 / nf;
            let sign = if q > p {
                0.5
            } else if q < p {
                -0.5
            } else {
                0.0
            };
            m1 += q * sign;
            m2 += q * sign * sign;
        }
        // sequences outside the support always count positively
        let rest = (n - covered) as f64 / nf;
        m1 += 0.5 * rest;
        m2 += 0.25 * rest;
        ((m2 - m1 * m1).max(0.0) / nf).sqrt()
    }
}

fn mask_likelihood(x_t: &[Token], x0: &[Token], mask: Token, alpha: f64) -> f64 {
    let mut p = 1.0;
    for (&a, &b) in x_t.iter().zip(x0) {
        p *= if a == mask {
            1.0 - alpha
        } else if a == b {
            alpha
        } else {
            0.0
        };
    }
    p
}

/// `q(x0 | x_t)` by Bayes inversion of the masking process against `prior`.
pub fn exact_posterior_x0(
    x_t: &TokenSeq,
    prior: &EnumeratedDistribution,
    t: f64,
    schedule: &NoiseSchedule,
) -> Result<EnumeratedDistribution> {
    let alpha = schedule.alpha(t)?;
    let mask = x_t.mask_id();
    let mut support = Vec::new();
    let mut lw = Vec::new();
    for (s, p) in prior.iter() {
        if s.len() != x_t.len() {
            return Err(EdlmError::precondition("prior length differs from x_t"));
        }
        let w = p * mask_likelihood(x_t.tokens(), s, mask, alpha);
        if w > 0.0 {
            support.push(s.to_vec());
            lw.push(w.ln());
        }
    }
    EnumeratedDistribution::from_log_weights(prior.vocab_size, support, &lw)
}

fn log_mu(mu: &DenoiserOutput, x_t: &TokenSeq, x0: &TokenSeq) -> f64 {
    let mut p = 1.0;
    for i in 0..x_t.len() {
        if x_t.tokens()[i] == x_t.mask_id() {
            p *= mu.probs_row(i)[x0.tokens()[i] as usize];
        }
    }
    p.ln()
}

/// Joint log-scores `log mu(x0 | x_t) - E` for every completion of `x_t`.
fn joint_scores(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x_t: &TokenSeq,
    noise_level: f64,
) -> Result<(Vec<TokenSeq>, Vec<f64>)> {
    let mu = denoiser.predict(x_t, noise_level)?;
    let xs = completions(x_t)?;
    let mut scores = Vec::with_capacity(xs.len());
    for x0 in &xs {
        scores.push(log_mu(&mu, x_t, x0) - energy.energy(x0, x_t, &mu, noise_level)?);
    }
    Ok((xs, scores))
}

/// `log Z(x_t) = log sum_x0 mu(x0 | x_t) exp(-E)` over all completions.
pub fn exact_partition(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x_t: &TokenSeq,
    noise_level: f64,
) -> Result<f64> {
    let (_, scores) = joint_scores(energy, denoiser, x_t, noise_level)?;
    Ok(lse(&scores))
}

/// The normalized joint denoising distribution over completions of `x_t`.
pub fn exact_joint_posterior(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x_t: &TokenSeq,
    noise_level: f64,
) -> Result<EnumeratedDistribution> {
    let (xs, scores) = joint_scores(energy, denoiser, x_t, noise_level)?;
    let support = xs.into_iter().map(TokenSeq::into_tokens).collect();
    EnumeratedDistribution::from_log_weights(x_t.vocab_size(), support, &scores)
}

/// `p_AR(x0) / sum over completions of p_AR`: the AR model conditioned on
/// the unmasked tokens of `x_t`.
pub fn exact_ar_posterior(ar: &dyn AutoregressiveModel, x_t: &TokenSeq) -> Result<EnumeratedDistribution> {
    let xs = completions(x_t)?;
    let lw: Vec<f64> = xs
        .iter()
        .map(|x| {
            let s = x.tokens();
            let mut p = 1.0;
            for i in 0..s.len() {
                p *= ar.cond_log_prob(&s[..i], s[i]).exp();
            }
            p.ln()
        })
        .collect();
    let support = xs.into_iter().map(TokenSeq::into_tokens).collect();
    EnumeratedDistribution::from_log_weights(x_t.vocab_size(), support, &lw)
}

/// General-reference posterior `q(x_s | x_t, x0)` for the process
/// `q(x_t | x0) = alpha_t [x_t = x0] + (1 - alpha_t) pi(x_t)`, evaluated
/// from raw survival probabilities. Rows range over `V + 1` states, the
/// last being the mask.
pub fn exact_general_posterior_alphas(
    x_t: &TokenSeq,
    x0: &TokenSeq,
    alpha_s: f64,
    alpha_t: f64,
    pi: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let states = x_t.vocab_size() + 1;
    if pi.len() != states || pi.iter().any(|&p| !(p >= 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(EdlmError::domain("pi must be a distribution over V + 1 states"));
    }
    if !(0.0 < alpha_t && alpha_t <= alpha_s && alpha_s <= 1.0) {
        return Err(EdlmError::domain("need 0 < alpha_t <= alpha_s <= 1"));
    }
    if x0.len() != x_t.len() {
        return Err(EdlmError::precondition("x0 and x_t lengths differ"));
    }
    let ats = alpha_t / alpha_s;
    let ind = |a: Token, b: usize| if a as usize == b { 1.0 } else { 0.0 };
    let mut rows = Vec::with_capacity(x_t.len());
    for i in 0..x_t.len() {
        let (xt, x) = (x_t.tokens()[i], x0.tokens()[i]);
        let den = alpha_t * ind(xt, x as usize) + (1.0 - alpha_t) * pi[xt as usize];
        if den <= 0.0 {
            return Err(EdlmError::InconsistentPair {
                position: i,
                noisy: xt,
                clean: x,
            });
        }
        let row = (0..states)
            .map(|j| {
                let fwd = ats * ind(xt, j) + (1.0 - ats) * pi[xt as usize];
                let marg = alpha_s * ind(x, j) + (1.0 - alpha_s) * pi[j];
                fwd * marg / den
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

/// [`exact_general_posterior_alphas`] with survival probabilities from a
/// schedule.
pub fn exact_general_posterior(
    x_t: &TokenSeq,
    x0: &TokenSeq,
    s: f64,
    t: f64,
    pi: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<Vec<f64>>> {
    if s > t {
        return Err(EdlmError::domain("need s <= t"));
    }
    exact_general_posterior_alphas(x_t, x0, schedule.alpha(s)?, schedule.alpha(t)?, pi)
}

/// The reference distribution that puts all mass on the mask state.
pub fn mask_reference(vocab_size: usize) -> Vec<f64> {
    let mut pi = vec![0.0; vocab_size + 1];
    pi[vocab_size] = 1.0;
    pi
}

/// `E_{x_t ~ q(.|x0)} [-log p(x0 | x_t)]` for the joint model at survival
/// probability `alpha`, by enumerating every mask pattern.
pub fn expected_reconstruction_nll(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x0: &TokenSeq,
    alpha: f64,
) -> Result<f64> {
    let (v, len) = (x0.vocab_size(), x0.len());
    checked_states(2, len)?;
    let noise = 1.0 - alpha;
    let mut total = 0.0;
    for pattern in 0u64..(1u64 << len) {
        let mut toks = x0.tokens().to_vec();
        let mut p = 1.0;
        for (i, tok) in toks.iter_mut().enumerate() {
            if pattern >> i & 1 == 1 {
                *tok = v as Token;
                p *= 1.0 - alpha;
            } else {
                p *= alpha;
            }
        }
        if p == 0.0 {
            continue;
        }
        let x_t = TokenSeq::new(toks, v)?;
        let (xs, scores) = joint_scores(energy, denoiser, &x_t, noise)?;
        let idx = xs.iter().position(|x| x == x0).expect("x0 completes its own mask pattern");
        total += p * (lse(&scores) - scores[idx]);
    }
    Ok(total)
}

/// Exact discrete-time bound `sum_i (a_{s_i} - a_{t_i}) / (1 - a_{t_i})
/// E[-log p(x0 | x_{t_i})]` with `t_i = i/T`, `s_i = (i-1)/T`.
pub fn exact_nelbo_discrete(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x0: &TokenSeq,
    schedule: &NoiseSchedule,
    steps: usize,
) -> Result<f64> {
    if steps == 0 {
        return Err(EdlmError::domain("need T >= 1"));
    }
    let mut total = 0.0;
    for i in 1..=steps {
        let a_t = schedule.alpha(i as f64 / steps as f64)?;
        let a_s = schedule.alpha((i - 1) as f64 / steps as f64)?;
        let w = (a_s - a_t) / (1.0 - a_t);
        total += w * expected_reconstruction_nll(energy, denoiser, x0, a_t)?;
    }
    Ok(total)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Exact continuous-time bound
/// `int_0^1 -a'_t / (1 - a_t) E[-log p(x0 | x_t)] dt`, integrated with
/// composite Gauss-Legendre quadrature on `panels` equal panels, with
/// extra breakpoints at the clamp boundaries of the schedule.
pub fn exact_nelbo_continuous(
    energy: &EnergyModel,
    denoiser: &dyn Denoiser,
    x0: &TokenSeq,
    schedule: &NoiseSchedule,
    panels: usize,
) -> Result<f64> {
    if panels == 0 {
        return Err(EdlmError::domain("need at least one panel"));
    }
    let rule = gauss_legendre(8);
    let mut cuts: Vec<f64> = (0..=panels).map(|i| i as f64 / panels as f64).collect();
    // the clamped schedule has kinks where the raw curve crosses eps and 1 - eps
    for a in [1.0 - schedule.eps, schedule.eps] {
        if let Some(t) = crossing(schedule, a) {
            cuts.push(t);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        for &(x, wt) in &rule {
            let t = mid + half * x;
            let a = schedule.alpha(t)?;
            let rate = -schedule.alpha_prime(t)? / (1.0 - a);
            total += half * wt * rate * expected_reconstruction_nll(energy, denoiser, x0, a)?;
        }
    }
    Ok(total)
}

fn crossing(schedule: &NoiseSchedule, target: f64) -> Option<f64> {
    // bisection on the unclamped curve, which is monotone
    let raw = |t: f64| match schedule.kind {
        crate::schedule::ScheduleKind::Linear => 1.0 - t,
        crate::schedule::ScheduleKind::LogLinear { exponent } => 1.0 - t.powf(exponent),
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if (raw(lo) - target) * (raw(hi) - target) > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if raw(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo + hi) / 2.0)
}

/// AR model backed by an explicit joint table: conditionals are ratios of
/// prefix marginals.
#[derive(Debug, Clone)]
pub struct TabularAr {
    vocab_size: usize,
    /// prefix -> log marginal probability of that prefix
    prefix_log_mass: HashMap<Vec<Token>, f64>,
}

impl TabularAr {
    pub fn from_distribution(dist: &EnumeratedDistribution) -> Self {
        let mut mass: HashMap<Vec<Token>, f64> = HashMap::new();
        for (s, p) in dist.iter() {
            for k in 0..=s.len() {
                *mass.entry(s[..k].to_vec()).or_insert(0.0) += p;
            }
        }
        Self {
            vocab_size: dist.vocab_size(),
            prefix_log_mass: mass.into_iter().map(|(k, p)| (k, p.ln())).collect(),
        }
    }
}

impl AutoregressiveModel for TabularAr {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn cond_log_prob(&self, prefix: &[Token], token: Token) -> f64 {
        let mut ext = prefix.to_vec();
        ext.push(token);
        let num = self.prefix_log_mass.get(&ext).copied().unwrap_or(f64::NEG_INFINITY);
        match self.prefix_log_mass.get(prefix) {
            Some(&den) if den > f64::NEG_INFINITY => num - den,
            _ => -(self.vocab_size as f64).ln(),
        }
    }
}

/// First-order chain: the first token is uniform, then the successor
/// `(prev + 1) mod V` has probability `follow`, the rest share `1 - follow`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainAr {
    pub vocab_size: usize,
    pub follow: f64,
}

impl AutoregressiveModel for ChainAr {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn cond_log_prob(&self, prefix: &[Token], token: Token) -> f64 {
        let v = self.vocab_size as f64;
        match prefix.last() {
            None => -v.ln(),
            Some(&prev) if (prev + 1) % self.vocab_size as Token == token => self.follow.ln(),
            Some(_) => ((1.0 - self.follow) / (v - 1.0)).ln(),
        }
    }
}

/// The exact factorized denoiser for a known data distribution: at each
/// masked position, the marginal of `q(x0 | x_t)`. Masking is independent
/// of content, so the posterior is the prior restricted to completions
/// and does not depend on the time.
#[derive(Debug, Clone)]
pub struct MarginalOracleDenoiser {
    dist: EnumeratedDistribution,
}

impl MarginalOracleDenoiser {
    pub fn new(dist: EnumeratedDistribution) -> Self {
        Self { dist }
    }
}

impl Denoiser for MarginalOracleDenoiser {
    fn vocab_size(&self) -> usize {
        self.dist.vocab_size
    }

    fn predict(&self, x_t: &TokenSeq, _noise_level: f64) -> Result<DenoiserOutput> {
        let (v, len) = (self.dist.vocab_size, x_t.len());
        let mut probs = vec![0.0; len * v];
        let mut z = 0.0;
        for (s, p) in self.dist.iter() {
            if s.len() != len {
                return Err(EdlmError::precondition("x_t length differs from oracle support"));
            }
            let ok = s.iter().zip(x_t.tokens()).all(|(&a, &b)| b as usize == v || a == b);
            if ok {
                z += p;
                for (i, &tok) in s.iter().enumerate() {
                    probs[i * v + tok as usize] += p;
                }
            }
        }
        if z <= 0.0 {
            return Err(EdlmError::Model("x_t has no support under the oracle distribution".into()));
        }
        probs.iter_mut().for_each(|p| *p /= z);
        DenoiserOutput::from_probs(x_t, &probs)
    }
}
