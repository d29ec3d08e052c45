//! Exact-enumeration property suite behind `edlm verify`. Each check
//! compares a production formula with its brute-force twin on an instance
//! small enough to enumerate.

use std::fmt::Write as _;
use std::sync::Arc;

use edlm_core::diffusion::posterior;
use edlm_core::energy::{energy_coar, joint_logprob_unnormalized};
use edlm_core::eval::{bounds_from_energies, log_partition_bounds, nelbo_discrete, standard_error};
use edlm_core::models::FixedDenoiser;
use edlm_core::nce::{nce_loss, NceBatch};
use edlm_core::oracle::{
    completions, enumerate_sequences, exact_ar_posterior, exact_general_posterior, exact_nelbo_continuous,
    exact_nelbo_discrete, exact_partition, mask_reference, ChainAr, EnumeratedDistribution, TabularAr,
};
use edlm_core::rng::{uniform, SeedTree, StreamRng};
use edlm_core::sampler::{sample_base, sample_edlm};
use edlm_core::{ar_fit, AutoregressiveModel, Denoiser, EnergyModel, FactorizedDenoiser, NceEnergy, NoiseSchedule, SamplerConfig, TokenSeq};

/// Outcome of one property: a short measurement on success, the reason on
/// failure.
pub type Check = std::result::Result<String, String>;

pub struct Report {
    pub results: Vec<(&'static str, Check)>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|(_, r)| r.is_ok())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (name, r) in &self.results {
            match r {
                Ok(detail) => writeln!(s, "PASS {name}: {detail}"),
                Err(reason) => writeln!(s, "FAIL {name}: {reason}"),
            }
            .expect("writing to a String");
        }
        let passed = self.results.iter().filter(|(_, r)| r.is_ok()).count();
        writeln!(s, "{passed}/{} properties passed", self.results.len()).expect("writing to a String");
        s
    }
}

/// Runs every property with streams derived from `seed`.
pub fn run_suite(seed: u64) -> Report {
    let tree = SeedTree::new(seed);
    let checks: Vec<(&'static str, fn(&SeedTree) -> Check)> = vec![
        ("ar-joint-equals-ar-posterior", ar_posterior),
        ("posterior-matches-general-formula", posterior_formula),
        ("coar-self-normalized", coar_self_normalized),
        ("coar-nelbo-matches-enumeration", coar_nelbo),
        ("partition-bounds-bracket", |t| partition_bracket(t, 200).map(|b| b.to_string())),
        ("partition-bounds-exact-for-constant-energy", constant_energy_bounds),
        ("sampler-reductions-bit-identical", |t| sampler_reductions(t, 100)),
        ("nce-loss-and-gradient", nce_loss_and_gradient),
        ("denoiser-gradient", denoiser_gradient),
        ("training-loss-is-continuous-bound", training_loss_bound),
        ("schedule-derivative", schedule_derivative),
        ("ngram-chain-rule", ngram_chain_rule),
    ];
    let results = checks
        .into_iter()
        .map(|(name, f)| {
            let r = std::panic::catch_unwind(|| f(&tree)).unwrap_or_else(|_| Err("panicked".into()));
            (name, r)
        })
        .collect();
    Report { results }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn below(n: usize, rng: &mut StreamRng) -> usize {
    ((uniform(rng) * n as f64) as usize).min(n - 1)
}

pub fn random_dist(v: usize, len: usize, rng: &mut StreamRng) -> Result<EnumeratedDistribution, String> {
    let support = enumerate_sequences(v, len).map_err(err)?;
    let lw: Vec<f64> = support.iter().map(|_| 3.0 * uniform(rng)).collect();
    EnumeratedDistribution::from_log_weights(v, support, &lw).map_err(err)
}

pub fn random_rows(v: usize, len: usize, rng: &mut StreamRng) -> Result<FixedDenoiser, String> {
    let rows = (0..len)
        .map(|_| {
            let w: Vec<f64> = (0..v).map(|_| 0.05 + uniform(rng)).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        })
        .collect();
    FixedDenoiser::new(rows).map_err(err)
}

fn random_clean(v: usize, len: usize, rng: &mut StreamRng) -> TokenSeq {
    TokenSeq::new((0..len).map(|_| below(v, rng) as u32).collect(), v).expect("tokens below V")
}

fn random_noisy(x0: &TokenSeq, p_mask: f64, rng: &mut StreamRng) -> TokenSeq {
    let v = x0.vocab_size() as u32;
    let toks = x0.tokens().iter().map(|&t| if uniform(rng) < p_mask { v } else { t }).collect();
    TokenSeq::new(toks, x0.vocab_size()).expect("tokens at most V")
}

/// Joint model under the AR energy against the enumerated AR posterior
/// for every `x_t` in `{0..V}^L`, V=3, L=4. Returns the max abs error.
pub fn ar_posterior_error(tree: &SeedTree) -> Result<f64, String> {
    let mut rng = tree.stream("verify/ar-posterior");
    let (v, len) = (3, 4);
    let ar = TabularAr::from_distribution(&random_dist(v, len, &mut rng)?);
    let d = random_rows(v, len, &mut rng)?;
    let energy = EnergyModel::Ar(Arc::new(ar.clone()));
    let mut worst: f64 = 0.0;
    for toks in enumerate_sequences(v + 1, len).map_err(err)? {
        let x_t = TokenSeq::new(toks, v).map_err(err)?;
        let exact = exact_ar_posterior(&ar, &x_t).map_err(err)?;
        let mu = d.predict(&x_t, 0.5).map_err(err)?;
        let scores = exact
            .support()
            .iter()
            .map(|s| {
                let x0 = TokenSeq::new(s.clone(), v)?;
                joint_logprob_unnormalized(&energy, &mu, &x0, &x_t, 0.5)
            })
            .collect::<edlm_core::Result<Vec<f64>>>()
            .map_err(err)?;
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
        for (s, p) in scores.iter().zip(exact.probs()) {
            worst = worst.max(((s - m).exp() / z - p).abs());
        }
    }
    Ok(worst)
}

fn ar_posterior(tree: &SeedTree) -> Check {
    let worst = ar_posterior_error(tree)?;
    if worst <= 1e-10 {
        Ok(format!("max abs error {worst:.2e} over 256 inputs"))
    } else {
        Err(format!("max abs error {worst:.3e} > 1e-10"))
    }
}

/// Production posterior against the general formula with the mask
/// reference on `count` random tuples. Returns the max abs error.
pub fn posterior_formula_error(tree: &SeedTree, count: usize) -> Result<f64, String> {
    let mut rng = tree.stream("verify/posterior");
    let sched = NoiseSchedule::loglinear(1.7).map_err(err)?;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let v = 2 + below(3, &mut rng);
        let len = 1 + below(5, &mut rng);
        let x0 = random_clean(v, len, &mut rng);
        let p_mask = uniform(&mut rng);
        let x_t = random_noisy(&x0, p_mask, &mut rng);
        let (a, b) = (uniform(&mut rng), uniform(&mut rng));
        let (s, t) = (a.min(b), a.max(b));
        let prod = posterior(&x_t, &x0, s, t, &sched).map_err(err)?;
        let rows = exact_general_posterior(&x_t, &x0, s, t, &mask_reference(v), &sched).map_err(err)?;
        for (i, row) in rows.iter().enumerate() {
            let pp = prod.positions[i];
            for (j, &p) in row.iter().enumerate() {
                let expect = if j == v {
                    pp.mask_prob
                } else if j as u32 == pp.token {
                    pp.token_prob
                } else {
                    0.0
                };
                worst = worst.max((p - expect).abs());
            }
        }
    }
    Ok(worst)
}

fn posterior_formula(tree: &SeedTree) -> Check {
    let worst = posterior_formula_error(tree, 1000)?;
    if worst <= 1e-12 {
        Ok(format!("max abs error {worst:.2e} over 1000 tuples"))
    } else {
        Err(format!("max abs error {worst:.3e} > 1e-12"))
    }
}

/// Largest `|E_mu[exp(-E_coAR)] - 1|` over 100 random `x_t`, V=3, L=4.
pub fn coar_normalization_error(tree: &SeedTree) -> Result<f64, String> {
    let mut rng = tree.stream("verify/coar");
    let (v, len) = (3, 4);
    let ar = TabularAr::from_distribution(&random_dist(v, len, &mut rng)?);
    let d = random_rows(v, len, &mut rng)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x0 = random_clean(v, len, &mut rng);
        let x_t = random_noisy(&x0, 0.6, &mut rng);
        let mu = d.predict(&x_t, 0.6).map_err(err)?;
        let mut expectation = 0.0;
        for c in completions(&x_t).map_err(err)? {
            let e = energy_coar(&ar, &mu, &c, &x_t).map_err(err)?;
            expectation += mu.log_prob_of(&x_t, &c).map_err(err)?.exp() * (-e).exp();
        }
        worst = worst.max((expectation - 1.0).abs());
        let log_z = exact_partition(&EnergyModel::CoAr(Arc::new(ar.clone())), &d, &x_t, 0.6).map_err(err)?;
        worst = worst.max(log_z.abs());
    }
    Ok(worst)
}

fn coar_self_normalized(tree: &SeedTree) -> Check {
    let worst = coar_normalization_error(tree)?;
    if worst <= 1e-8 {
        Ok(format!("max |E[exp(-E)] - 1| {worst:.2e} over 100 inputs"))
    } else {
        Err(format!("normalization error {worst:.3e} > 1e-8"))
    }
}

/// Monte Carlo coAR NELBO (log Z = 0) against its enumerated value.
/// Returns `(mc mean, standard error, exact)`.
pub fn coar_nelbo_comparison(tree: &SeedTree, draws: usize) -> Result<(f64, f64, f64), String> {
    let mut rng = tree.stream("verify/coar-nelbo");
    let (v, len) = (3, 4);
    let ar = TabularAr::from_distribution(&random_dist(v, len, &mut rng)?);
    let d = random_rows(v, len, &mut rng)?;
    let energy = EnergyModel::CoAr(Arc::new(ar));
    let sched = NoiseSchedule::linear();
    let x0 = random_clean(v, len, &mut rng);
    let exact = exact_nelbo_discrete(&energy, &d, &x0, &sched, 8).map_err(err)?;
    let vals = (0..draws)
        .map(|_| nelbo_discrete(&energy, &d, &x0, &sched, 8, 2, &mut rng))
        .collect::<edlm_core::Result<Vec<f64>>>()
        .map_err(err)?;
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok((mean, standard_error(&vals), exact))
}

fn coar_nelbo(tree: &SeedTree) -> Check {
    let (mean, se, exact) = coar_nelbo_comparison(tree, 10_000)?;
    if (mean - exact).abs() <= 3.0 * se {
        Ok(format!("mc {mean:.5} vs exact {exact:.5} (se {se:.5})"))
    } else {
        Err(format!("mc {mean:.5} vs exact {exact:.5} differs by more than 3 se ({se:.5})"))
    }
}

/// Summary of repeated partition estimates at two pool sizes.
#[derive(Debug, Clone, Copy)]
pub struct BracketSummary {
    pub exact: f64,
    pub lower_small: f64,
    pub upper_small: f64,
    pub lower_large: f64,
    pub upper_large: f64,
    /// `(upper - lower)` of the means at n=64 over the same at n=1024.
    pub shrink: f64,
}

impl BracketSummary {
    pub fn brackets(&self) -> bool {
        self.lower_large <= self.exact && self.exact <= self.upper_large
    }
}

impl std::fmt::Display for BracketSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "log Z {:.5}, n=1024 mean [{:.5}, {:.5}], n=64 mean [{:.5}, {:.5}], gap shrink {:.2}x",
            self.exact, self.lower_large, self.upper_large, self.lower_small, self.upper_small, self.shrink
        )
    }
}

/// Lower and upper partition estimates averaged over `reps` repetitions at
/// n=64 and n=1024 on a fully masked V=3, L=4 input. The denoiser
/// disagrees strongly with the AR energy, so the importance weights are
/// heavy tailed and the bias of both estimators is visible. The exact
/// value is `log Z = 0` (the AR model is normalized), which the
/// estimators do not know.
pub fn partition_bracket_summary(tree: &SeedTree, reps: usize) -> Result<BracketSummary, String> {
    let energy = EnergyModel::Ar(Arc::new(ChainAr {
        vocab_size: 3,
        follow: 0.95,
    }));
    let d = FixedDenoiser::repeated(vec![0.8, 0.1, 0.1], 4).map_err(err)?;
    let x_t = TokenSeq::all_masked(4, 3);
    let noise = 1.0;
    let exact = exact_partition(&energy, &d, &x_t, noise).map_err(err)?;
    let mean_at = |n: usize| -> Result<(f64, f64), String> {
        let (mut lo, mut hi) = (0.0, 0.0);
        for r in 0..reps {
            let mut rng = tree.indexed(&format!("verify/bracket/{n}"), r as u64);
            let b = log_partition_bounds(&energy, &d, &x_t, noise, n, &mut rng).map_err(err)?;
            lo += b.lower;
            hi += b.upper;
        }
        Ok((lo / reps as f64, hi / reps as f64))
    };
    let (lower_small, upper_small) = mean_at(64)?;
    let (lower_large, upper_large) = mean_at(1024)?;
    Ok(BracketSummary {
        exact,
        lower_small,
        upper_small,
        lower_large,
        upper_large,
        shrink: (upper_small - lower_small) / (upper_large - lower_large),
    })
}

pub fn partition_bracket(tree: &SeedTree, reps: usize) -> Result<BracketSummary, String> {
    let s = partition_bracket_summary(tree, reps)?;
    if !s.brackets() {
        return Err(format!("exact value outside the mean bounds: {s}"));
    }
    if s.shrink < 4.0 {
        return Err(format!("gap shrank only {:.2}x: {s}", s.shrink));
    }
    Ok(s)
}

fn constant_energy_bounds(_: &SeedTree) -> Check {
    for n in [2, 5, 64] {
        let b = bounds_from_energies(&vec![0.75; n]).map_err(err)?;
        if (b.lower + 0.75).abs() > 1e-12 || (b.upper + 0.75).abs() > 1e-12 {
            return Err(format!("n={n}: bounds [{}, {}] for log Z = -0.75", b.lower, b.upper));
        }
    }
    Ok("lower = upper = -c for n in {2, 5, 64}".into())
}

/// Counts of trajectories where k=1 or w=0 sampling differs from the base
/// sampler under the same stream.
pub fn sampler_reduction_mismatches(tree: &SeedTree, trajectories: usize) -> Result<(usize, usize), String> {
    let mut rng = tree.stream("verify/sampler-models");
    let (v, len) = (4, 6);
    let ar = ar_fit(&(0..400).map(|_| below(v, &mut rng) as u32).collect::<Vec<_>>(), v, 2, 0.5).map_err(err)?;
    let mut d = FactorizedDenoiser::new(v, 1).map_err(err)?;
    d.params_mut().iter_mut().for_each(|p| *p = 2.0 * uniform(&mut rng) - 1.0);
    let sched = NoiseSchedule::linear();
    let energy = EnergyModel::Ar(Arc::new(ar));
    let (mut k1, mut w0) = (0, 0);
    for i in 0..trajectories {
        let n = 1 + i % 8;
        let base = sample_base(&d, &SamplerConfig::new(len, n, 1, 0.0), &sched, &mut tree.indexed("verify/traj", i as u64))
            .map_err(err)?;
        let a = sample_edlm(&d, &energy, &SamplerConfig::new(len, n, 1, 1.0), &sched, &mut tree.indexed("verify/traj", i as u64))
            .map_err(err)?;
        let b = sample_edlm(&d, &energy, &SamplerConfig::new(len, n, 8, 0.0), &sched, &mut tree.indexed("verify/traj", i as u64))
            .map_err(err)?;
        k1 += usize::from(a != base);
        w0 += usize::from(b != base);
    }
    Ok((k1, w0))
}

fn sampler_reductions(tree: &SeedTree, trajectories: usize) -> Check {
    match sampler_reduction_mismatches(tree, trajectories)? {
        (0, 0) => Ok(format!("{trajectories} trajectories identical for k=1 and for w=0")),
        (k1, w0) => Err(format!("{k1} k=1 and {w0} w=0 trajectories differ from base")),
    }
}

/// Loss at zero parameters and the worst relative error of the analytic
/// gradient against central differences on 20 coordinates.
pub fn nce_checks(tree: &SeedTree) -> Result<(f64, f64), String> {
    let mut rng = tree.stream("verify/nce");
    let v = 4;
    let d = random_rows(v, 8, &mut rng)?;
    let sched = NoiseSchedule::linear();
    let x0 = random_clean(v, 8, &mut rng);
    let mut batch = NceBatch::draw(&x0, &d, &sched, &mut rng).map_err(err)?;
    while batch.x_plus == batch.x_minus || !batch.x_t.has_mask() {
        batch = NceBatch::draw(&x0, &d, &sched, &mut rng).map_err(err)?;
    }
    let zero = NceEnergy::new(v).map_err(err)?;
    let (loss0, _) = nce_loss(&zero, &batch).map_err(err)?;
    let params: Vec<f64> = (0..NceEnergy::feature_count(v)).map(|_| 0.5 * (2.0 * uniform(&mut rng) - 1.0)).collect();
    let energy = NceEnergy::from_params(v, params).map_err(err)?;
    let (_, grad) = nce_loss(&energy, &batch).map_err(err)?;
    let active: Vec<usize> = energy
        .features(&batch.x_plus, &batch.x_t, batch.noise_level)
        .map_err(err)?
        .into_iter()
        .chain(energy.features(&batch.x_minus, &batch.x_t, batch.noise_level).map_err(err)?)
        .map(|(i, _)| i)
        .collect();
    let mut worst: f64 = 0.0;
    for j in 0..20 {
        let idx = if j % 2 == 0 { active[below(active.len(), &mut rng)] } else { below(energy.params().len(), &mut rng) };
        let h = 1e-5;
        let mut plus = energy.clone();
        plus.params_mut()[idx] += h;
        let mut minus = energy.clone();
        minus.params_mut()[idx] -= h;
        let fd = (nce_loss(&plus, &batch).map_err(err)?.0 - nce_loss(&minus, &batch).map_err(err)?.0) / (2.0 * h);
        let rel = (fd - grad[idx]).abs() / fd.abs().max(grad[idx].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok((loss0, worst))
}

fn nce_loss_and_gradient(tree: &SeedTree) -> Check {
    let (loss0, rel) = nce_checks(tree)?;
    let target = 2.0 * std::f64::consts::LN_2;
    if (loss0 - target).abs() > 1e-12 {
        return Err(format!("loss at zero {loss0} != 2 ln 2"));
    }
    if rel > 1e-4 {
        return Err(format!("gradient relative error {rel:.3e} > 1e-4"));
    }
    Ok(format!("loss(0) = 2 ln 2, gradient relative error {rel:.2e}"))
}

fn denoiser_gradient(tree: &SeedTree) -> Check {
    let mut rng = tree.stream("verify/denoiser-grad");
    let v = 3;
    let mut d = FactorizedDenoiser::new(v, 2).map_err(err)?;
    d.params_mut().iter_mut().for_each(|p| *p = 2.0 * uniform(&mut rng) - 1.0);
    let x0 = random_clean(v, 7, &mut rng);
    let mut x_t = random_noisy(&x0, 0.6, &mut rng);
    while !x_t.has_mask() {
        x_t = random_noisy(&x0, 0.6, &mut rng);
    }
    let mut grad = vec![0.0; d.params().len()];
    d.example_loss(&x0, &x_t, 0.6, 1.3, Some((&mut grad, 1.0))).map_err(err)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let idx = below(grad.len(), &mut rng);
        let h = 1e-5;
        let mut p = d.clone();
        p.params_mut()[idx] += h;
        let mut m = d.clone();
        m.params_mut()[idx] -= h;
        let fd = (p.example_loss(&x0, &x_t, 0.6, 1.3, None).map_err(err)?
            - m.example_loss(&x0, &x_t, 0.6, 1.3, None).map_err(err)?)
            / (2.0 * h);
        let denom = fd.abs().max(grad[idx].abs());
        if denom > 1e-8 {
            worst = worst.max((fd - grad[idx]).abs() / denom);
        }
    }
    if worst <= 1e-4 {
        Ok(format!("relative error {worst:.2e} on 20 coordinates"))
    } else {
        Err(format!("relative error {worst:.3e} > 1e-4"))
    }
}

fn training_loss_bound(tree: &SeedTree) -> Check {
    let mut rng = tree.stream("verify/elbo");
    let v = 3;
    let mut d = FactorizedDenoiser::new(v, 2).map_err(err)?;
    d.params_mut().iter_mut().for_each(|p| *p = 2.0 * uniform(&mut rng) - 1.0);
    let sched = NoiseSchedule::linear();
    let x0 = random_clean(v, 4, &mut rng);
    let exact = exact_nelbo_continuous(&EnergyModel::Zero, &d, &x0, &sched, 64).map_err(err)?;
    let draws = (0..20_000)
        .map(|_| d.sample_loss(&x0, &sched, &mut rng))
        .collect::<edlm_core::Result<Vec<f64>>>()
        .map_err(err)?;
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let se = standard_error(&draws);
    if (mean - exact).abs() <= 3.0 * se {
        Ok(format!("mc {mean:.5} vs exact {exact:.5} (se {se:.5})"))
    } else {
        Err(format!("mc {mean:.5} vs exact {exact:.5} differs by more than 3 se ({se:.5})"))
    }
}

fn schedule_derivative(_: &SeedTree) -> Check {
    let mut worst: f64 = 0.0;
    for sched in [NoiseSchedule::linear(), NoiseSchedule::loglinear(2.5).map_err(err)?] {
        for i in 1..20 {
            let t = i as f64 / 20.0;
            let h = 1e-6;
            let fd = (sched.alpha(t + h).map_err(err)? - sched.alpha(t - h).map_err(err)?) / (2.0 * h);
            worst = worst.max((fd - sched.alpha_prime(t).map_err(err)?).abs());
        }
    }
    if worst <= 1e-6 {
        Ok(format!("max abs error {worst:.2e}"))
    } else {
        Err(format!("max abs error {worst:.3e} > 1e-6"))
    }
}

fn ngram_chain_rule(tree: &SeedTree) -> Check {
    let mut rng = tree.stream("verify/ngram");
    let corpus: Vec<u32> = (0..300).map(|_| below(3, &mut rng) as u32).collect();
    let m = ar_fit(&corpus, 3, 2, 0.1).map_err(err)?;
    let mut total = 0.0;
    for s in enumerate_sequences(3, 4).map_err(err)? {
        total += m.log_prob(&TokenSeq::new(s, 3).map_err(err)?).map_err(err)?.exp();
    }
    if (total - 1.0).abs() <= 1e-12 {
        Ok(format!("probabilities of all 81 sequences sum to 1 (error {:.1e})", (total - 1.0).abs()))
    } else {
        Err(format!("probabilities sum to {total}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_renders_pass_and_fail() {
        let r = Report {
            results: vec![("a", Ok("fine".into())), ("b", Err("broken".into()))],
        };
        assert!(!r.all_passed());
        let text = r.render();
        assert!(text.contains("PASS a: fine"));
        assert!(text.contains("FAIL b: broken"));
        assert!(text.ends_with("1/2 properties passed\n"));
    }

    #[test]
    fn quick_checks_pass() {
        let tree = SeedTree::new(0);
        assert!(constant_energy_bounds(&tree).is_ok());
        assert!(schedule_derivative(&tree).is_ok());
        assert!(ngram_chain_rule(&tree).is_ok());
        assert!(nce_loss_and_gradient(&tree).is_ok());
        assert!(denoiser_gradient(&tree).is_ok());
        assert!(sampler_reductions(&tree, 10).is_ok());
    }
}
