//! Production formulas against their enumerated twins on small instances.

use std::sync::Arc;

use edlm_core::diffusion::posterior;
use edlm_core::energy::{energy_ar, energy_coar, joint_logprob_unnormalized};
use edlm_core::eval::{nelbo_discrete, standard_error};
use edlm_core::models::{ar_fit, FixedDenoiser};
use edlm_core::oracle::{
    enumerate_sequences, exact_ar_posterior, exact_general_posterior, exact_nelbo_continuous, exact_nelbo_discrete,
    exact_partition, mask_reference, EnumeratedDistribution, MarginalOracleDenoiser, TabularAr,
};
use edlm_core::rng::{uniform, SeedTree, StreamRng};
use edlm_core::{AutoregressiveModel, Denoiser, EnergyModel, FactorizedDenoiser, NceEnergy, NoiseSchedule, TokenSeq};
use rand::Rng;

fn random_dist(v: usize, len: usize, rng: &mut StreamRng) -> EnumeratedDistribution {
    let support = enumerate_sequences(v, len).unwrap();
    let lw: Vec<f64> = support.iter().map(|_| 3.0 * uniform(rng)).collect();
    EnumeratedDistribution::from_log_weights(v, support, &lw).unwrap()
}

fn random_rows(v: usize, len: usize, rng: &mut StreamRng) -> FixedDenoiser {
    let rows = (0..len)
        .map(|_| {
            let w: Vec<f64> = (0..v).map(|_| 0.05 + uniform(rng)).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        })
        .collect();
    FixedDenoiser::new(rows).unwrap()
}

/// Every x_t in {0..V}^L, masks included.
fn all_noisy(v: usize, len: usize) -> Vec<TokenSeq> {
    enumerate_sequences(v + 1, len)
        .unwrap()
        .into_iter()
        .map(|t| TokenSeq::new(t, v).unwrap())
        .collect()
}

fn random_noisy(x0: &TokenSeq, p_mask: f64, rng: &mut StreamRng) -> TokenSeq {
    let v = x0.vocab_size() as u32;
    let toks = x0.tokens().iter().map(|&t| if uniform(rng) < p_mask { v } else { t }).collect();
    TokenSeq::new(toks, x0.vocab_size()).unwrap()
}

#[test]
fn ar_energy_joint_equals_ar_posterior_for_every_noisy_input() {
    let mut rng = SeedTree::new(11).stream("ar-post");
    let (v, len) = (3, 4);
    let ar = TabularAr::from_distribution(&random_dist(v, len, &mut rng));
    let d = random_rows(v, len, &mut rng);
    let energy = EnergyModel::Ar(Arc::new(ar.clone()));
    let mut worst: f64 = 0.0;
    for x_t in all_noisy(v, len) {
        let exact = exact_ar_posterior(&ar, &x_t).unwrap();
        let mu = d.predict(&x_t, 0.5).unwrap();
        let scores: Vec<f64> = exact
            .support()
            .iter()
            .map(|s| {
                let x0 = TokenSeq::new(s.clone(), v).unwrap();
                joint_logprob_unnormalized(&energy, &mu, &x0, &x_t, 0.5).unwrap()
            })
            .collect();
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
        for (s, p) in scores.iter().zip(exact.probs()) {
            worst = worst.max(((s - m).exp() / z - p).abs());
        }
    }
    assert!(worst <= 1e-10, "max abs error {worst}");
}

#[test]
fn ar_energy_ratio_is_constant_across_completions() {
    // exp(-E) / [p_AR(x0 | x_t) / p_theta(x0 | x_t)] must not depend on x0
    let mut rng = SeedTree::new(12).stream("ratio");
    let (v, len) = (3, 4);
    let ar = TabularAr::from_distribution(&random_dist(v, len, &mut rng));
    let d = random_rows(v, len, &mut rng);
    for x_t in all_noisy(v, len).into_iter().step_by(7) {
        let exact = exact_ar_posterior(&ar, &x_t).unwrap();
        let mu = d.predict(&x_t, 0.3).unwrap();
        let logs: Vec<f64> = exact
            .iter()
            .map(|(s, p)| {
                let x0 = TokenSeq::new(s.to_vec(), v).unwrap();
                let e = energy_ar(&ar, &mu, &x0, &x_t).unwrap();
                -e - (p.ln() - mu.log_prob_of(&x_t, &x0).unwrap())
            })
            .collect();
        for l in &logs {
            assert!((l - logs[0]).abs() <= 1e-10);
        }
    }
}

#[test]
fn posterior_matches_general_formula_on_random_tuples() {
    let mut rng = SeedTree::new(13).stream("general");
    let sched = NoiseSchedule::loglinear(1.7).unwrap();
    for _ in 0..1000 {
        let v = rng.random_range(2..=4);
        let len = rng.random_range(1..=5);
        let x0 = TokenSeq::new((0..len).map(|_| rng.random_range(0..v as u32)).collect(), v).unwrap();
        let x_t = random_noisy(&x0, uniform(&mut rng), &mut rng);
        let (a, b) = (uniform(&mut rng), uniform(&mut rng));
        let (s, t) = (a.min(b), a.max(b));
        let prod = posterior(&x_t, &x0, s, t, &sched).unwrap();
        let rows = exact_general_posterior(&x_t, &x0, s, t, &mask_reference(v), &sched).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let pp = prod.positions[i];
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (j, &p) in row.iter().enumerate() {
                let expect = if j == v {
                    pp.mask_prob
                } else if j as u32 == pp.token {
                    pp.token_prob
                } else {
                    0.0
                };
                assert!((p - expect).abs() <= 1e-12, "state {j}: {p} vs {expect}");
            }
        }
    }
}

#[test]
fn carry_over_energy_is_self_normalized() {
    let mut rng = SeedTree::new(14).stream("coar");
    let (v, len) = (3, 4);
    let ar = TabularAr::from_distribution(&random_dist(v, len, &mut rng));
    let d = random_rows(v, len, &mut rng);
    let energy = EnergyModel::CoAr(Arc::new(ar.clone()));
    for _ in 0..100 {
        let x0 = TokenSeq::new((0..len).map(|_| rng.random_range(0..v as u32)).collect(), v).unwrap();
        let x_t = random_noisy(&x0, 0.6, &mut rng);
        assert!(exact_partition(&energy, &d, &x_t, 0.6).unwrap().abs() <= 1e-8);
        // the same sum written as an expectation under the denoiser
        let mu = d.predict(&x_t, 0.6).unwrap();
        let mut expectation = 0.0;
        for c in edlm_core::oracle::completions(&x_t).unwrap() {
            let e = energy_coar(&ar, &mu, &c, &x_t).unwrap();
            expectation += mu.log_prob_of(&x_t, &c).unwrap().exp() * (-e).exp();
        }
        assert!((expectation - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn partition_of_constant_energy() {
    let v = 3;
    let mut params = vec![0.0; NceEnergy::feature_count(v)];
    let c = 1.75;
    // the constant feature sits first among the three scalars
    params[NceEnergy::feature_count(v) - 3] = c;
    let energy = EnergyModel::Nce(NceEnergy::from_params(v, params).unwrap());
    let d = FixedDenoiser::repeated(vec![0.2, 0.5, 0.3], 4).unwrap();
    let x_t = TokenSeq::new(vec![3, 1, 3, 3], v).unwrap();
    assert!((exact_partition(&energy, &d, &x_t, 0.4).unwrap() + c).abs() < 1e-12);
    assert!(exact_partition(&EnergyModel::Zero, &d, &x_t, 0.4).unwrap().abs() < 1e-12);
}

#[test]
fn ngram_log_prob_equals_brute_force_product() {
    let mut rng = SeedTree::new(15).stream("ngram");
    let corpus: Vec<u32> = (0..300).map(|_| rng.random_range(0..3)).collect();
    let m = ar_fit(&corpus, 3, 2, 0.1).unwrap();
    for s in enumerate_sequences(3, 4).unwrap() {
        let mut p = 1.0;
        for i in 0..4usize {
            // context is the last min(i, 2) tokens
            let ctx = &s[i.saturating_sub(2)..i];
            let row = m.conditional_row(ctx);
            p *= row[s[i] as usize].exp();
        }
        let lp = m.log_prob(&TokenSeq::new(s.clone(), 3).unwrap()).unwrap();
        assert!((lp - p.ln()).abs() <= 1e-12);
    }
    // chain rule across a concatenation
    let a = TokenSeq::new(vec![0, 2, 1, 1, 0, 2], 3).unwrap();
    let steps: f64 = (0..6).map(|i| m.cond_log_prob(&a.tokens()[..i], a.tokens()[i])).sum();
    assert_eq!(m.log_prob(&a).unwrap(), steps);
}

#[test]
fn exact_posterior_of_marginal_denoiser() {
    let mut rng = SeedTree::new(16).stream("marg");
    let dist = random_dist(3, 3, &mut rng);
    let d = MarginalOracleDenoiser::new(dist.clone());
    let sched = NoiseSchedule::linear();
    let x_t = TokenSeq::new(vec![3, 1, 3], 3).unwrap();
    let post = edlm_core::oracle::exact_posterior_x0(&x_t, &dist, 0.5, &sched).unwrap();
    let out = d.predict(&x_t, 0.5).unwrap();
    for tok in 0..3u32 {
        let marginal: f64 = post.iter().filter(|(s, _)| s[0] == tok).map(|(_, p)| p).sum();
        assert!((out.prob(0, tok) - marginal).abs() < 1e-12);
    }
}

#[test]
fn training_loss_is_an_unbiased_continuous_bound() {
    let mut rng = SeedTree::new(17).stream("elbo");
    let v = 3;
    let mut d = FactorizedDenoiser::new(v, 2).unwrap();
    d.params_mut().iter_mut().for_each(|p| *p = 2.0 * uniform(&mut rng) - 1.0);
    let sched = NoiseSchedule::linear();
    let x0 = TokenSeq::new(vec![2, 0, 0, 1], v).unwrap();
    let exact = exact_nelbo_continuous(&EnergyModel::Zero, &d, &x0, &sched, 64).unwrap();
    let draws: Vec<f64> = (0..50_000).map(|_| d.sample_loss(&x0, &sched, &mut rng).unwrap()).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let se = standard_error(&draws);
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn carry_over_discrete_nelbo_matches_enumeration() {
    let mut rng = SeedTree::new(18).stream("coar-nelbo");
    let (v, len) = (3, 4);
    let ar = TabularAr::from_distribution(&random_dist(v, len, &mut rng));
    let d = random_rows(v, len, &mut rng);
    let energy = EnergyModel::CoAr(Arc::new(ar));
    let sched = NoiseSchedule::linear();
    let x0 = TokenSeq::new(vec![1, 2, 2, 0], v).unwrap();
    let exact = exact_nelbo_discrete(&energy, &d, &x0, &sched, 8).unwrap();
    let draws: Vec<f64> = (0..20_000)
        .map(|_| nelbo_discrete(&energy, &d, &x0, &sched, 8, 2, &mut rng).unwrap())
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let se = standard_error(&draws);
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn tabular_ar_is_exact() {
    let mut rng = SeedTree::new(19).stream("tab");
    let dist = random_dist(4, 3, &mut rng);
    let ar = TabularAr::from_distribution(&dist);
    for (s, p) in dist.iter() {
        let lp = ar.log_prob(&TokenSeq::new(s.to_vec(), 4).unwrap()).unwrap();
        assert!((lp - p.ln()).abs() < 1e-12);
    }
}
