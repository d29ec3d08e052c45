//! Sampler behaviour against exact target distributions.

use std::collections::HashMap;
use std::sync::Arc;

use edlm_core::models::ar_fit;
use edlm_core::oracle::{ChainAr, EnumeratedDistribution, MarginalOracleDenoiser};
use edlm_core::rng::{uniform, SeedTree};
use edlm_core::sampler::{sample_base, sample_edlm, SamplerConfig};
use edlm_core::{Denoiser, EnergyModel, FactorizedDenoiser, NoiseSchedule, TokenSeq};

fn histogram<F: FnMut(u64) -> TokenSeq>(n: u64, mut draw: F) -> HashMap<Vec<u32>, u64> {
    let mut counts = HashMap::new();
    for i in 0..n {
        *counts.entry(draw(i).into_tokens()).or_insert(0) += 1;
    }
    counts
}

#[test]
fn unit_k_and_zero_window_reduce_to_base_sampler() {
    let mut rng = SeedTree::new(1).stream("params");
    let v = 5;
    let mut d = FactorizedDenoiser::new(v, 2).unwrap();
    d.params_mut().iter_mut().for_each(|p| *p = 2.0 * uniform(&mut rng) - 1.0);
    let corpus: Vec<u32> = (0..400).map(|i| (i * i % 7 % v) as u32).collect();
    let energy = EnergyModel::Ar(Arc::new(ar_fit(&corpus, v, 2, 0.1).unwrap()));
    let sched = NoiseSchedule::linear();
    let tree = SeedTree::new(2);
    for i in 0..100 {
        let base_cfg = SamplerConfig::new(12, 8, 1, 0.0);
        let base = sample_base(&d, &base_cfg, &sched, &mut tree.indexed("traj", i)).unwrap();
        let k1 = sample_edlm(&d, &energy, &SamplerConfig::new(12, 8, 1, 1.0), &sched, &mut tree.indexed("traj", i)).unwrap();
        let w0 = sample_edlm(&d, &energy, &SamplerConfig::new(12, 8, 16, 0.0), &sched, &mut tree.indexed("traj", i)).unwrap();
        assert_eq!(base, k1, "trajectory {i}");
        assert_eq!(base, w0, "trajectory {i}");
    }
}

#[test]
fn exact_denoiser_reproduces_a_two_sequence_distribution() {
    // the sequences differ in one position, so the factorized chain is exact
    let dist = EnumeratedDistribution::from_weights(2, 3, |s| match s {
        [0, 1, 1] => 0.7,
        [0, 1, 0] => 0.3,
        _ => 0.0,
    })
    .unwrap();
    let d = MarginalOracleDenoiser::new(dist);
    let sched = NoiseSchedule::linear();
    let tree = SeedTree::new(3);
    let n = 50_000u64;
    let cfg = SamplerConfig::new(3, 4, 1, 0.0);
    let counts = histogram(n, |i| sample_base(&d, &cfg, &sched, &mut tree.indexed("s", i)).unwrap());
    assert_eq!(counts.len(), 2);
    let f = counts[&vec![0, 1, 1]] as f64 / n as f64;
    let sigma = (0.7 * 0.3 / n as f64).sqrt();
    assert!((f - 0.7).abs() <= 3.0 * sigma, "{f}");
}

#[test]
fn importance_sampling_moves_closer_to_the_ar_target() {
    let ar = ChainAr { vocab_size: 2, follow: 0.9 };
    let target = EnumeratedDistribution::from_ar(&ar, 3).unwrap();
    let d = MarginalOracleDenoiser::new(target.clone());
    let energy = EnergyModel::Ar(Arc::new(ar));
    let sched = NoiseSchedule::linear();
    let tree = SeedTree::new(4);
    let n = 50_000u64;
    let base_cfg = SamplerConfig::new(3, 2, 1, 0.0);
    let base = histogram(n, |i| sample_base(&d, &base_cfg, &sched, &mut tree.indexed("base", i)).unwrap());
    let cfg = SamplerConfig::new(3, 2, 16, 1.0);
    let edlm = histogram(n, |i| sample_edlm(&d, &energy, &cfg, &sched, &mut tree.indexed("edlm", i)).unwrap());
    let (tb, te) = (target.tv_to_counts(&base), target.tv_to_counts(&edlm));
    let se = (target.tv_standard_error(&base).powi(2) + target.tv_standard_error(&edlm).powi(2)).sqrt();
    assert!(te + 3.0 * se < tb, "edlm {te} vs base {tb} (se {se})");
}

#[test]
fn samples_never_contain_masks() {
    let d = MarginalOracleDenoiser::new(EnumeratedDistribution::uniform(3, 4).unwrap());
    let sched = NoiseSchedule::loglinear(2.0).unwrap();
    let tree = SeedTree::new(5);
    for n in 1..10 {
        let s = sample_base(&d, &SamplerConfig::new(4, n, 1, 0.0), &sched, &mut tree.indexed("m", n as u64)).unwrap();
        assert!(!s.has_mask());
        assert_eq!(d.vocab_size(), 3);
    }
}
