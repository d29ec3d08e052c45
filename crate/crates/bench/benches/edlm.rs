use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edlm_bench::Fixture;
use edlm_core::diffusion::forward_sample;
use edlm_core::eval::{log_partition_bounds, nelbo_continuous, TimeSampling};
use edlm_core::sampler::{sample_base, sample_edlm};
use edlm_core::{Denoiser, SamplerConfig, SeedTree};

fn sampling(c: &mut Criterion) {
    let fx = Fixture::new(64);
    let mut rng = SeedTree::new(1).stream("bench/sample");
    let mut group = c.benchmark_group("sample");
    group.sample_size(20);
    let base = SamplerConfig::new(fx.seq_len, 32, 1, 0.0);
    group.bench_function("base/N32", |b| b.iter(|| sample_base(&fx.denoiser, &base, &fx.schedule, &mut rng).unwrap()));
    for k in [4, 16] {
        let cfg = SamplerConfig::new(fx.seq_len, 32, k, 0.5);
        for (name, energy) in [("ar", &fx.ar), ("coar", &fx.coar), ("nce", &fx.nce)] {
            group.bench_with_input(BenchmarkId::new(format!("edlm-{name}/N32/w0.5"), k), &k, |b, _| {
                b.iter(|| sample_edlm(&fx.denoiser, energy, &cfg, &fx.schedule, &mut rng).unwrap())
            });
        }
    }
    group.finish();
}

fn energies(c: &mut Criterion) {
    let fx = Fixture::new(64);
    let mut rng = SeedTree::new(2).stream("bench/energy");
    let x0 = fx.docs[0].clone();
    let x_t = forward_sample(&x0, 0.5, &fx.schedule, &mut rng).unwrap();
    let noise = 1.0 - fx.schedule.alpha(0.5).unwrap();
    let mu = fx.denoiser.predict(&x_t, noise).unwrap();
    let mut group = c.benchmark_group("energy");
    group.bench_function("denoiser-predict", |b| b.iter(|| fx.denoiser.predict(&x_t, noise).unwrap()));
    for (name, energy) in [("ar", &fx.ar), ("coar", &fx.coar), ("nce", &fx.nce)] {
        group.bench_function(name, |b| b.iter(|| energy.energy(&x0, &x_t, &mu, noise).unwrap()));
    }
    group.bench_function("partition-bounds/n64", |b| {
        b.iter(|| log_partition_bounds(&fx.ar, &fx.denoiser, &x_t, noise, 64, &mut rng).unwrap())
    });
    group.finish();
}

fn bounds(c: &mut Criterion) {
    let fx = Fixture::new(64);
    let mut rng = SeedTree::new(3).stream("bench/nelbo");
    let mut group = c.benchmark_group("nelbo");
    group.sample_size(20);
    for (name, energy) in [("coar", &fx.coar), ("ar", &fx.ar)] {
        group.bench_function(format!("continuous-{name}/mc8"), |b| {
            b.iter(|| {
                let sampling = TimeSampling::Stratified;
                nelbo_continuous(energy, &fx.denoiser, &fx.docs[1], &fx.schedule, 8, 16, sampling, &mut rng).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sampling, energies, bounds);
criterion_main!(benches);
