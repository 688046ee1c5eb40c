use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use learnfilter_bench::pass_rate_grid;
use learnfilter_core::bounds::random_discrete;
use learnfilter_core::learnability::monte_carlo_kl;
use learnfilter_core::rng::Purpose;
use learnfilter_core::{exact_reverse_kl, group_advantages, RewardDistribution, Seed, Temperature};

fn cgf(c: &mut Criterion) {
    let t = Temperature::new(4.0).unwrap();
    let grid = pass_rate_grid(99);
    c.bench_function("bernoulli_kl_grid_99", |b| {
        b.iter(|| {
            grid.iter().map(|&p| exact_reverse_kl(&RewardDistribution::bernoulli(p).unwrap(), t).unwrap()).sum::<f64>()
        })
    });

    let d = random_discrete(&mut Seed(1).stream(Purpose::Verify, &[0]));
    c.bench_function("discrete_cgf", |b| b.iter(|| d.cgf_centered(black_box(0.7)).unwrap()));
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo_kl");
    let d = RewardDistribution::gaussian(0.0, 1.0).unwrap();
    for n in [10_000usize, 100_000] {
        let samples = d.sample(&mut Seed(2).stream(Purpose::Sample, &[]), n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &samples, |b, s| {
            b.iter(|| monte_carlo_kl(s, Temperature::new(2.0).unwrap()).unwrap())
        });
    }
    group.finish();
}

fn advantages(c: &mut Criterion) {
    let rewards: Vec<f64> = (0..64).map(|i| (i % 3 == 0) as u8 as f64).collect();
    c.bench_function("group_advantages_64", |b| b.iter(|| group_advantages(black_box(&rewards)).unwrap()));
}

criterion_group!(benches, cgf, monte_carlo, advantages);
criterion_main!(benches);
