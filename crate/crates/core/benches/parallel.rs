//! Sequential versus rayon-parallel execution of the batch hot paths:
//! random search over projected pairs and the Monte-Carlo Fisher oracle.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hris_isac::baselines::{random_raw_pair, random_search};
use hris_isac::verify::monte_carlo_fim;
use hris_isac::{Exec, ExperimentConfig, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn bench_random_search(c: &mut Criterion) {
    let s = Scenario::build(&ExperimentConfig::desk(), 1).expect("desk scenario");
    let mut group = c.benchmark_group("random_search_512");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(random_search(&s, 512, 1, exec).expect("search runs")))
        });
    }
    group.finish();
}

fn bench_monte_carlo_fim(c: &mut Criterion) {
    let mut s = Scenario::build(&ExperimentConfig::desk(), 1).expect("desk scenario");
    s.target.dwell_symbols = 200;
    let (w, phi) = random_raw_pair(&s, &mut ChaCha8Rng::seed_from_u64(1));
    let pp = s.project(&w, &phi);
    let mut group = c.benchmark_group("monte_carlo_fim_32_draws");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                black_box(monte_carlo_fim(
                    &pp,
                    &s.channels,
                    &s.target,
                    &s.noise,
                    &s.geometry,
                    32,
                    1,
                    exec,
                ))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_random_search, bench_monte_carlo_fim);
criterion_main!(benches);
