use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dynaflow::rankpool::{approximate_pool, pool_flow, SolverConfig};
use dynaflow::tvl1::{compute_flow, Tvl1Params};
use dynaflow_bench::{random_window, textured_pair};

fn bench_pool_window(c: &mut Criterion) {
    let mut group = c.benchmark_group("pool_flow");
    group.sample_size(10);
    for side in [64usize, 224] {
        let window = random_window(25, side, 9);
        group.bench_function(format!("25x{side}x{side}"), |b| {
            b.iter(|| pool_flow(black_box(&window), 1.0, &SolverConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_approximate_pool(c: &mut Criterion) {
    let window = random_window(25, 224, 5);
    let frames: Vec<Vec<f64>> = window
        .iter()
        .map(|q| {
            let mut flat: Vec<f64> =
                q.u_gray.values().iter().map(|&x| f64::from(x)).collect();
            flat.extend(q.v_gray.values().iter().map(|&x| f64::from(x)));
            flat
        })
        .collect();
    c.bench_function("approximate_pool/25x224x224", |b| {
        b.iter(|| approximate_pool(black_box(&frames)).unwrap())
    });
}

fn bench_tvl1(c: &mut Criterion) {
    let mut group = c.benchmark_group("tvl1");
    group.sample_size(10);
    let (prev, next) = textured_pair(64, 3);
    group.bench_function("pair_64x64", |b| {
        b.iter(|| compute_flow(black_box(&prev), black_box(&next), &Tvl1Params::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_pool_window, bench_approximate_pool, bench_tvl1);
criterion_main!(benches);
