//! Compares the rayon-backed data-parallel paths against a single-thread
//! pool on the two hot loops: forest fitting and batch interval
//! construction. Run with `cargo bench -p spconf`.
//!
//! Both configurations execute the identical code and produce identical
//! results (rng substreams are pre-assigned by index), so the bench isolates
//! scheduling overhead and speedup. On a single-core host the two lines
//! should be within noise of each other.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use spconf::conformal::{fit_conformal, Method, MethodConfig};
use spconf::data::{split_dataset, RngSpec};
use spconf::models::fit_kernel_regression;
use spconf::qrf::{fit_qrf, ForestParams};
use spconf::synth::{gen_scenario, ScenarioSpec};

/// Runs `f` on the global pool or a fresh 1-thread pool.
fn on_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("pool")
            .install(f),
    }
}

fn bench_qrf_fit(c: &mut Criterion) {
    let mut rng = RngSpec::new(71).stream("bench-qrf");
    use rand::Rng;
    let pairs: Vec<(Vec<f64>, f64)> = (0..600)
        .map(|_| {
            let x: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
            let y = x.iter().sum::<f64>() + rng.random::<f64>();
            (x, y)
        })
        .collect();
    let params = ForestParams {
        n_trees: 100,
        rng: RngSpec::new(72),
        ..Default::default()
    };

    let mut group = c.benchmark_group("qrf_fit");
    group.sample_size(10);
    for (label, threads) in [("global-pool", None), ("single-thread", Some(1))] {
        group.bench_with_input(BenchmarkId::new(label, pairs.len()), &threads, |b, &t| {
            b.iter(|| on_pool(t, || fit_qrf(black_box(&pairs), &params).unwrap()));
        });
    }
    group.finish();
}

fn bench_batch_intervals(c: &mut Criterion) {
    let base = RngSpec::new(73);
    let data = gen_scenario(&ScenarioSpec::new(1, 1500, 73)).unwrap();
    let split = split_dataset(data, (0.4, 0.4, 0.2), &base).unwrap();
    let train = split.train_set();
    let calib = split.calib_set();
    let test = split.test_set();
    let model = fit_kernel_regression(&train, 0.2).unwrap();

    let mut cfg = MethodConfig::new(Method::Lscp, 0.1);
    cfg.k = 20;
    cfg.forest.n_trees = 50;
    cfg.forest.rng = base.derive("bench-forest");
    let fitted = fit_conformal(&cfg, &model, &calib).unwrap();

    let mut group = c.benchmark_group("lscp_batch_intervals");
    group.sample_size(10);
    for (label, threads) in [("global-pool", None), ("single-thread", Some(1))] {
        group.bench_with_input(BenchmarkId::new(label, test.len()), &threads, |b, &t| {
            b.iter(|| {
                on_pool(t, || {
                    fitted.intervals_batch(black_box(&test), &model).unwrap()
                })
            });
        });
    }
    group.finish();
}

criterion_group!(benches, bench_qrf_fit, bench_batch_intervals);
criterion_main!(benches);
