//! Rayon global pool against a single-thread pool on the three hot paths.
//! Build with `--no-default-features` for the fully sequential code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use krr_nystrom::diagnostics::{check_norm_equivalence, TrialSetup};
use krr_nystrom::kernels::DecaySpec;
use krr_nystrom::nystrom::{fit_nystrom, subsample_plain};
use krr_nystrom::synthetic::{make_target, sample_dataset, NoiseSpec};
use krr_nystrom::{IndexFunction, KernelSpec};

fn pools() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    vec![("global", None), ("one_thread", Some(single))]
}

fn on<R>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn bench(c: &mut Criterion) {
    let decay = DecaySpec::new(0.5).unwrap();
    let kernel = KernelSpec::designed(0.5, 1024).unwrap();
    let target = make_target(decay, 1024, IndexFunction::holder(0.25).unwrap(), 1).unwrap();
    let data = sample_dataset(decay, &target, NoiseSpec::Gaussian { sigma: 0.1 }, 4096, 2).unwrap();
    let idx = subsample_plain(data.len(), 256, 3).unwrap();
    let inducing: Vec<f64> = idx.iter().map(|&i| data.xs[i]).collect();
    let gaussian = KernelSpec::gaussian(0.2).unwrap();
    let setup = TrialSetup {
        decay,
        truncation: 64,
        n: 1024,
        lambda: 1e-2,
        delta: 0.1,
        trials: 16,
        seed: 4,
    };

    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("cross_gram_designed", name), |b| {
            b.iter(|| on(&pool, || kernel.cross_gram(&data.xs, &inducing).unwrap()))
        });
        group.bench_function(BenchmarkId::new("gram_gaussian", name), |b| {
            b.iter(|| on(&pool, || gaussian.gram(&data.xs[..2048]).unwrap()))
        });
        group.bench_function(BenchmarkId::new("nystrom_fit", name), |b| {
            b.iter(|| on(&pool, || fit_nystrom(&kernel, &data, 1e-3, &idx).unwrap()))
        });
        group.bench_function(BenchmarkId::new("monte_carlo_trials", name), |b| {
            b.iter(|| on(&pool, || check_norm_equivalence(&setup).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
