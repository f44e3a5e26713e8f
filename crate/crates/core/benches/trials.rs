use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nystromkit::approx::{approx_errors, Algorithm};
use nystromkit::kernels::{discretize, CovarianceChoice, Kernel, KernelId, QuadratureRule};
use nystromkit::linalg::NormTriple;
use nystromkit::par;
use nystromkit::sketch::{draw_sketch_stream, CovarianceSpec};
use nystromkit::SpsdMatrix;

fn trial(a: &SpsdMatrix, cov: &CovarianceSpec, cols: usize, i: usize) -> NormTriple {
    let omega = draw_sketch_stream(cov, cols, 1, i as u64);
    let f = Algorithm::Stabilized.run(a, &omega).unwrap();
    approx_errors(a, &f).unwrap()
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("nystrom_trials");
    group.sample_size(10);
    for n in [100usize, 200] {
        let op = discretize(&Kernel::new(KernelId::Matern52, 1).unwrap(), QuadratureRule::GaussLegendre, n).unwrap();
        let cov: CovarianceChoice = "matern:nu=1.5".parse().unwrap();
        let cov = cov.build(&op.grid).unwrap();
        let a = op.a;
        a.eig().unwrap();
        let trials = 64;

        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| black_box(par::map_indexed_sequential(trials, |i| trial(&a, &cov, 25, i))))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| black_box(par::map_indexed_parallel(trials, |i| trial(&a, &cov, 25, i))))
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo);
criterion_main!(benches);
