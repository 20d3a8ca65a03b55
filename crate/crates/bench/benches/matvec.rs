use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ltibayes_bench::{random_kernel, random_vec};
use ltibayes_core::matvec::{dense_apply, DEFAULT_DENSE_CAP_BYTES};
use ltibayes_core::MatvecPlan;

fn fft_vs_dense(c: &mut Criterion) {
    let mut group = c.benchmark_group("matvec");
    group.sample_size(10);
    for &nt in &[256usize, 1024, 8192] {
        let k = random_kernel(4, 4, nt, 1);
        let v = random_vec(4 * nt, 2);
        let plan = MatvecPlan::new(&k);
        let mut scratch = plan.make_scratch();
        let mut out = vec![0.0; 4 * nt];
        group.bench_with_input(BenchmarkId::new("fft", nt), &nt, |b, _| {
            b.iter(|| plan.apply_into(black_box(&v), &mut out, &mut scratch))
        });
        group.bench_with_input(BenchmarkId::new("fft_adjoint", nt), &nt, |b, _| {
            b.iter(|| plan.apply_adjoint_into(black_box(&v), &mut out, &mut scratch))
        });
        group.bench_with_input(BenchmarkId::new("dense", nt), &nt, |b, _| {
            b.iter(|| dense_apply(&k, black_box(&v), false, DEFAULT_DENSE_CAP_BYTES).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fft_vs_dense);
criterion_main!(benches);
