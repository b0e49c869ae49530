use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vfsl_core::harness::{
    evaluate_with, generate_synthetic, EvalData, Method, SyntheticSpec, TaskSpec,
};
use vfsl_core::linalg::{gram, Cholesky};
use vfsl_core::sim_mapper::{fit_with, SolverConfig};
use vfsl_core::similarity::similarity_matrix_with;
use vfsl_core::Exec;

const STRATEGIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn task(classes: usize, per_class: usize, prompts: usize, dim: usize) -> EvalData {
    generate_synthetic(&SyntheticSpec {
        num_classes: classes,
        dim,
        prompts,
        shots: per_class,
        test_per_class: 0,
        cluster_spread: 0.5,
        seed: 3,
    })
    .unwrap()
    .into()
}

fn bench_kernels(c: &mut Criterion) {
    let data = task(50, 20, 500, 256);
    let sims = similarity_matrix_with(&data.features, &data.prompts, Exec::Sequential).unwrap();
    let normal = {
        let mut g = gram(sims.matrix(), Exec::Sequential);
        vfsl_core::linalg::add_diagonal(&mut g, 1.0);
        g
    };

    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::new("similarity", name), &exec, |b, &e| {
            b.iter(|| similarity_matrix_with(&data.features, &data.prompts, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gram", name), &exec, |b, &e| {
            b.iter(|| gram(sims.matrix(), e))
        });
        group.bench_with_input(BenchmarkId::new("cholesky", name), &exec, |b, &e| {
            b.iter(|| Cholesky::factor(normal.clone(), e).unwrap())
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let data = task(100, 40, 1000, 256);
    let sims = similarity_matrix_with(&data.features, &data.prompts, Exec::Sequential).unwrap();
    let config = SolverConfig::default();

    let mut group = c.benchmark_group("fit_4000x1000x100");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| fit_with(&sims, &data.labels, &config, e).unwrap())
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let data = task(20, 40, 300, 128);
    let task = TaskSpec::new(Method::Sim, 16, vec![1, 2, 3, 4]);

    let mut group = c.benchmark_group("evaluate_4_seeds");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| evaluate_with(&task, &data, e).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_kernels, bench_fit, bench_evaluate);
criterion_main!(benches);
