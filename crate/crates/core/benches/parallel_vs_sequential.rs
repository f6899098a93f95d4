use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fracform::exterior::{poincare_residual, zero_form, ExteriorSpec};
use fracform::expr::Expr;
use fracform::field;
use fracform::identities::{run_suite, Profile, DEFAULT_SEED};
use fracform::par::Execution;

fn poincare(c: &mut Criterion) {
    let alpha = zero_form(field::expr(Expr::parse("x1^2*x2 + sin(x1)*x2").unwrap()), 2).unwrap();
    let spec = ExteriorSpec::new(0.5, vec![0.0, 0.0]);
    let points: Vec<Vec<f64>> = (0..32)
        .map(|k| vec![0.5 + 0.05 * k as f64, 1.5 - 0.03 * k as f64])
        .collect();
    let mut group = c.benchmark_group("poincare_32_points");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| poincare_residual(&alpha, &spec, &points, exec).unwrap())
        });
    }
    group.finish();
}

fn suite(c: &mut Criterion) {
    let mut group = c.benchmark_group("identities_fast");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_suite(None, Profile::Fast, DEFAULT_SEED, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, poincare, suite);
criterion_main!(benches);
