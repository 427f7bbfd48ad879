use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use quasipot::datasets::representative_sample;
use quasipot::training::{loss_and_gradient, LossConfig};
use quasipot::Decomposition;
use quasipot_bench::{model, points};

fn components(c: &mut Criterion) {
    let mut group = c.benchmark_group("components_batch");
    for width in [50, 100] {
        let m = model(3, width);
        let xs = points(5000, 3);
        group.bench_with_input(BenchmarkId::from_parameter(width), &width, |b, _| {
            b.iter(|| m.components_batch(xs.view()).unwrap())
        });
    }
    group.finish();
}

fn loss_gradient(c: &mut Criterion) {
    let m = model(3, 50);
    let x = points(5000, 3);
    let y = &x * 0.99;
    let reps = points(500, 3);
    let cfg = LossConfig::default();
    c.bench_function("loss_and_gradient/5000x3/w50", |b| {
        b.iter(|| loss_and_gradient(&m, x.view(), y.view(), reps.view(), 1e-2, &cfg).unwrap())
    });
}

fn representatives(c: &mut Criterion) {
    let xs = points(100_000, 3);
    c.bench_function("representative_sample/1e5x3/r0.1", |b| {
        b.iter(|| representative_sample(xs.view(), 0.1, 0).unwrap())
    });
}

criterion_group!(benches, components, loss_gradient, representatives);
criterion_main!(benches);
