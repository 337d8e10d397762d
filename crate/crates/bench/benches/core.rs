use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use weimix_bench::{random_features, random_heads, random_outcomes};
use weimix_core::metrics::concordance_index;
use weimix_core::mixloss::{nll_from_heads, nll_gradients, CensoringSpec};
use weimix_core::nn::{Architecture, NetworkModel};

fn loss(c: &mut Criterion) {
    let mut group = c.benchmark_group("mixture_nll");
    let (times, events) = random_outcomes(256, 1);
    let cens = CensoringSpec::GlobalThreshold(1.5);
    for p in [1, 2, 4] {
        let heads = random_heads(256, p, 2);
        group.bench_with_input(BenchmarkId::new("loss", p), &heads, |b, h| {
            b.iter(|| nll_from_heads(black_box(h), 1e-4, &times, &events, &cens).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gradients", p), &heads, |b, h| {
            b.iter(|| nll_gradients(black_box(h), 1e-4, &times, &events, &cens).unwrap())
        });
    }
    group.finish();
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("network_batch_256");
    let x = random_features(256, 21, 3);
    let (times, events) = random_outcomes(256, 4);
    let cens = CensoringSpec::PerObservation;
    for p in [1, 2] {
        let model = NetworkModel::new(Architecture::new(21, p), 1e-4, 5).unwrap();
        group.bench_function(BenchmarkId::new("inference", p), |b| b.iter(|| model.infer(black_box(&x)).unwrap()));
        group.bench_function(BenchmarkId::new("forward_backward", p), |b| {
            b.iter(|| {
                let pass = model.forward_frozen(black_box(&x)).unwrap();
                let (_, g) = nll_gradients(&pass.heads, 1e-4, &times, &events, &cens).unwrap();
                model.backward(&pass.cache, &g).unwrap()
            })
        });
    }
    group.finish();
}

fn cindex(c: &mut Criterion) {
    let mut group = c.benchmark_group("concordance_index");
    for n in [1_000, 10_000] {
        let (times, events) = random_outcomes(n, 6);
        let preds: Vec<f64> = random_features(n, 1, 7).into_raw_vec_and_offset().0;
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| concordance_index(black_box(&times), black_box(&preds), &events).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, loss, network, cindex);
criterion_main!(benches);
