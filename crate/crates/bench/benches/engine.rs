use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dance_bench::Fixture;
use dance_core::loss::{DiversityKernelConfig, LossContext, LossWeights, DEFAULT_SPARSITY_TOL};
use dance_core::search::{generate_counterfactuals, ExplainRequest};
use dance_core::structlearn::direct_lingam;
use dance_core::synth;
use dance_core::tpe::{suggest, Dimension, SearchSpace, TpeConfig, TrialHistory};

fn loss(c: &mut Criterion) {
    let f = Fixture::new(1);
    let x = f.query_normalized();
    let existing = vec![vec![0.2, 0.4, 0.6, 0.8], vec![0.7, 0.1, 0.3, 0.5]];
    let ctx = LossContext {
        x: &x,
        existing: &existing,
        graph: Some(&f.graph),
        desired: 1,
        weights: LossWeights::default(),
        feature_weights: None,
        tol: DEFAULT_SPARSITY_TOL,
        kernel: DiversityKernelConfig::default(),
    };
    let cf = vec![0.5, 0.6, 0.4, 0.7];
    c.bench_function("loss/evaluate", |b| b.iter(|| ctx.evaluate(black_box(&cf), black_box(&[0.3, 0.7])).unwrap()));
}

fn tpe(c: &mut Criterion) {
    let space = SearchSpace::new((0..8).map(|j| Dimension::continuous(format!("x{j}"), 0.0, 1.0)).collect());
    let cfg = TpeConfig::default();
    let mut group = c.benchmark_group("tpe/suggest");
    for n in [50usize, 200] {
        let mut h = TrialHistory::new();
        for i in 0..n {
            let p: Vec<f64> = (0..8).map(|j| ((i * 7 + j * 13) % 97) as f64 / 97.0).collect();
            let v = p.iter().map(|v| (v - 0.3).powi(2)).sum();
            h.push(p, v);
        }
        group.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| b.iter(|| suggest(h, &space, &cfg).unwrap()));
    }
    group.finish();
}

fn lingam(c: &mut Criterion) {
    let mut group = c.benchmark_group("lingam");
    group.sample_size(10);
    for m in [5usize, 10] {
        let (ds, _) = synth::triangular_lingam(m, 2000, 3);
        group.bench_with_input(BenchmarkId::from_parameter(m), &ds, |b, ds| b.iter(|| direct_lingam(ds, 0.05).unwrap()));
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let f = Fixture::new(2);
    let mut req = ExplainRequest::new(f.query.clone(), 1);
    req.budget = 100;
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    group.bench_function("explain/n1-budget100", |b| {
        b.iter(|| generate_counterfactuals(&req, &f.ds, f.model.as_oracle(), Some(&f.graph)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, loss, tpe, lingam, search);
criterion_main!(benches);
