use std::hint::black_box;

use cfn_bench::instance;
use cfn_core::{baseline_cdc, build_model, evaluate_power, solve, ExportFormat, MilpModel, MilpOptions, SolveOptions};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    for n in [2, 4, 6] {
        let (graph, vsrs) = instance(n, 0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve(black_box(&graph), black_box(&vsrs), &SolveOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn evaluator(c: &mut Criterion) {
    let (graph, vsrs) = instance(10, 1);
    let placement = baseline_cdc(&graph, &vsrs).unwrap().placement;
    c.bench_function("evaluate_power/10", |b| {
        b.iter(|| evaluate_power(black_box(&placement), black_box(&vsrs), &graph).unwrap())
    });
}

fn model_text(c: &mut Criterion) {
    let (graph, vsrs) = instance(3, 2);
    let mut g = c.benchmark_group("model");
    g.sample_size(10);
    g.bench_function("build/3", |b| b.iter(|| build_model(&graph, black_box(&vsrs), &MilpOptions::default()).unwrap()));
    let model = build_model(&graph, &vsrs, &MilpOptions::default()).unwrap();
    for format in [ExportFormat::Lp, ExportFormat::Mps] {
        let text = model.export(format);
        g.bench_function(format!("round_trip/{format:?}"), |b| {
            b.iter(|| MilpModel::parse(black_box(&text), format).unwrap().export(format))
        });
    }
    g.finish();
}

criterion_group!(benches, solver, evaluator, model_text);
criterion_main!(benches);
