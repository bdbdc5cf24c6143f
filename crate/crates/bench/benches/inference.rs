use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rstar_bench::{dataset, T5};
use rstar_core::{fit_mle, InferenceEngine, ModelSpec, Problem};

fn fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_mle");
    for (name, model) in [("logistic", ModelSpec::Logistic), ("t5", T5)] {
        for n in [150, 2400] {
            let data = dataset(model, n);
            let problem = Problem::new(model, &data, 1).unwrap();
            g.bench_with_input(BenchmarkId::new(name, n), &problem, |b, p| b.iter(|| fit_mle(p, None).unwrap()));
        }
    }
    g.finish();
}

fn engine(c: &mut Criterion) {
    let mut g = c.benchmark_group("engine");
    for (name, model) in [("logistic", ModelSpec::Logistic), ("t5", T5)] {
        let data = dataset(model, 300);
        let problem = Problem::new(model, &data, 1).unwrap();
        g.bench_function(BenchmarkId::new("build", name), |b| b.iter(|| InferenceEngine::new(problem).unwrap()));
        let eng = InferenceEngine::new(problem).unwrap();
        g.bench_function(BenchmarkId::new("test", name), |b| b.iter(|| eng.test(0.0).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, fit, engine);
criterion_main!(benches);
