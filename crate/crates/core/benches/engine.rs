use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use subexp_ruin::config::ExperimentConfig;
use subexp_ruin::par::Execution;
use subexp_ruin::simulate::{ruin_mc_bigjump, ruin_mc_cone};

const PATHS: u64 = 20_000;

fn engine(c: &mut Criterion) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let v = ExperimentConfig::load(&path).unwrap().validate().unwrap();
    let u = 88.0;
    let rule = v.rule(u).unwrap();
    let mut g = c.benchmark_group("reference_u88");
    g.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_with_input(BenchmarkId::new("crude", name), &exec, |b, &exec| {
            b.iter(|| black_box(ruin_mc_cone(&v.model, &v.theta, v.config.delta, u, PATHS, &rule, 1, exec).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("bigjump", name), &exec, |b, &exec| {
            b.iter(|| black_box(ruin_mc_bigjump(&v.model, &v.theta, v.config.delta, u, PATHS, &rule, 1, None, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, engine);
criterion_main!(benches);
