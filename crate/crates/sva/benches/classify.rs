use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lopacity_core::par::Exec;
use lopacity_core::program::dsl;
use lopacity_sva::harness::{explore, ExploreConfig, Granularity, PropertySet};

fn workload(name: &str) -> lopacity_core::program::ProgramSpec {
    let path = format!("{}/../../workloads/{name}", env!("CARGO_MANIFEST_DIR"));
    dsl::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn exploration(c: &mut Criterion) {
    let mut g = c.benchmark_group("explore");
    g.sample_size(10);
    for (name, granularity, properties) in [
        ("early-release.wl", Granularity::Event, PropertySet::LuOpacity),
        ("two-incr.wl", Granularity::Operation, PropertySet::All),
    ] {
        let spec = workload(name);
        for exec in [Exec::Sequential, Exec::Parallel] {
            let cfg = ExploreConfig { granularity, properties, exec, ..Default::default() };
            g.bench_with_input(BenchmarkId::new(format!("{exec:?}"), name), &cfg, |b, cfg| {
                b.iter(|| explore(&spec, cfg).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, exploration);
criterion_main!(benches);
