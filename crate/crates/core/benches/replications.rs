//! Sequential vs parallel replication loop on a small synthetic experiment.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oal_core::harness::{run_experiment, ExperimentConfig};
use oal_core::par::Execution;

fn config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
        "scenario": "synthetic-linear",
        "synthetic": { "d": 10 },
        "variants": ["random-sampling", "fixed", "adaptive"],
        "n": [2500],
        "k": { "fixed": 50 },
        "replications": 64
    }"#,
    )
    .expect("bench config is valid")
}

fn replications(c: &mut Criterion) {
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let mut cfg = config();
        cfg.execution = exec;
        let label = format!("{:?}", exec.effective()).to_lowercase();
        group.bench_with_input(BenchmarkId::from_parameter(label), &cfg, |b, cfg| {
            b.iter(|| run_experiment(cfg).expect("experiment runs"))
        });
    }
    group.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);
