use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pebo::config::builtin_source;
use pebo::mappings::{self, MappingSet};
use pebo::plant::PlantDefinition;
use pebo::{harness, linalg, Execution, ScenarioConfig};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn mapping_suite(c: &mut Criterion) {
    let plant = PlantDefinition::ices2022_example();
    let set = MappingSet::ices2022_example();
    let mut group = c.benchmark_group("verify_mappings");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 400), &exec, |b, &exec| {
            b.iter(|| mappings::verify_mappings(&plant, &set, 400, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn scenario_batch(c: &mut Criterion) {
    let base = ScenarioConfig::parse(builtin_source("ices2022_rescaled").unwrap()).unwrap();
    let dirs: Vec<_> = (0..4).map(|_| tempfile::tempdir().unwrap()).collect();
    let configs: Vec<_> = dirs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut cfg = base.clone();
            cfg.integrator.t_end = 0.5;
            cfg.theta[0] = 1.0 + 0.1 * i as f64;
            cfg.out_dir = d.path().to_path_buf();
            cfg
        })
        .collect();
    let mut group = c.benchmark_group("run_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, configs.len()), &exec, |b, &exec| {
            b.iter(|| harness::run_batch(&configs, exec))
        });
    }
    group.finish();
}

fn adjugate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = DMatrix::from_fn(9, 9, |_, _| rng.random_range(-1.0..1.0));
    let m = &m * m.transpose();
    let v = DVector::from_fn(9, |_, _| rng.random_range(-1.0..1.0));
    let mut group = c.benchmark_group("adjugate_times_vector_9x9");
    group.bench_function("cofactor", |b| b.iter(|| linalg::adjugate(&m) * &v));
    group.bench_function("column_replacement", |b| {
        b.iter(|| linalg::adjugate_mul(&m, &v))
    });
    group.finish();
}

criterion_group!(benches, mapping_suite, scenario_batch, adjugate);
criterion_main!(benches);
