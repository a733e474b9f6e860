use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use soda_core::pipeline::{
    build_world, distill_soda, run_gad, run_seqkd, take_snapshot, ArchSpec, BlackBoxTeacher,
    CostCounters, TrainConfig,
};

fn world(n: usize) -> (TrainConfig, soda_core::pipeline::World) {
    let cfg = TrainConfig {
        seed: 1,
        instrument: false,
        ..TrainConfig::default()
    };
    let w = build_world(&cfg, 6, ArchSpec::Tabular, n, 16).unwrap();
    (cfg, w)
}

fn bench_snapshot(c: &mut Criterion) {
    let (cfg, w) = world(500);
    c.bench_function("snapshot_500_prompts", |b| {
        b.iter_batched(
            CostCounters::default,
            |mut counters| {
                take_snapshot(
                    black_box(&w.base_student),
                    &w.prompts,
                    &cfg,
                    &mut counters,
                )
                .unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_methods(c: &mut Criterion) {
    let (cfg, w) = world(200);
    let teacher = BlackBoxTeacher::new(w.teacher_params.clone());
    let mut group = c.benchmark_group("methods_n200");
    group.sample_size(10);
    group.bench_function("soda", |b| {
        b.iter(|| distill_soda(&cfg, &w.prompts, &teacher, &w.base_student, None).unwrap())
    });
    group.bench_function("seqkd", |b| {
        b.iter(|| run_seqkd(&cfg, &w.prompts, &teacher, &w.base_student).unwrap())
    });
    group.bench_function("gad_e3_k4", |b| {
        b.iter(|| run_gad(&cfg, &w.prompts, &teacher, &w.base_student).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_snapshot, bench_methods);
criterion_main!(benches);
