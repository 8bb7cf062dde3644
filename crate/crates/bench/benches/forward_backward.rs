use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pga_bench::Fixture;
use pga_core::models::{Dropout, ModelKind};
use pga_core::training::{objective, TrainConfig};
use pga_core::uq::{mc_sample, McConfig};
use pga_core::{Rng, Tape};

fn forward_backward(c: &mut Criterion) {
    let f = Fixture::new();
    let batch = f.batch(32);
    let cfg = TrainConfig::default();
    let scale = f.prep.density_scale();
    let mut group = c.benchmark_group("forward_backward_32_dates");
    for kind in ModelKind::ALL {
        let model = f.model(kind);
        group.bench_with_input(BenchmarkId::from_parameter(kind), &model, |b, model| {
            let mut dropout = Dropout::new(0.2, Rng::new(3));
            b.iter(|| {
                let mut tape = Tape::new();
                let o = objective(&mut tape, model, &batch, &cfg, scale, &mut dropout).unwrap();
                black_box(tape.backward(o.total).unwrap());
            })
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let f = Fixture::new();
    let batch = f.batch(8);
    let dates: Vec<_> = batch
        .date_indices
        .iter()
        .map(|&t| f.prep.raw.dates()[t])
        .collect();
    let mc = McConfig {
        n_samples: 100,
        dropout: 0.2,
        seed: 5,
    };
    let mut group = c.benchmark_group("mc_sample_8_dates_100_masks");
    group.sample_size(10);
    for kind in [ModelKind::Pga, ModelKind::Lstm] {
        let model = f.model(kind);
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| black_box(mc_sample(&model, &batch, &dates, &f.prep.norm, &mc).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward, sampling);
criterion_main!(benches);
