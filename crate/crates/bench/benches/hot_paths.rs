//! Benchmarks for the paths that dominate a training run: the per-sample
//! forward/backward pass, metric sweeps, the threshold search, and a whole
//! single-epoch run.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use moscl_bench::{mos_with_labels, score_records};
use moscl_core::curriculum::CurriculumConfig;
use moscl_core::dataset::{generate_synthetic, SynthConfig};
use moscl_core::difficulty::{grid_search_threshold, GridMode};
use moscl_core::metrics::eer;
use moscl_core::model::{backward, forward, weighted_ce_loss, ClassWeights, MlpParams};
use moscl_core::pipeline::{prepare, PrepareConfig};
use moscl_core::trainer::{train, TrainConfig};

fn bench_forward_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let params = MlpParams::init(&[16, 32, 32, 2], &mut rng).unwrap();
    let input: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let weights = ClassWeights::UNIT;

    c.bench_function("forward_backward_16x32x32x2", |b| {
        b.iter(|| {
            let trace = forward(black_box(&params), black_box(&input)).unwrap();
            let loss = weighted_ce_loss(
                trace.logits,
                moscl_core::dataset::Label::Spoof,
                &weights,
                1.2,
            )
            .unwrap();
            let grads =
                backward(&params, &trace, moscl_core::dataset::Label::Spoof, &weights, 1.2)
                    .unwrap();
            black_box((loss, grads))
        })
    });
}

fn bench_eer(c: &mut Criterion) {
    let records = score_records(1800, 200, 42);
    c.bench_function("eer_2000_scores", |b| {
        b.iter(|| eer(black_box(&records)).unwrap())
    });
}

fn bench_grid_search(c: &mut Criterion) {
    let (mos, labels) = mos_with_labels(2000, 43);
    c.bench_function("grid_search_midpoints_2000", |b| {
        b.iter(|| {
            grid_search_threshold(black_box(&mos), black_box(&labels), false, GridMode::Midpoints)
                .unwrap()
        })
    });
}

fn bench_train_epoch(c: &mut Criterion) {
    let data = generate_synthetic(&SynthConfig::default(), false).unwrap();
    let prep_cfg = PrepareConfig {
        curriculum: CurriculumConfig {
            levels: CurriculumConfig::default().levels,
            pacing: vec![1, 5, 9, 12, 14],
        },
        ..PrepareConfig::default()
    };
    let prepared = prepare(data.train.samples, &prep_cfg).unwrap();
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };

    c.bench_function("train_one_epoch_2000_samples", |b| {
        b.iter(|| {
            train(
                black_box(&prepared.train),
                black_box(&data.val.samples),
                Some(&prepared.plan),
                Some(&prepared.policy),
                &cfg,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_forward_backward,
    bench_eer,
    bench_grid_search,
    bench_train_epoch
);
criterion_main!(benches);
