use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mirlab::env::{generate_map, observe, Action, EnvConfig, MapKind};
use mirlab::mappo::{Method, Trainer, TrainerConfig};
use mirlab::nn::Tensor;
use mirlab::nn::{Activation, Net};
use mirlab::novelty::{conv_encoder_layers, feature_len, ModelDims};

fn env_step(c: &mut Criterion) {
    let cfg = EnvConfig::new(MapKind::DoorSwitchD, 10, 3);
    let state = generate_map(&cfg).unwrap();
    let acts = [Action::Forward, Action::TurnLeft, Action::Toggle];
    c.bench_function("env step DoorSwitchD10x10", |b| {
        b.iter(|| black_box(state.step(black_box(&acts)).unwrap()))
    });
    c.bench_function("observe 7x7", |b| {
        b.iter(|| black_box(observe(&state, 1).unwrap()))
    });
}

fn encoder(c: &mut Criterion) {
    let dims = ModelDims::default();
    let net: Net<f32> = Net::new(
        conv_encoder_layers(7, &dims, dims.embed, Activation::Tanh),
        1,
    )
    .unwrap();
    let x = Tensor::from_fn(vec![64, feature_len(7)], |i| (i % 7) as f32 / 7.0);
    c.bench_function("conv encoder forward, 64 rows", |b| {
        b.iter(|| black_box(net.forward(&x, None).unwrap()))
    });
    let f = net.forward(&x, None).unwrap();
    let og = Tensor::from_fn(f.output.shape().to_vec(), |i| (i % 3) as f32 - 1.0);
    c.bench_function("conv encoder backward, 64 rows", |b| {
        b.iter(|| black_box(net.backward(&f.cache, &og, None).unwrap()))
    });
}

fn rollout(c: &mut Criterion) {
    let mut group = c.benchmark_group("rollout 16x32 steps");
    group.sample_size(10);
    for method in [Method::NoModel, Method::DeirMir, Method::NoveldMir] {
        let mut cfg = TrainerConfig::new(EnvConfig::new(MapKind::DoorKeyB, 6, 0), method);
        cfg.train.horizon = 32;
        group.bench_function(method.name(), |b| {
            b.iter_batched(
                || Trainer::new(cfg.clone(), 1).unwrap(),
                |mut t| black_box(t.collect_rollout().unwrap()),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, env_step, encoder, rollout);
criterion_main!(benches);
