use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nbia_core::channel::generate_channel;
use nbia_core::environment::{best_beam_oracle, Context};
use nbia_core::neuralnet::Scratch;
use nbia_core::scenario::{train_round, Simulation};
use nbia_core::{ChannelParams, Mlp, MlpConfig, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_context(cfg: &MlpConfig, rng: &mut ChaCha8Rng) -> Context {
    Context {
        locations: (0..cfg.location_inputs).map(|_| rng.gen()).collect(),
        beams: (0..cfg.beam_inputs)
            .map(|_| rng.gen_range(-0.25..0.25))
            .collect(),
    }
}

fn bench_mlp(c: &mut Criterion) {
    let cfg = MlpConfig::for_network(5, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let contexts: Vec<Context> = (0..32).map(|_| random_context(&cfg, &mut rng)).collect();
    let batch: Vec<(&Context, usize, f64)> = contexts
        .iter()
        .enumerate()
        .map(|(i, x)| (x, i % 16, 0.5))
        .collect();
    let mut net = Mlp::new(cfg).unwrap();
    let mut scratch = Scratch::default();
    let mut grad = Vec::new();

    c.bench_function("mlp_predict", |b| {
        b.iter(|| net.predict(black_box(&contexts[0]), &mut scratch).unwrap()[0])
    });
    c.bench_function("mlp_train_batch_32", |b| {
        b.iter(|| {
            net.train_batch(black_box(&batch), Some(&mut rng), &mut scratch, &mut grad)
                .unwrap()
        })
    });
}

fn bench_channel(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let params = ChannelParams::default();
    let cb = cfg.build_codebook().unwrap();
    let noise = cfg.layout.noise_power_mw();
    let ap = cfg.layout.ap_positions[0];
    let user = [35.0, 12.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    c.bench_function("generate_channel", |b| {
        b.iter(|| generate_channel(&ap, black_box(&user), &params, &cfg.array, &mut rng).unwrap())
    });
    let h = generate_channel(&ap, &user, &params, &cfg.array, &mut rng)
        .unwrap()
        .h;
    c.bench_function("beam_sweep_16", |b| {
        b.iter(|| best_beam_oracle(black_box(&h), &cb, noise).unwrap())
    });
}

fn bench_episode(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let sim = Simulation::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let binding = sim.draw_binding(&mut rng);
    c.bench_function("draw_episode", |b| {
        b.iter(|| sim.draw_episode(&binding, &mut rng).unwrap())
    });

    let mut short = cfg.clone();
    short.training.episodes = 200;
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("train_round_200_episodes", |b| {
        b.iter_batched(
            || short.clone(),
            |cfg| train_round(&cfg, 0).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_mlp, bench_channel, bench_episode);
criterion_main!(benches);
