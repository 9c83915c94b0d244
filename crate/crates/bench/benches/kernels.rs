use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::Rng as _;
use rnnms::dsp::{extract_mel, AudioBuffer, MelConfig};
use rnnms::model::{ar_step, forward_teacher_forced, backward, ArState, ModelConfig, ModelParams};
use rnnms::rng::seeded;
use rnnms::simselect::{gmm_kld, SpeakerGmm};

fn noise(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = seeded(seed);
    (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect()
}

fn mel(c: &mut Criterion) {
    let config = MelConfig::canonical();
    let audio = AudioBuffer::new(noise(24_000, 1), 24_000).unwrap();
    let mut g = c.benchmark_group("mel");
    g.throughput(Throughput::Elements(audio.len() as u64));
    g.bench_function("extract_1s", |b| b.iter(|| extract_mel(black_box(&audio), &config).unwrap()));
    g.finish();
}

fn ar(c: &mut Criterion) {
    let mut g = c.benchmark_group("ar_step");
    for hidden in [64, 896] {
        let config = ModelConfig { ar_hidden: hidden, ..ModelConfig::canonical() };
        let params = ModelParams::init(&config, &mut seeded(2));
        let state = ArState::initial(&config);
        let cond = vec![0.1; config.cond_dim()];
        g.bench_with_input(BenchmarkId::from_parameter(hidden), &hidden, |b, _| {
            b.iter(|| ar_step(black_box(&state), &cond, &params, &config).unwrap())
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let config = ModelConfig { n_mels: 80, cond_hidden: 16, ar_hidden: 64, n_classes: 256, hop: 300 };
    let params = ModelParams::init(&config, &mut seeded(3));
    let audio = AudioBuffer::new(noise(1200, 4), 24_000).unwrap();
    let mel = extract_mel(&audio, &MelConfig::canonical()).unwrap();
    let mel = mel.slice(0, 4);
    let codec = rnnms::dsp::MuLaw::new(256).unwrap();
    let classes: Vec<_> = audio.samples().iter().map(|&x| codec.encode(x as f64).unwrap()).collect();
    let mut g = c.benchmark_group("train");
    g.throughput(Throughput::Elements(classes.len() as u64));
    g.sample_size(10);
    g.bench_function("forward_backward_1200", |b| {
        b.iter(|| {
            let pass = forward_teacher_forced(&classes, &mel, &params, &config).unwrap();
            backward(&pass, &params)
        })
    });
    g.finish();
}

fn kld(c: &mut Criterion) {
    let (k, dim) = (32, 80);
    let mut rng = seeded(5);
    let gmm = |rng: &mut rnnms::rng::Rng| {
        SpeakerGmm::new(
            vec![1.0 / k as f64; k],
            (0..k).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect(),
            (0..k).map(|_| (0..dim).map(|_| rng.random_range(0.5..2.0)).collect()).collect(),
        )
        .unwrap()
    };
    let (p, q) = (gmm(&mut rng), gmm(&mut rng));
    let mut g = c.benchmark_group("gmm");
    g.throughput(Throughput::Elements(1000));
    g.bench_function("kld_1000_samples_k32_d80", |b| b.iter(|| gmm_kld(&p, &q, 1000, 6).unwrap()));
    g.finish();
}

criterion_group!(benches, mel, ar, train_step, kld);
criterion_main!(benches);
