#![allow(dead_code)]

use rand::Rng as _;
use rnnms::dsp::{MelConfig, MelSpectrogram, MuLawClass};
use rnnms::model::{ModelConfig, ModelParams, VocoderConfig};
use rnnms::rng::seeded;

pub fn tiny_config() -> ModelConfig {
    ModelConfig { n_mels: 5, cond_hidden: 4, ar_hidden: 6, n_classes: 8, hop: 2 }
}

pub fn tiny_mel_config(n_mels: usize, hop: usize) -> MelConfig {
    MelConfig { n_mels, hop, win: 64, n_fft: 64, fmin: 0.0, fmax: 12_000.0, ..MelConfig::canonical() }
}

/// Parameters with every tensor (biases included) uniform in `[-scale, scale]`.
pub fn random_params(config: &ModelConfig, seed: u64, scale: f64) -> ModelParams {
    let mut rng = seeded(seed);
    let mut p = ModelParams::zeros(config);
    for t in p.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
    }
    p
}

pub fn random_mel(config: &ModelConfig, frames: usize, seed: u64) -> MelSpectrogram {
    let mut rng = seeded(seed);
    let data = (0..frames * config.n_mels).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    MelSpectrogram::from_frames(tiny_mel_config(config.n_mels, config.hop), data).unwrap()
}

pub fn random_classes(config: &ModelConfig, n: usize, seed: u64) -> Vec<MuLawClass> {
    let codec = rnnms::dsp::MuLaw::new(config.n_classes).unwrap();
    let mut rng = seeded(seed);
    (0..n).map(|_| codec.class(rng.random_range(0..config.n_classes)).unwrap()).collect()
}

pub fn tiny_vocoder(config: ModelConfig) -> VocoderConfig {
    VocoderConfig { model: config, mel: tiny_mel_config(config.n_mels, config.hop) }
}
