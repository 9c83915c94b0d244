//! Seeded autoregressive copy-synthesis from mel spectrograms.
//!
//! Sampling draws one `f64` uniform per output sample from ChaCha20 (see
//! [`crate::rng`]) and inverts the categorical CDF of
//! `softmax(logits / temperature)` in class order, so output is
//! bit-identical for a given seed on every platform.

use rand::Rng as _;

use crate::dsp::{extract_mel, AudioBuffer, MelSpectrogram};
use crate::error::{Error, Result};
use crate::model::{conditioning_forward, ArStepper, ModelParams, VocoderConfig};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Categorical sampling from `softmax(logits / t)`, `t > 0`.
    Temperature(f64),
    /// Most likely class at every step; ignores the seed.
    Argmax,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Temperature(1.0)
    }
}

/// Generates `n_frames * hop` samples conditioned on `mel`.
pub fn generate(
    mel: &MelSpectrogram,
    params: &ModelParams,
    config: &VocoderConfig,
    seed: u64,
    sampling: Sampling,
) -> Result<AudioBuffer> {
    if let Sampling::Temperature(t) = sampling {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {t}")));
        }
    }
    if mel.config() != &config.mel {
        return Err(Error::Config(format!(
            "spectrogram config {:?} does not match model config {:?}",
            mel.config(),
            config.mel
        )));
    }
    let model = &config.model;
    let features = conditioning_forward(mel, params, model)?;
    let mut stepper = ArStepper::new(params, model);
    let codec = *stepper.codec();
    let mut rng = seeded(seed);
    let n = mel.n_frames() * model.hop;
    let mut prev = codec.zero_class();
    let mut out = Vec::with_capacity(n);
    let mut weights = vec![0.0; model.n_classes];

    for i in 0..n {
        stepper.step(prev, features.frame(i / model.hop));
        let logits = &stepper.logits;
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLogits(i));
        }
        let class = match sampling {
            Sampling::Argmax => argmax(logits),
            Sampling::Temperature(t) => {
                let u: f64 = rng.random();
                sample_categorical(logits, t, u, &mut weights)
            }
        };
        prev = codec.class(class)?;
        out.push(codec.decode(prev) as f32);
    }
    AudioBuffer::new(out, config.mel.sample_rate)
}

/// Extracts features from `audio` and vocodes them.
pub fn copy_synthesis(
    audio: &AudioBuffer,
    params: &ModelParams,
    config: &VocoderConfig,
    seed: u64,
    sampling: Sampling,
) -> Result<AudioBuffer> {
    let mel = extract_mel(audio, &config.mel)?;
    generate(&mel, params, config, seed, sampling)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn sample_categorical(logits: &[f64], temperature: f64, u: f64, weights: &mut [f64]) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, &l) in weights.iter_mut().zip(logits) {
        *w = ((l - max) / temperature).exp();
        total += *w;
    }
    let target = u * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // Rounding can leave `target` a hair above the final partial sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_inverts_cdf() {
        let logits = [0.0, 0.0, 0.0, 0.0];
        let mut w = [0.0; 4];
        assert_eq!(sample_categorical(&logits, 1.0, 0.0, &mut w), 0);
        assert_eq!(sample_categorical(&logits, 1.0, 0.26, &mut w), 1);
        assert_eq!(sample_categorical(&logits, 1.0, 0.999_999, &mut w), 3);
        let peaked = [0.0, 50.0, 0.0];
        let mut w = [0.0; 3];
        assert_eq!(sample_categorical(&peaked, 1.0, 0.5, &mut w), 1);
    }

    #[test]
    fn argmax_takes_first_maximum() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, -1.0]), 1);
    }
}
