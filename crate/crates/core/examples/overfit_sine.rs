//! Overfits a small model on one second of a 220 Hz sine and reports the
//! teacher-forced NLL and the dominant frequency of generated audio.
//!
//! Usage: cargo run --release --example overfit_sine -- [steps] [tbptt] [batch] [lr]

use rnnms::dsp::{AudioBuffer, MelConfig};
use rnnms::model::{teacher_forced_nll, ModelConfig, VocoderConfig};
use rnnms::synthesis::{generate, Sampling};
use rnnms::training::{train_corpus, Corpus, TrainConfig, Utterance};

fn main() -> rnnms::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let steps = arg(1, 2000.0) as u64;
    let tbptt = arg(2, 1200.0) as usize;
    let batch = arg(3, 2.0) as usize;
    let lr = arg(4, 3e-3);

    let sr = 24_000;
    let audio = AudioBuffer::new(
        (0..sr).map(|n| 0.5 * (2.0 * std::f64::consts::PI * 220.0 * n as f64 / sr as f64).sin() as f32).collect(),
        sr as u32,
    )?;
    let config = VocoderConfig {
        model: ModelConfig { n_mels: 80, cond_hidden: 16, ar_hidden: 64, n_classes: 256, hop: 300 },
        mel: MelConfig::canonical(),
    };
    let utt = Utterance::prepare("sine", &audio, &config)?;
    let corpus = Corpus::from_utterances(config, vec![utt]);
    let tc = TrainConfig {
        tbptt_len: tbptt,
        batch_size: batch,
        learning_rate: lr,
        max_steps: steps,
        seed: 7,
        holdout_fraction: 0.0,
        serial: true,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let out = train_corpus(&corpus, &tc, None)?;
    let u = &corpus.utterances[0];
    let nll = teacher_forced_nll(&u.classes, &u.mel, &out.params, &config.model)?;
    println!("train {:.1}s; last losses {:?}", t0.elapsed().as_secs_f64(), &out.losses[out.losses.len().saturating_sub(5)..]);
    println!("full-utterance NLL {nll:.4}");
    for sampling in [Sampling::Argmax, Sampling::Temperature(1.0)] {
        let wav = generate(&u.mel, &out.params, &config, 3, sampling)?;
        let s = wav.samples();
        let n = 12_000.min(s.len());
        let w = &s[s.len() - n..];
        let mut best = (0.0, 0.0);
        for f in (100..=400).map(|f| f as f64) {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &x) in w.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * f * i as f64 / sr as f64;
                re += x as f64 * ph.cos();
                im += x as f64 * ph.sin();
            }
            let p = re * re + im * im;
            if p > best.1 {
                best = (f, p);
            }
        }
        println!("{sampling:?}: peak {} Hz", best.0);
    }
    Ok(())
}
