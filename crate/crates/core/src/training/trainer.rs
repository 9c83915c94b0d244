use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::batches::{Batch, BatchStream};
use super::corpus::Corpus;
use super::manifest::CorpusManifest;
use crate::error::{Error, Result};
use crate::model::{
    backward, forward_teacher_forced_in_context, save_checkpoint, teacher_forced_nll, Checkpoint, ModelParams,
    VocoderConfig,
};
use crate::rng::derive_stream;

const STREAM_INIT: u64 = 0;
const STREAM_BATCHES: u64 = 1;
const STREAM_HOLDOUT: u64 = 2;

fn default_holdout() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Window length in samples; a multiple of the hop.
    pub tbptt_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// Fraction of utterances held out for loss reporting only.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub per_speaker_cap: Option<usize>,
    /// Global gradient-norm clipping threshold.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Conditioning frames on each side of a training window. `None` runs
    /// the conditioning network over the whole utterance, as synthesis does.
    #[serde(default)]
    pub cond_context_frames: Option<usize>,
    /// Single-threaded execution. Results are bit-identical either way;
    /// this only controls the thread pool.
    #[serde(default)]
    pub serial: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tbptt_len: 4800,
            batch_size: 8,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_steps: 100_000,
            seed: 0,
            checkpoint_every: 5000,
            holdout_fraction: default_holdout(),
            per_speaker_cap: None,
            grad_clip: None,
            cond_context_frames: None,
            serial: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, hop: usize) -> Result<()> {
        if self.tbptt_len == 0 || !self.tbptt_len.is_multiple_of(hop) {
            return Err(Error::Config(format!(
                "tbptt_len {} must be a positive multiple of hop {hop}",
                self.tbptt_len
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must lie in [0, 1)".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub loss_nats: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Batch loss before each update, `losses[s - 1]` for step `s`.
    pub losses: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
    pub heldout: Vec<usize>,
    pub heldout_nll: Option<f64>,
    pub skipped: usize,
}

/// Mean loss and gradient over a batch. Items may be evaluated in parallel;
/// gradients are summed in item order so the result is thread-count
/// independent.
pub fn batch_gradient(
    batch: &Batch,
    params: &ModelParams,
    config: &VocoderConfig,
    serial: bool,
) -> Result<(f64, ModelParams)> {
    let eval = |item: &super::batches::BatchItem| -> Result<(f64, ModelParams)> {
        let pass = forward_teacher_forced_in_context(&item.classes, &item.mel, item.mel_offset, params, &config.model)?;
        Ok(backward(&pass, params))
    };
    let results: Vec<(f64, ModelParams)> = if serial {
        batch.items.iter().map(eval).collect::<Result<_>>()?
    } else {
        batch.items.par_iter().map(eval).collect::<Result<_>>()?
    };
    let scale = 1.0 / results.len() as f64;
    let mut iter = results.into_iter();
    let (mut loss, mut grads) = iter.next().expect("batch_size >= 1");
    for (l, g) in iter {
        loss += l;
        grads.add_scaled(1.0, &g);
    }
    grads.scale(scale);
    Ok((loss * scale, grads))
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("ckpt_{step:08}.bin"))
}

/// Trains from a manifest, writing checkpoints and `train_log.jsonl` to `out_dir`.
pub fn train(
    manifest: &CorpusManifest,
    config: &VocoderConfig,
    train_config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    train_config.validate(config.mel.hop)?;
    let corpus = Corpus::load(manifest, config, train_config.serial)?;
    train_corpus(&corpus, train_config, Some(out_dir))
}

/// Trains on an already-featurized corpus. With `out_dir = None` nothing is
/// written to disk.
pub fn train_corpus(corpus: &Corpus, tc: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let config = corpus.config;
    config.validate()?;
    tc.validate(config.mel.hop)?;
    if corpus.is_empty() {
        return Err(Error::Input("empty corpus".into()));
    }

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut derive_stream(tc.seed, STREAM_HOLDOUT));
    let n_hold = (corpus.len() as f64 * tc.holdout_fraction).floor() as usize;
    let mut heldout = order[..n_hold].to_vec();
    heldout.sort_unstable();
    let mut train_set = order[n_hold..].to_vec();
    train_set.sort_unstable();

    let mut params = ModelParams::init(&config.model, &mut derive_stream(tc.seed, STREAM_INIT));
    let mut stream = BatchStream::new(
        corpus,
        Some(&train_set),
        tc.tbptt_len,
        tc.batch_size,
        derive_stream(tc.seed, STREAM_BATCHES),
    )?
    .with_context(tc.cond_context_frames);
    let mut adam = Adam::new(&config.model, tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);

    let mut log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join("train_log.jsonl"))?))
        }
        None => None,
    };
    let mut checkpoints = Vec::new();
    let mut save = |params: &ModelParams, step: u64| -> Result<()> {
        if let Some(dir) = out_dir {
            let path = checkpoint_path(dir, step);
            save_checkpoint(&path, &Checkpoint { config, step, params: params.clone() })?;
            checkpoints.push(path);
        }
        Ok(())
    };
    save(&params, 0)?;

    let start = Instant::now();
    let mut losses = Vec::with_capacity(tc.max_steps as usize);
    for step in 1..=tc.max_steps {
        let batch = stream.next_batch();
        let (loss, mut grads) = batch_gradient(&batch, &params, &config, tc.serial)?;
        if !loss.is_finite() {
            let utterances = batch.utterance_ids();
            if let Some(dir) = out_dir {
                let dump = serde_json::json!({ "step": step, "utterances": utterances, "loss": loss.to_string() });
                fs::write(dir.join(format!("nonfinite_step_{step:08}.json")), dump.to_string())?;
            }
            return Err(Error::NonFiniteLoss { step, utterances });
        }
        if let Some(max_norm) = tc.grad_clip {
            let norm = grads.l2_norm();
            if norm > max_norm {
                grads.scale(max_norm / norm);
            }
        }
        adam.update(&mut params, &grads);
        losses.push(loss);

        let wall_ms = start.elapsed().as_millis() as u64;
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut *w, &LogRecord { step, loss_nats: loss, wall_ms })?;
            w.write_all(b"\n")?;
        }
        if step % 100 == 0 || step == 1 {
            log::info!("step {step} loss {loss:.4} nats ({wall_ms} ms)");
        }
        if step % tc.checkpoint_every == 0 || step == tc.max_steps {
            save(&params, step)?;
            if let Some(w) = log.as_mut() {
                w.flush()?;
            }
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }

    let heldout_nll = if heldout.is_empty() {
        None
    } else {
        let mut total = 0.0;
        for &i in &heldout {
            let u = &corpus.utterances[i];
            total += teacher_forced_nll(&u.classes, &u.mel, &params, &config.model)?;
        }
        let mean = total / heldout.len() as f64;
        log::info!("held-out NLL {mean:.4} nats over {} utterances", heldout.len());
        Some(mean)
    };

    Ok(TrainOutcome {
        params,
        losses,
        checkpoints,
        heldout,
        heldout_nll,
        skipped: stream.skipped(),
    })
}
