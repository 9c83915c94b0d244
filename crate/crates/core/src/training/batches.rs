use rand::seq::SliceRandom;
use rand::Rng as _;

use super::corpus::Corpus;
use crate::dsp::{MelSpectrogram, MuLawClass};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// A training window: `frames * hop` aligned samples plus the conditioning
/// frames around them. The window's first frame is `mel.frame(mel_offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub utterance: usize,
    pub utterance_id: String,
    pub start_frame: usize,
    pub classes: Vec<MuLawClass>,
    pub mel: MelSpectrogram,
    pub mel_offset: usize,
}

impl BatchItem {
    /// Previous-sample inputs, `classes[..N - 1]`.
    pub fn inputs(&self) -> &[MuLawClass] {
        &self.classes[..self.classes.len() - 1]
    }

    /// Prediction targets, `classes[1..]`.
    pub fn targets(&self) -> &[MuLawClass] {
        &self.classes[1..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

impl Batch {
    pub fn utterance_ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.utterance_id.clone()).collect()
    }
}

/// Endless stream of minibatches. Utterances are drawn without replacement
/// within an epoch (a seeded permutation of the eligible set); batches may
/// straddle epoch boundaries. Each draw picks a uniformly random
/// frame-aligned window inside the utterance.
pub struct BatchStream<'a> {
    corpus: &'a Corpus,
    eligible: Vec<usize>,
    skipped: usize,
    frames_per_window: usize,
    context: Option<usize>,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    rng: Rng,
}

impl<'a> BatchStream<'a> {
    pub fn new(
        corpus: &'a Corpus,
        subset: Option<&[usize]>,
        tbptt_len: usize,
        batch_size: usize,
        rng: Rng,
    ) -> Result<Self> {
        let hop = corpus.config.mel.hop;
        if tbptt_len == 0 || !tbptt_len.is_multiple_of(hop) {
            return Err(Error::Config(format!(
                "tbptt_len {tbptt_len} must be a positive multiple of hop {hop}"
            )));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let frames_per_window = tbptt_len / hop;
        let candidates: Vec<usize> = match subset {
            Some(s) => s.to_vec(),
            None => (0..corpus.len()).collect(),
        };
        let (eligible, short): (Vec<usize>, Vec<usize>) = candidates
            .into_iter()
            .partition(|&i| corpus.utterances[i].n_frames() >= frames_per_window);
        if !short.is_empty() {
            log::warn!(
                "skipping {} utterances shorter than one {tbptt_len}-sample window",
                short.len()
            );
        }
        if eligible.is_empty() {
            return Err(Error::Input(format!(
                "no utterance is at least {tbptt_len} samples long"
            )));
        }
        Ok(Self {
            corpus,
            eligible,
            skipped: short.len(),
            frames_per_window,
            context: None,
            batch_size,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            rng,
        })
    }

    /// Utterances excluded because they are shorter than one window.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    /// Completed epochs so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Conditioning frames kept on each side of a window; `None` (the
    /// default) keeps the whole utterance.
    pub fn with_context(mut self, frames: Option<usize>) -> Self {
        self.context = frames;
        self
    }

    fn draw(&mut self) -> usize {
        if self.cursor == self.order.len() {
            if !self.order.is_empty() {
                self.epoch += 1;
            }
            self.order = self.eligible.clone();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    pub fn next_batch(&mut self) -> Batch {
        let hop = self.corpus.config.mel.hop;
        let f = self.frames_per_window;
        let items = (0..self.batch_size)
            .map(|_| {
                let u = self.draw();
                let utt = &self.corpus.utterances[u];
                let start = self.rng.random_range(0..=utt.n_frames() - f);
                let (lo, hi) = match self.context {
                    Some(c) => (start.saturating_sub(c), (start + f + c).min(utt.n_frames())),
                    None => (0, utt.n_frames()),
                };
                BatchItem {
                    utterance: u,
                    utterance_id: utt.id.clone(),
                    start_frame: start,
                    classes: utt.classes[start * hop..(start + f) * hop].to_vec(),
                    mel: utt.mel.slice(lo, hi - lo),
                    mel_offset: start - lo,
                }
            })
            .collect();
        Batch { items }
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        Some(self.next_batch())
    }
}
