//! Corpus ingestion, windowed minibatches, Adam and checkpointing.
//!
//! Speaker identity is never a model input: manifests carry speaker and
//! language labels only for per-speaker capping and corpus summaries.

mod adam;
mod batches;
mod corpus;
mod manifest;
mod trainer;

pub use adam::Adam;
pub use batches::{Batch, BatchItem, BatchStream};
pub use corpus::{Corpus, Utterance};
pub use manifest::{from_entries, load_manifest, CorpusManifest, CorpusSummary, ManifestEntry};
pub use trainer::{batch_gradient, checkpoint_path, train, train_corpus, LogRecord, TrainConfig, TrainOutcome};

use crate::error::Result;
use crate::rng::Rng;

/// Minibatch stream over a featurized corpus.
pub fn make_batches<'a>(corpus: &'a Corpus, config: &TrainConfig, rng: Rng) -> Result<BatchStream<'a>> {
    config.validate(corpus.config.mel.hop)?;
    Ok(BatchStream::new(corpus, None, config.tbptt_len, config.batch_size, rng)?.with_context(config.cond_context_frames))
}
