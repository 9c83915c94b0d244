//! Speaker-independent neural vocoding toolkit.
//!
//! The crate covers the full copy-synthesis loop of a WaveRNN-style vocoder
//! conditioned on log-mel spectrograms, plus the evaluation machinery that
//! goes with it:
//!
//! * [`dsp`]: mel-spectrogram extraction, mu-law companding, WAV and feature-file IO.
//! * [`model`]: bidirectional GRU conditioning stack, autoregressive GRU
//!   sample predictor, loss and exact reverse-mode gradients.
//! * [`training`]: corpus manifests, windowed minibatches, Adam, checkpoints.
//! * [`synthesis`]: seeded sampling of waveforms from (oracle) spectrograms.
//! * [`simselect`]: diagonal GMMs over mel frames and Monte Carlo KL divergence
//!   for choosing the most similar speaker-dependent anchor.
//! * [`evalstats`]: MUSHRA session planning, relative MUSHRA, paired t-tests
//!   with Holm-Bonferroni correction.
//! * [`evalservice`]: HTTP service that hosts a listening test and collects ratings.

pub mod dsp;
pub mod error;
pub mod evalservice;
pub mod evalstats;
pub mod model;
pub mod rng;
pub mod simselect;
pub mod synthesis;
pub mod training;

pub use dsp::{AudioBuffer, MelConfig, MelSpectrogram, MuLaw, MuLawClass};
pub use error::{Error, Result};
pub use model::{ModelConfig, ModelParams, VocoderConfig};
pub use evalstats::{RatingRecord, SessionPlan};
pub use simselect::SpeakerGmm;


