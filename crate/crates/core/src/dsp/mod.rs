//! Deterministic signal processing: audio buffers, mu-law companding and
//! log-mel analysis.

mod audio;
mod features;
mod mel;
mod mulaw;

pub use audio::{read_wav, write_wav, AudioBuffer, CANONICAL_SAMPLE_RATE};
pub use features::{read_features, write_features, FEATURE_FILE_VERSION};
pub use mel::{extract_mel, hz_to_mel, mel_filterbank, mel_to_hz, Filterbank, MelConfig, MelSpectrogram};
pub use mulaw::{mulaw_decode, mulaw_encode, MuLaw, MuLawClass};

pub(crate) use mel::MelExtractor as MelExtractorHandle;
