use rayon::prelude::*;

use super::manifest::CorpusManifest;
use crate::dsp::{read_wav, AudioBuffer, MelExtractorHandle, MelSpectrogram, MuLaw, MuLawClass};
use crate::error::Result;
use crate::model::VocoderConfig;

/// One utterance prepared for training: mel frames and the mu-law classes
/// of the aligned audio (`n_frames * hop` samples).
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub mel: MelSpectrogram,
    pub classes: Vec<MuLawClass>,
}

impl Utterance {
    /// Extracts features and aligns audio to whole frames.
    ///
    /// Center-padded analysis yields `len / hop + 1` frames; the final frame
    /// (centred past the last full hop) is dropped and the audio trimmed to
    /// `(len / hop) * hop` samples.
    pub fn prepare(id: impl Into<String>, audio: &AudioBuffer, config: &VocoderConfig) -> Result<Self> {
        let extractor = MelExtractorHandle::new(&config.mel)?;
        Self::prepare_with(id.into(), audio, config, &extractor)
    }

    pub(crate) fn prepare_with(
        id: String,
        audio: &AudioBuffer,
        config: &VocoderConfig,
        extractor: &MelExtractorHandle,
    ) -> Result<Self> {
        let codec = MuLaw::new(config.model.n_classes)?;
        let mel = extractor.extract(audio)?;
        let frames = audio.len() / config.mel.hop;
        let mel = mel.slice(0, frames);
        let classes = codec.encode_all(&audio.samples()[..frames * config.mel.hop])?;
        Ok(Self { id, mel, classes })
    }

    pub fn n_frames(&self) -> usize {
        self.mel.n_frames()
    }
}

/// Feature-extracted training corpus in manifest order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub config: VocoderConfig,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn from_utterances(config: VocoderConfig, utterances: Vec<Utterance>) -> Self {
        Self { config, utterances }
    }

    /// Loads and featurizes every manifest entry, in parallel unless `serial`.
    /// Output order (and content) does not depend on the thread count.
    pub fn load(manifest: &CorpusManifest, config: &VocoderConfig, serial: bool) -> Result<Self> {
        config.validate()?;
        let extractor = MelExtractorHandle::new(&config.mel)?;
        let prepare = |e: &super::manifest::ManifestEntry| -> Result<Utterance> {
            let audio = read_wav(&e.audio_path)?;
            Utterance::prepare_with(e.utterance_id.clone(), &audio, config, &extractor)
        };
        let utterances = if serial {
            manifest.entries.iter().map(prepare).collect::<Result<Vec<_>>>()?
        } else {
            manifest.entries.par_iter().map(prepare).collect::<Result<Vec<_>>>()?
        };
        Ok(Self {
            config: *config,
            utterances,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}
