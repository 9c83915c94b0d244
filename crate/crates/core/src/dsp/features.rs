//! Mel feature files: one JSON header line followed by little-endian `f32`
//! frame data, frame-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mel::{MelConfig, MelSpectrogram};
use crate::error::{Error, Result};

pub const FEATURE_FILE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    n_mels: usize,
    hop: usize,
    win: usize,
    n_fft: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
    frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_floor: Option<f64>,
}

pub fn write_features(path: impl AsRef<Path>, mel: &MelSpectrogram) -> Result<()> {
    let c = mel.config();
    let header = Header {
        version: FEATURE_FILE_VERSION,
        n_mels: c.n_mels,
        hop: c.hop,
        win: c.win,
        n_fft: c.n_fft,
        sample_rate: c.sample_rate,
        fmin: c.fmin,
        fmax: c.fmax,
        frames: mel.n_frames(),
        log_floor: (c.log_floor != MelConfig::CANONICAL_LOG_FLOOR).then_some(c.log_floor),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in mel.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<MelSpectrogram> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(&line).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad feature header: {e}"),
    })?;
    if header.version != FEATURE_FILE_VERSION {
        return Err(Error::Format(format!(
            "unsupported feature file version {}",
            header.version
        )));
    }
    let config = MelConfig {
        sample_rate: header.sample_rate,
        n_fft: header.n_fft,
        hop: header.hop,
        win: header.win,
        n_mels: header.n_mels,
        fmin: header.fmin,
        fmax: header.fmax,
        log_floor: header.log_floor.unwrap_or(MelConfig::CANONICAL_LOG_FLOOR),
    };
    config.validate()?;
    let expected = header.frames * header.n_mels * 4;
    let mut raw = Vec::with_capacity(expected);
    r.read_to_end(&mut raw)?;
    if raw.len() != expected {
        return Err(Error::Format(format!(
            "feature payload has {} bytes, header implies {expected}",
            raw.len()
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    MelSpectrogram::from_frames(config, data)
}
