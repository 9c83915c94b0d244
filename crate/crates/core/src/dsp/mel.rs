use std::sync::Arc;

use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::audio::AudioBuffer;
use crate::error::{Error, Result};

/// STFT and mel-projection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub win: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    #[serde(default = "default_log_floor")]
    pub log_floor: f64,
}

fn default_log_floor() -> f64 {
    MelConfig::CANONICAL_LOG_FLOOR
}

impl Default for MelConfig {
    fn default() -> Self {
        Self::canonical()
    }
}

impl MelConfig {
    pub const CANONICAL_LOG_FLOOR: f64 = 1e-5;

    /// 80 bands over 50 Hz - 12 kHz at 24 kHz, 12.5 ms hop, 50 ms Hann window.
    pub fn canonical() -> Self {
        Self {
            sample_rate: 24_000,
            n_fft: 2048,
            hop: 300,
            win: 1200,
            n_mels: 80,
            fmin: 50.0,
            fmax: 12_000.0,
            log_floor: Self::CANONICAL_LOG_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 || self.n_fft < 2 || self.hop == 0 || self.n_mels == 0 {
            return fail(format!("sample_rate, n_fft, hop and n_mels must be positive: {self:?}"));
        }
        if self.win > self.n_fft || self.hop > self.win {
            return fail(format!(
                "need hop <= win <= n_fft, got hop={} win={} n_fft={}",
                self.hop, self.win, self.n_fft
            ));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return fail(format!(
                "need 0 <= fmin < fmax <= sample_rate / 2, got fmin={} fmax={}",
                self.fmin, self.fmax
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return fail(format!("log_floor must be positive, got {}", self.log_floor));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced by center-padded analysis of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn floor_value(&self) -> f32 {
        self.log_floor.ln() as f32
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters, row-major `n_mels x n_bins`, unit peak.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
}

impl Filterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.n_bins)
    }

    /// Center frequency of each filter.
    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    fn project(&self, spectrum: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.rows()) {
            *o = row.iter().zip(spectrum).map(|(w, s)| w * s).sum();
        }
    }
}

pub fn mel_filterbank(config: &MelConfig) -> Result<Filterbank> {
    config.validate()?;
    let n_bins = config.n_bins();
    let lo = hz_to_mel(config.fmin);
    let hi = hz_to_mel(config.fmax);
    let step = (hi - lo) / (config.n_mels + 1) as f64;
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect();
    let bin_hz = config.sample_rate as f64 / config.n_fft as f64;

    let mut weights = vec![0.0; config.n_mels * n_bins];
    for m in 0..config.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            *w = rise.min(fall).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::Config(format!(
                "mel filter {m} ({left:.1}-{right:.1} Hz) has no support at n_fft={}",
                config.n_fft
            )));
        }
    }
    Ok(Filterbank {
        n_mels: config.n_mels,
        n_bins,
        weights,
        centers_hz: edges[1..=config.n_mels].to_vec(),
    })
}

/// Log-mel energies, `frames x n_mels`, natural log.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    config: MelConfig,
    n_frames: usize,
    data: Vec<f32>,
}

impl MelSpectrogram {
    pub fn from_frames(config: MelConfig, data: Vec<f32>) -> Result<Self> {
        if !data.len().is_multiple_of(config.n_mels) {
            return Err(Error::Shape(format!(
                "{} values is not a multiple of n_mels={}",
                data.len(),
                config.n_mels
            )));
        }
        Ok(Self {
            config,
            n_frames: data.len() / config.n_mels,
            data,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.config.n_mels
    }

    pub fn is_empty(&self) -> bool {
        self.n_frames == 0
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.config.n_mels;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.config.n_mels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Frames `start..start + len` as a new spectrogram.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let n = self.config.n_mels;
        Self {
            config: self.config,
            n_frames: len,
            data: self.data[start * n..(start + len) * n].to_vec(),
        }
    }
}

/// Reflect index into `[0, len)` without repeating the edge sample.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    (if m < len as isize { m } else { period - m }) as usize
}

fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

pub(crate) struct MelExtractor {
    config: MelConfig,
    filterbank: Filterbank,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MelExtractor {
    pub(crate) fn new(config: &MelConfig) -> Result<Self> {
        let filterbank = mel_filterbank(config)?;
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(Self {
            config: *config,
            filterbank,
            window: periodic_hann(config.win),
            fft,
        })
    }

    pub(crate) fn extract(&self, audio: &AudioBuffer) -> Result<MelSpectrogram> {
        let cfg = &self.config;
        if audio.sample_rate() != cfg.sample_rate {
            return Err(Error::Config(format!(
                "audio is {} Hz but mel config expects {} Hz",
                audio.sample_rate(),
                cfg.sample_rate
            )));
        }
        if audio.is_empty() {
            return Err(Error::Input("cannot extract features from empty audio".into()));
        }
        let x = audio.samples();
        let len = x.len();
        let n_frames = cfg.frame_count(len);
        let pad = (cfg.n_fft / 2) as isize;
        let win_offset = ((cfg.n_fft - cfg.win) / 2) as isize;
        let floor = cfg.log_floor;

        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0; cfg.n_bins()];
        let mut mel = vec![0.0; cfg.n_mels];
        let mut data = Vec::with_capacity(n_frames * cfg.n_mels);

        for t in 0..n_frames {
            buf.fill(Complex64::new(0.0, 0.0));
            let start = (t * cfg.hop) as isize - pad + win_offset;
            for (n, w) in self.window.iter().enumerate() {
                let s = x[reflect(start + n as isize, len)] as f64;
                buf[win_offset as usize + n] = Complex64::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in mag.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            self.filterbank.project(&mag, &mut mel);
            data.extend(mel.iter().map(|&v| v.max(floor).ln() as f32));
        }
        MelSpectrogram::from_frames(*cfg, data)
    }
}

/// Reflect-centered STFT magnitude projected onto the mel filterbank, then
/// `ln(max(v, log_floor))`. Produces `len / hop + 1` frames.
pub fn extract_mel(audio: &AudioBuffer, config: &MelConfig) -> Result<MelSpectrogram> {
    MelExtractor::new(config)?.extract(audio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_roundtrip() {
        for f in [0.0, 50.0, 700.0, 1000.0, 12_000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn reflect_matches_numpy_reflect() {
        // np.pad([0,1,2,3], 3, mode="reflect") -> [3,2,1,0,1,2,3,2,1,0]
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = MelConfig::canonical();
        c.fmax = 13_000.0;
        assert!(c.validate().is_err());
        let mut c = MelConfig::canonical();
        c.win = 4096;
        assert!(c.validate().is_err());
        let mut c = MelConfig::canonical();
        c.log_floor = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn degenerate_filterbank_is_a_config_error() {
        // 200 bands crammed below 300 Hz with 23 Hz bins leaves some filters empty.
        let c = MelConfig {
            n_fft: 1024,
            win: 1024,
            n_mels: 200,
            fmin: 0.0,
            fmax: 300.0,
            ..MelConfig::canonical()
        };
        assert!(matches!(mel_filterbank(&c), Err(Error::Config(_))));
    }

    #[test]
    fn rate_mismatch_and_empty_audio() {
        let c = MelConfig::canonical();
        let a = AudioBuffer::new(vec![0.0; 100], 16_000).unwrap();
        assert!(matches!(extract_mel(&a, &c), Err(Error::Config(_))));
        let a = AudioBuffer::new(vec![], 24_000).unwrap();
        assert!(matches!(extract_mel(&a, &c), Err(Error::Input(_))));
    }

    #[test]
    fn short_inputs_still_follow_frame_law() {
        let c = MelConfig::canonical();
        for len in [1usize, 2, 299, 300, 301, 1500] {
            let a = AudioBuffer::new(vec![0.25; len], 24_000).unwrap();
            assert_eq!(extract_mel(&a, &c).unwrap().n_frames(), len / 300 + 1);
        }
    }
}
