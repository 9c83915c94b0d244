use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gru::GruWeights;
use crate::dsp::MelConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_mels: usize,
    pub cond_hidden: usize,
    pub ar_hidden: usize,
    pub n_classes: usize,
    pub hop: usize,
}

impl ModelConfig {
    /// 80 mels, 2 x 128 bidirectional conditioning GRUs, 896-unit
    /// autoregressive GRU, 1024 mu-law classes.
    pub fn canonical() -> Self {
        Self {
            n_mels: 80,
            cond_hidden: 128,
            ar_hidden: 896,
            n_classes: 1024,
            hop: 300,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || self.cond_hidden == 0 || self.ar_hidden == 0 || self.hop == 0 {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        if self.n_classes < 2 || self.n_classes > u16::MAX as usize {
            return Err(Error::Config(format!(
                "n_classes must lie in [2, 65535], got {}",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Width of the per-frame conditioning vector.
    pub fn cond_dim(&self) -> usize {
        2 * self.cond_hidden
    }

    /// Autoregressive GRU input: previous sample amplitude plus conditioning.
    pub fn ar_input_dim(&self) -> usize {
        1 + self.cond_dim()
    }
}

/// Model dimensions together with the feature pipeline they were trained on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocoderConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub mel: MelConfig,
}

impl VocoderConfig {
    pub fn canonical() -> Self {
        Self {
            model: ModelConfig::canonical(),
            mel: MelConfig::canonical(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.mel.validate()?;
        if self.model.hop != self.mel.hop || self.model.n_mels != self.mel.n_mels {
            return Err(Error::Config(format!(
                "model (hop {}, n_mels {}) disagrees with mel config (hop {}, n_mels {})",
                self.model.hop, self.model.n_mels, self.mel.hop, self.mel.n_mels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let mut a = Self::zeros(inputs, outputs);
        let s = 1.0 / (inputs as f64).sqrt();
        a.w.iter_mut().for_each(|v| *v = rng.random_range(-s..=s));
        a
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cond_gru_1_fwd: GruWeights,
    pub cond_gru_1_bwd: GruWeights,
    pub cond_gru_2_fwd: GruWeights,
    pub cond_gru_2_bwd: GruWeights,
    pub ar_gru: GruWeights,
    pub affine_a: Affine,
    pub affine_b: Affine,
}

/// A named view of one parameter tensor.
pub struct Tensor<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a mut Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config.cond_hidden;
        Self {
            cond_gru_1_fwd: GruWeights::zeros(config.n_mels, c),
            cond_gru_1_bwd: GruWeights::zeros(config.n_mels, c),
            cond_gru_2_fwd: GruWeights::zeros(2 * c, c),
            cond_gru_2_bwd: GruWeights::zeros(2 * c, c),
            ar_gru: GruWeights::zeros(config.ar_input_dim(), config.ar_hidden),
            affine_a: Affine::zeros(config.ar_hidden, config.ar_hidden),
            affine_b: Affine::zeros(config.ar_hidden, config.n_classes),
        }
    }

    /// Uniform fan-in initialization, rounded to `f32` so that checkpoints
    /// reproduce the parameters exactly.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        let c = config.cond_hidden;
        let mut p = Self {
            cond_gru_1_fwd: GruWeights::init(config.n_mels, c, rng),
            cond_gru_1_bwd: GruWeights::init(config.n_mels, c, rng),
            cond_gru_2_fwd: GruWeights::init(2 * c, c, rng),
            cond_gru_2_bwd: GruWeights::init(2 * c, c, rng),
            ar_gru: GruWeights::init(config.ar_input_dim(), config.ar_hidden, rng),
            affine_a: Affine::init(config.ar_hidden, config.ar_hidden, rng),
            affine_b: Affine::init(config.ar_hidden, config.n_classes, rng),
        };
        p.round_to_f32();
        p
    }

    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::with_capacity(19);
        for (prefix, g) in self.grus() {
            out.push(Tensor { name: format!("{prefix}.w"), dims: vec![3 * g.hidden, g.input_dim], data: &g.w });
            out.push(Tensor { name: format!("{prefix}.u"), dims: vec![3 * g.hidden, g.hidden], data: &g.u });
            out.push(Tensor { name: format!("{prefix}.b"), dims: vec![3 * g.hidden], data: &g.b });
        }
        for (prefix, a) in [("affine_a", &self.affine_a), ("affine_b", &self.affine_b)] {
            out.push(Tensor { name: format!("{prefix}.w"), dims: vec![a.outputs, a.inputs], data: &a.w });
            out.push(Tensor { name: format!("{prefix}.b"), dims: vec![a.outputs], data: &a.b });
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::with_capacity(19);
        let grus = [
            ("cond_gru_1_fwd", &mut self.cond_gru_1_fwd),
            ("cond_gru_1_bwd", &mut self.cond_gru_1_bwd),
            ("cond_gru_2_fwd", &mut self.cond_gru_2_fwd),
            ("cond_gru_2_bwd", &mut self.cond_gru_2_bwd),
            ("ar_gru", &mut self.ar_gru),
        ];
        for (prefix, g) in grus {
            let (h, i) = (g.hidden, g.input_dim);
            out.push(TensorMut { name: format!("{prefix}.w"), dims: vec![3 * h, i], data: &mut g.w });
            out.push(TensorMut { name: format!("{prefix}.u"), dims: vec![3 * h, h], data: &mut g.u });
            out.push(TensorMut { name: format!("{prefix}.b"), dims: vec![3 * h], data: &mut g.b });
        }
        for (prefix, a) in [("affine_a", &mut self.affine_a), ("affine_b", &mut self.affine_b)] {
            let (o, i) = (a.outputs, a.inputs);
            out.push(TensorMut { name: format!("{prefix}.w"), dims: vec![o, i], data: &mut a.w });
            out.push(TensorMut { name: format!("{prefix}.b"), dims: vec![o], data: &mut a.b });
        }
        out
    }

    fn grus(&self) -> [(&'static str, &GruWeights); 5] {
        [
            ("cond_gru_1_fwd", &self.cond_gru_1_fwd),
            ("cond_gru_1_bwd", &self.cond_gru_1_bwd),
            ("cond_gru_2_fwd", &self.cond_gru_2_fwd),
            ("cond_gru_2_bwd", &self.cond_gru_2_bwd),
            ("ar_gru", &self.ar_gru),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            debug_assert_eq!(dst.name, src.name);
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let reference = Self::zeros(config);
        for (a, b) in self.tensors().iter().zip(reference.tensors()) {
            if a.dims != b.dims || a.data.len() != b.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {} has dims {:?}, config implies {:?}",
                    a.name, a.dims, b.dims
                )));
            }
        }
        Ok(())
    }
}
