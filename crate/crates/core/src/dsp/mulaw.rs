use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of one mu-law quantization bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MuLawClass(u16);

impl MuLawClass {
    /// A class of the canonical 10-bit codec.
    pub fn new(index: u16) -> Option<Self> {
        (index < 1024).then_some(Self(index))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Mu-law compander with uniform quantization of the companded value.
///
/// `classes` bins cover [-1, 1] in the companded domain and mu = classes - 1,
/// so the canonical 10-bit codec has 1024 classes and mu = 1023.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuLaw {
    classes: u16,
    mu: f64,
    ln1p_mu: f64,
}

impl MuLaw {
    pub const TEN_BIT: u16 = 1024;

    pub fn new(classes: usize) -> Result<Self> {
        if !(2..=u16::MAX as usize).contains(&classes) {
            return Err(Error::Config(format!(
                "mu-law class count must lie in [2, 65535], got {classes}"
            )));
        }
        let mu = (classes - 1) as f64;
        Ok(Self {
            classes: classes as u16,
            mu,
            ln1p_mu: mu.ln_1p(),
        })
    }

    pub fn ten_bit() -> Self {
        Self::new(Self::TEN_BIT as usize).unwrap()
    }

    pub fn classes(&self) -> usize {
        self.classes as usize
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn class(&self, index: usize) -> Result<MuLawClass> {
        if index < self.classes() {
            Ok(MuLawClass(index as u16))
        } else {
            Err(Error::InputDomain(format!(
                "class {index} outside [0, {})",
                self.classes
            )))
        }
    }

    /// The class of amplitude zero (the first bin above the midpoint).
    pub fn zero_class(&self) -> MuLawClass {
        MuLawClass(self.classes / 2)
    }

    pub fn compand(&self, x: f64) -> f64 {
        x.signum() * (self.mu * x.abs()).ln_1p() / self.ln1p_mu
    }

    pub fn expand(&self, y: f64) -> f64 {
        y.signum() * ((self.ln1p_mu * y.abs()).exp() - 1.0) / self.mu
    }

    pub fn encode(&self, x: f64) -> Result<MuLawClass> {
        if !(x.is_finite() && (-1.0..=1.0).contains(&x)) {
            return Err(Error::InputDomain(format!(
                "amplitude {x} outside [-1, 1]; audio must be normalized"
            )));
        }
        Ok(self.encode_unchecked(x))
    }

    pub(crate) fn encode_unchecked(&self, x: f64) -> MuLawClass {
        let k = self.classes as f64;
        // compand(0) is +0 so zero lands on the midpoint bin.
        let y = if x == 0.0 { 0.0 } else { self.compand(x) };
        let idx = ((y + 1.0) / 2.0 * k).floor().clamp(0.0, k - 1.0);
        MuLawClass(idx as u16)
    }

    /// Decodes to the expanded bin center.
    pub fn decode(&self, c: MuLawClass) -> f64 {
        debug_assert!(c.0 < self.classes);
        let y = 2.0 * (c.0 as f64 + 0.5) / self.classes as f64 - 1.0;
        self.expand(y)
    }

    pub fn encode_all(&self, samples: &[f32]) -> Result<Vec<MuLawClass>> {
        samples.iter().map(|&x| self.encode(x as f64)).collect()
    }
}

pub fn mulaw_encode(x: f64) -> Result<MuLawClass> {
    MuLaw::ten_bit().encode(x)
}

pub fn mulaw_decode(c: MuLawClass) -> f64 {
    MuLaw::ten_bit().decode(c)
}
