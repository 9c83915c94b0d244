use rand::Rng as _;

use super::kernels::{matvec, matvec_t_add, outer_add, sigmoid};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Weights of one GRU cell with gates stacked in (reset, update, candidate)
/// order.
///
/// ```text
/// r  = sigmoid(W_r x + U_r h + b_r)
/// z  = sigmoid(W_z x + U_z h + b_z)
/// n  = tanh(W_n x + r * (U_n h + b_n))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub input_dim: usize,
    pub hidden: usize,
    /// `3H x I`
    pub w: Vec<f64>,
    /// `3H x H`
    pub u: Vec<f64>,
    /// `3H`
    pub b: Vec<f64>,
}

/// Activations saved by a forward step for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GruCache {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `U_n h + b_n`
    pub un: Vec<f64>,
}

impl GruWeights {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w: vec![0.0; 3 * hidden * input_dim],
            u: vec![0.0; 3 * hidden * hidden],
            b: vec![0.0; 3 * hidden],
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut g = Self::zeros(input_dim, hidden);
        let sw = 1.0 / (input_dim as f64).sqrt();
        let su = 1.0 / (hidden as f64).sqrt();
        g.w.iter_mut().for_each(|v| *v = rng.random_range(-sw..=sw));
        g.u.iter_mut().for_each(|v| *v = rng.random_range(-su..=su));
        g
    }

    fn check(&self, x: &[f64], h: &[f64]) -> Result<()> {
        if x.len() != self.input_dim || h.len() != self.hidden {
            return Err(Error::Shape(format!(
                "GRU expects input {} and hidden {}, got {} and {}",
                self.input_dim,
                self.hidden,
                x.len(),
                h.len()
            )));
        }
        Ok(())
    }

    fn preactivations(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let mut px = vec![0.0; 3 * hd];
        let mut ph = vec![0.0; 3 * hd];
        matvec(&self.w, self.input_dim, x, &mut px);
        matvec(&self.u, hd, h, &mut ph);
        (px, ph)
    }

    pub(crate) fn step_cached(&self, x: &[f64], h: &[f64], out: &mut [f64]) -> GruCache {
        let hd = self.hidden;
        let (px, ph) = self.preactivations(x, h);
        let mut r = vec![0.0; hd];
        let mut z = vec![0.0; hd];
        let mut n = vec![0.0; hd];
        let mut un = vec![0.0; hd];
        for i in 0..hd {
            r[i] = sigmoid(px[i] + ph[i] + self.b[i]);
            z[i] = sigmoid(px[hd + i] + ph[hd + i] + self.b[hd + i]);
            un[i] = ph[2 * hd + i] + self.b[2 * hd + i];
            n[i] = (px[2 * hd + i] + r[i] * un[i]).tanh();
            out[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
        }
        GruCache {
            x: x.to_vec(),
            h: h.to_vec(),
            r,
            z,
            n,
            un,
        }
    }

    pub(crate) fn step_into(&self, x: &[f64], h: &[f64], out: &mut [f64]) {
        let hd = self.hidden;
        let (px, ph) = self.preactivations(x, h);
        for i in 0..hd {
            let r = sigmoid(px[i] + ph[i] + self.b[i]);
            let z = sigmoid(px[hd + i] + ph[hd + i] + self.b[hd + i]);
            let n = (px[2 * hd + i] + r * (ph[2 * hd + i] + self.b[2 * hd + i])).tanh();
            out[i] = (1.0 - z) * n + z * h[i];
        }
    }

    /// Accumulates parameter gradients into `grad` given `dh_out = dL/dh'`.
    /// Adds `dL/dx` into `dx` when requested and overwrites `dh_prev` with `dL/dh`.
    pub(crate) fn backward(
        &self,
        cache: &GruCache,
        dh_out: &[f64],
        grad: &mut GruWeights,
        dx: Option<&mut [f64]>,
        dh_prev: &mut [f64],
    ) {
        let hd = self.hidden;
        // Gate pre-activation gradients, stacked like the weights.
        let mut dp = vec![0.0; 3 * hd];
        let mut dun = vec![0.0; hd];
        for i in 0..hd {
            let (r, z, n) = (cache.r[i], cache.z[i], cache.n[i]);
            let dn = dh_out[i] * (1.0 - z);
            let dz = dh_out[i] * (cache.h[i] - n);
            let dpn = dn * (1.0 - n * n);
            let dr = dpn * cache.un[i];
            dp[i] = dr * r * (1.0 - r);
            dp[hd + i] = dz * z * (1.0 - z);
            dp[2 * hd + i] = dpn;
            dun[i] = dpn * r;
            dh_prev[i] = dh_out[i] * z;
        }
        // Recurrent path: r and z gates see dp, candidate sees dun.
        let mut dph = dp.clone();
        dph[2 * hd..].copy_from_slice(&dun);

        outer_add(&mut grad.w, self.input_dim, &dp, &cache.x);
        outer_add(&mut grad.u, hd, &dph, &cache.h);
        for (g, d) in grad.b.iter_mut().zip(&dph) {
            *g += d;
        }
        matvec_t_add(&self.u, hd, &dph, dh_prev);
        if let Some(dx) = dx {
            matvec_t_add(&self.w, self.input_dim, &dp, dx);
        }
    }
}

/// One GRU update.
pub fn gru_step(x: &[f64], h: &[f64], weights: &GruWeights) -> Result<Vec<f64>> {
    weights.check(x, h)?;
    let mut out = vec![0.0; weights.hidden];
    weights.step_into(x, h, &mut out);
    Ok(out)
}
