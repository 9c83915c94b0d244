use crate::model::{ModelConfig, ModelParams};

/// Adam with bias correction. Updated parameters are rounded to `f32`, the
/// checkpoint storage precision.
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(config: &ModelConfig, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            step: 0,
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] = (p.data[i] - lr * mhat / (vhat.sqrt() + eps)) as f32 as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = ModelConfig { n_mels: 2, cond_hidden: 1, ar_hidden: 2, n_classes: 4, hop: 1 };
        let mut p = ModelParams::zeros(&cfg);
        let mut g = ModelParams::zeros(&cfg);
        g.affine_b.b = vec![2.0, -0.5, 0.0, 1e-3];
        let mut adam = Adam::new(&cfg, 0.01, 0.9, 0.999, 1e-8);
        adam.update(&mut p, &g);
        // Bias-corrected first step is lr * sign(g) (up to eps).
        assert!((p.affine_b.b[0] + 0.01).abs() < 1e-6);
        assert!((p.affine_b.b[1] - 0.01).abs() < 1e-6);
        assert_eq!(p.affine_b.b[2], 0.0);
        assert!(p.affine_a.w.iter().all(|&v| v == 0.0));
    }
}
