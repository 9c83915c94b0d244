use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

pub const GMM_FILE_VERSION: u32 = 1;
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerGmm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    // Cached per-component ln(w) - 0.5 * sum(ln(2 pi var)).
    log_norm: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GmmFile {
    version: u32,
    #[serde(rename = "K")]
    k: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl SpeakerGmm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::Shape(format!(
                "{} weights, {} means, {} variance rows",
                k,
                means.len(),
                variances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged or empty GMM rows".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) || (total - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!("weights must form a simplex (sum {total})")));
        }
        if variances.iter().flatten().any(|&v| !v.is_finite() || v < VARIANCE_FLOOR) {
            return Err(Error::Validation(format!("variances must be finite and >= {VARIANCE_FLOOR}")));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("means must be finite".into()));
        }
        let log_norm = log_norms(&weights, &variances);
        Ok(Self { weights, means, variances, log_norm })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// `ln p(x)`.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let mut comp = Vec::with_capacity(self.k());
        component_log_probs(&self.log_norm, &self.means, &self.variances, x, &mut comp);
        log_sum_exp(&comp)
    }

    pub fn sample(&self, rng: &mut Rng, out: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.k() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        for (d, o) in out.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *o = self.means[k][d] + self.variances[k][d].sqrt() * z;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GmmFile {
            version: GMM_FILE_VERSION,
            k: self.k(),
            dim: self.dim(),
            weights: self.weights.clone(),
            means: self.means.clone(),
            variances: self.variances.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: GmmFile = serde_json::from_str(text)?;
        if f.version != GMM_FILE_VERSION {
            return Err(Error::Format(format!("unsupported GMM file version {}", f.version)));
        }
        let g = Self::new(f.weights, f.means, f.variances)?;
        if g.k() != f.k || g.dim() != f.dim {
            return Err(Error::Shape(format!(
                "header says K={} dim={}, arrays hold K={} dim={}",
                f.k,
                f.dim,
                g.k(),
                g.dim()
            )));
        }
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn log_norms(weights: &[f64], variances: &[Vec<f64>]) -> Vec<f64> {
    weights
        .iter()
        .zip(variances)
        .map(|(w, var)| w.ln() - 0.5 * var.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>())
        .collect()
}

fn component_log_probs(log_norm: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for ((ln, mu), var) in log_norm.iter().zip(means).zip(vars) {
        let q: f64 = x
            .iter()
            .zip(mu)
            .zip(var)
            .map(|((x, m), v)| (x - m) * (x - m) / v)
            .sum();
        out.push(ln - 0.5 * q);
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Result of EM fitting.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub gmm: SpeakerGmm,
    /// Mean per-frame log-likelihood before each M-step, plus the final value.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Empty components re-seeded during fitting.
    pub reseeds: usize,
}

/// Row-major `n x dim` frame matrix from a set of spectrograms.
pub fn stack_frames(mels: &[MelSpectrogram]) -> Result<(Vec<f64>, usize)> {
    let dim = mels.first().map(|m| m.n_mels()).ok_or_else(|| Error::Input("no spectrograms".into()))?;
    if mels.iter().any(|m| m.n_mels() != dim) {
        return Err(Error::Shape("spectrograms disagree on n_mels".into()));
    }
    Ok((mels.iter().flat_map(|m| m.data().iter().map(|&v| v as f64)).collect(), dim))
}

fn kmeans_pp(data: &[f64], dim: usize, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    target < acc
                })
                .unwrap_or(n - 1)
        } else {
            // All remaining points coincide with a center.
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(row(i), &c));
        }
        centers.push(c);
    }
    centers
}

/// EM for a diagonal GMM with k-means++ seeded means, global-variance
/// initial covariances and uniform initial weights.
///
/// Stops when the mean per-frame log-likelihood improves by less than `tol`
/// or after `max_iters` M-steps.
pub fn fit_gmm(data: &[f64], dim: usize, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<GmmFit> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!("{} values is not a multiple of dim {dim}", data.len())));
    }
    let n = data.len() / dim;
    if k == 0 || n < k {
        return Err(Error::Input(format!("need at least K={k} frames, got {n}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InputDomain("non-finite feature value".into()));
    }
    let mut rng = seeded(seed);
    let row = |i: usize| &data[i * dim..(i + 1) * dim];

    let mut global_mean = vec![0.0; dim];
    for i in 0..n {
        for (m, x) in global_mean.iter_mut().zip(row(i)) {
            *m += x;
        }
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut global_var = vec![0.0; dim];
    for i in 0..n {
        for ((v, x), m) in global_var.iter_mut().zip(row(i)).zip(&global_mean) {
            *v += (x - m) * (x - m);
        }
    }
    global_var.iter_mut().for_each(|v| *v = (*v / n as f64).max(VARIANCE_FLOOR));

    let mut means = kmeans_pp(data, dim, k, &mut rng);
    let mut vars = vec![global_var.clone(); k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = vec![0.0; n * k];
    let mut comp = Vec::with_capacity(k);
    let mut history = Vec::new();
    let mut reseeds = 0;
    let mut converged = false;
    let mut iterations = 0;

    let e_step = |weights: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], resp: &mut [f64], comp: &mut Vec<f64>| {
        let log_norm = log_norms(weights, vars);
        let mut total = 0.0;
        for i in 0..n {
            component_log_probs(&log_norm, means, vars, row(i), comp);
            let ll = log_sum_exp(comp);
            total += ll;
            for (r, c) in resp[i * k..(i + 1) * k].iter_mut().zip(comp.iter()) {
                *r = (c - ll).exp();
            }
        }
        total / n as f64
    };

    loop {
        let ll = e_step(&weights, &means, &vars, &mut resp, &mut comp);
        if let Some(&prev) = history.last() {
            if ll - prev < tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iterations == max_iters {
            break;
        }

        // M-step.
        let mut nk = vec![0.0; k];
        let mut new_means = vec![vec![0.0; dim]; k];
        for i in 0..n {
            let x = row(i);
            for j in 0..k {
                let r = resp[i * k + j];
                nk[j] += r;
                for (m, xv) in new_means[j].iter_mut().zip(x) {
                    *m += r * xv;
                }
            }
        }
        for j in 0..k {
            if nk[j] > 0.0 {
                new_means[j].iter_mut().for_each(|m| *m /= nk[j]);
            }
        }
        let mut new_vars = vec![vec![0.0; dim]; k];
        for i in 0..n {
            let x = row(i);
            for j in 0..k {
                let r = resp[i * k + j];
                for ((v, xv), m) in new_vars[j].iter_mut().zip(x).zip(&new_means[j]) {
                    *v += r * (xv - m) * (xv - m);
                }
            }
        }
        for j in 0..k {
            for v in new_vars[j].iter_mut() {
                *v = if nk[j] > 0.0 { (*v / nk[j]).max(VARIANCE_FLOOR) } else { VARIANCE_FLOOR };
            }
            weights[j] = nk[j] / n as f64;
        }
        means = new_means;
        vars = new_vars;

        let empty: Vec<usize> = (0..k).filter(|&j| nk[j] < 1e-8 * n as f64).collect();
        for &j in &empty {
            reseed_component(j, &mut weights, &mut means, &mut vars);
            reseeds += 1;
            log::warn!("GMM component {j} emptied at iteration {iterations}; re-seeded from the widest component");
        }
        if !empty.is_empty() {
            // Re-seeding changes the model outside EM, so restart the
            // convergence baseline.
            history.push(f64::NAN);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        iterations += 1;
    }

    history.retain(|v| !v.is_nan());
    let gmm = SpeakerGmm::new(weights, means, vars)?;
    Ok(GmmFit {
        gmm,
        log_likelihoods: history,
        iterations,
        converged,
        reseeds,
    })
}

/// Splits the component with the largest total variance in two, placing
/// the halves half a standard deviation either side of its mean.
fn reseed_component(empty: usize, weights: &mut [f64], means: &mut [Vec<f64>], vars: &mut [Vec<f64>]) {
    let widest = (0..weights.len())
        .filter(|&j| j != empty)
        .max_by(|&a, &b| {
            let va: f64 = vars[a].iter().sum();
            let vb: f64 = vars[b].iter().sum();
            va.total_cmp(&vb)
        });
    let Some(w) = widest else { return };
    let offset: Vec<f64> = vars[w].iter().map(|v| 0.5 * v.sqrt()).collect();
    let base = means[w].clone();
    means[empty] = base.iter().zip(&offset).map(|(m, o)| m + o).collect();
    means[w] = base.iter().zip(&offset).map(|(m, o)| m - o).collect();
    vars[empty] = vars[w].clone();
    weights[w] /= 2.0;
    weights[empty] = weights[w];
}
