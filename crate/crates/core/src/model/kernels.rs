//! Dense row-major kernels. Every reduction runs in a fixed order so
//! results are bit-reproducible.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = mat * x` for a `rows x cols` matrix.
pub(crate) fn matvec(mat: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(mat.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(mat.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `out += mat^T * v`.
pub(crate) fn matvec_t_add(mat: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (&vi, row) in v.iter().zip(mat.chunks_exact(cols)) {
        if vi != 0.0 {
            axpy(vi, row, out);
        }
    }
}

/// `grad += v * x^T`.
pub(crate) fn outer_add(grad: &mut [f64], cols: usize, v: &[f64], x: &[f64]) {
    for (&vi, row) in v.iter().zip(grad.chunks_exact_mut(cols)) {
        if vi != 0.0 {
            axpy(vi, x, row);
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(logits.len());
    softmax_into(logits, &mut p);
    p
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(logits.iter().map(|&l| (l - max).exp()));
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
}
