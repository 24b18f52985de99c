//! Dense building blocks with explicit backward passes.

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Uniform init in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// `x * w + b`, with `b` a `1 x out` row broadcast over the batch.
pub fn dense_forward(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::structural("dense bias must be a 1 x out row"));
    }
    let mut y = x.matmul(w)?;
    for i in 0..y.rows() {
        for (v, bias) in y.row_mut(i).iter_mut().zip(b.as_slice()) {
            *v += bias;
        }
    }
    Ok(y)
}

pub struct DenseGrads {
    pub dx: Matrix,
    pub dw: Matrix,
    pub db: Matrix,
}

pub fn dense_backward(x: &Matrix, w: &Matrix, dy: &Matrix) -> Result<DenseGrads> {
    let dw = x.t_matmul(dy)?;
    let dx = dy.matmul_t(w)?;
    let mut db = Matrix::zeros(1, dy.cols());
    for i in 0..dy.rows() {
        for (d, g) in db.as_mut_slice().iter_mut().zip(dy.row(i)) {
            *d += g;
        }
    }
    Ok(DenseGrads { dx, dw, db })
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Gradient through a ReLU given its pre-activation input.
pub fn relu_backward(pre: &Matrix, upstream: &Matrix) -> Matrix {
    let mut out = upstream.clone();
    for (o, p) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if *p <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// Log-softmax over the entries where `mask` is true; masked-out entries get
/// `-inf`. With no mask every entry participates.
pub fn log_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let live = |i: usize| mask.map_or(true, |m| m[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| live(*i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| live(*i))
        .map(|(_, &v)| (v - max).exp())
        .sum();
    let log_z = max + sum.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, &v)| if live(i) { v - log_z } else { f64::NEG_INFINITY })
        .collect()
}

pub fn softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    log_softmax(logits, mask).into_iter().map(f64::exp).collect()
}

/// Gradient of `sum_i upstream[i] * log_softmax(logits)[i]` w.r.t. the logits,
/// restricted to live entries.
pub fn log_softmax_backward(log_probs: &[f64], upstream: &[f64]) -> Vec<f64> {
    let total: f64 = upstream
        .iter()
        .zip(log_probs)
        .filter(|(_, lp)| lp.is_finite())
        .map(|(u, _)| u)
        .sum();
    log_probs
        .iter()
        .zip(upstream)
        .map(|(&lp, &u)| if lp.is_finite() { u - lp.exp() * total } else { 0.0 })
        .collect()
}

/// Cross-entropy `-log softmax(logits)[target]` and its logit gradient.
pub fn softmax_xent(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits, None);
    let grad = lp.iter().enumerate().map(|(i, &l)| l.exp() - if i == target { 1.0 } else { 0.0 }).collect();
    (-lp[target], grad)
}

/// Column means of `h`.
pub fn mean_pool(h: &Matrix) -> Result<Vec<f64>> {
    if h.rows() == 0 {
        return Err(Error::structural("mean pool over zero rows"));
    }
    let mut out = vec![0.0; h.cols()];
    for i in 0..h.rows() {
        for (o, v) in out.iter_mut().zip(h.row(i)) {
            *o += v;
        }
    }
    let n = h.rows() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Broadcasts `upstream / rows` to every row.
pub fn mean_pool_backward(rows: usize, upstream: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(rows, upstream.len());
    let n = rows as f64;
    for i in 0..rows {
        for (o, u) in out.row_mut(i).iter_mut().zip(upstream) {
            *o = u / n;
        }
    }
    out
}
