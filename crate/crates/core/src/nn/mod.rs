//! Differentiable kernels built on [`Tape`]: dense, softmax, multi-head
//! attention, residual 1-D convolution, pooling, dropout and L2 penalty.

mod gradcheck;
mod params;
mod tape;

pub use gradcheck::{check_gradients, relative_error, GradReport};
pub use params::{
    he_uniform, load_checkpoint, save_checkpoint, ParamStore, CHECKPOINT_MAGIC,
};
pub use tape::{bce_logit, sigmoid, Gradients, Tape, Var};

pub(crate) use tape::{cdf_distance, softmax_slice};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Softmax of a plain vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    softmax_slice(x, &mut out);
    out
}

/// `x W + b` with `b` a `1 x n` row.
pub fn dense(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// Row-wise softmax (over the last axis).
pub fn softmax_rows(tape: &mut Tape, x: Var) -> Var {
    tape.softmax_rows(x)
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

/// Bidirectional multi-head self-attention without biases.
///
/// Returns the `T x d` output and the per-head `T x T` attention weights.
pub fn multi_head_attention(
    tape: &mut Tape,
    x: Var,
    p: &AttentionParams,
    heads: usize,
) -> Result<(Var, Vec<Tensor>)> {
    let d = tape.value(p.wq).cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Config(format!(
            "model dim {d} is not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;
    let q = tape.matmul(x, p.wq)?;
    let k = tape.matmul(x, p.wk)?;
    let v = tape.matmul(x, p.wv)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh);
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let a = tape.softmax_rows(scores);
        weights.push(tape.value(a).clone());
        outs.push(tape.matmul(a, vh)?);
    }
    let cat = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    Ok((tape.matmul(cat, p.wo)?, weights))
}

/// `x + conv(x)` with "same" padding; `x` is `T x C`, `w` is `(width*C) x C`.
pub fn conv1d_residual(tape: &mut Tape, x: Var, w: Var, b: Var, width: usize) -> Result<Var> {
    let (c_in, c_out) = (tape.value(x).cols(), tape.value(w).cols());
    if c_in != c_out {
        return Err(Error::Dimension(format!(
            "residual convolution needs equal channels, got {c_in} in and {c_out} out"
        )));
    }
    let conv = tape.conv1d(x, w, b, width)?;
    tape.add(x, conv)
}

/// Mean over the time axis, `T x C -> 1 x C`.
pub fn global_avg_pool(tape: &mut Tape, x: Var) -> Var {
    tape.mean_rows(x)
}

/// Inverted dropout in training mode, identity otherwise.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = tape.value(x).shape().to_vec();
    let n = tape.value(x).len();
    let mask = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    tape.mul_const(x, Tensor::new(shape, mask)?)
}

/// `lambda * sum w^2` over the given weight matrices.
pub fn l2_penalty(tape: &mut Tape, weights: &[Var], lambda: f64) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &w in weights {
        let s = tape.sum_squares(w);
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    let total = match total {
        Some(t) => t,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    Ok(tape.scale(total, lambda))
}

/// Sinusoidal position encodings, `T x d`.
pub fn sinusoidal_encoding(steps: usize, dim: usize) -> Tensor {
    let mut t = Tensor::zeros(&[steps, dim]);
    for pos in 0..steps {
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            t.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}
