//! Feed-forward layer primitives with explicit backward passes.
//!
//! Every forward function returns its output plus a cache; the matching
//! backward function turns an upstream gradient into gradients for the inputs
//! and parameters.

use rand::Rng;

use super::tensor::{add_row_bias, col_sums, matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
/// Floor applied to probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [n, f] => Ok((*n, *f)),
        s => Err(Error::Shape(format!("{what}: expected a 2-D tensor, got {s:?}"))),
    }
}

fn expect_len(t: &Tensor, len: usize, what: &str) -> Result<()> {
    if t.len() != len {
        return Err(Error::Shape(format!("{what}: expected {len} values, got {}", t.len())));
    }
    Ok(())
}

// ---------------------------------------------------------------- conv1d

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    input: Tensor,
}

pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Pointwise 1-D convolution: `(B, T, C_in) ⊛ (1, C_in, F) + bias → (B, T, F)`.
pub fn conv1d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<(Tensor, Conv1dCache)> {
    let (b, t, c) = match input.shape() {
        [b, t, c] => (*b, *t, *c),
        s => return Err(Error::Shape(format!("conv1d input must be (B, T, C), got {s:?}"))),
    };
    let (k, kc, f) = match kernel.shape() {
        [k, kc, f] => (*k, *kc, *f),
        s => return Err(Error::Shape(format!("conv1d kernel must be (K, C, F), got {s:?}"))),
    };
    if k != 1 {
        return Err(Error::Shape(format!("conv1d supports kernel size 1 only, got {k}")));
    }
    if kc != c {
        return Err(Error::Shape(format!("conv1d kernel expects {kc} channels, input has {c}")));
    }
    expect_len(bias, f, "conv1d bias")?;
    let mut out = matmul(input.data(), kernel.data(), b * t, c, f);
    add_row_bias(&mut out, bias.data());
    Ok((Tensor::new(vec![b, t, f], out)?, Conv1dCache { input: input.clone() }))
}

pub fn conv1d_backward(cache: &Conv1dCache, kernel: &Tensor, dout: &Tensor) -> Result<Conv1dGrads> {
    let s = cache.input.shape();
    let (n, c) = (s[0] * s[1], s[2]);
    let f = kernel.shape()[2];
    expect_len(dout, n * f, "conv1d upstream gradient")?;
    Ok(Conv1dGrads {
        input: Tensor::new(s.to_vec(), matmul_nt(dout.data(), kernel.data(), n, f, c))?,
        kernel: Tensor::new(vec![1, c, f], matmul_tn(cache.input.data(), dout.data(), n, c, f))?,
        bias: Tensor::new(vec![f], col_sums(dout.data(), n, f))?,
    })
}

// ---------------------------------------------------------------- batch norm

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    n: usize,
    f: usize,
    mode: Mode,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Batch normalization over the rows of an `(N, F)` input.
///
/// Train mode uses biased batch statistics and needs `N ≥ 2`; infer mode uses
/// the running statistics.
pub fn batchnorm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache)> {
    let (n, f) = dims2(input, "batchnorm input")?;
    for (t, what) in [(gamma, "gamma"), (beta, "beta"), (running_mean, "running mean"), (running_var, "running var")] {
        expect_len(t, f, what)?;
    }
    let x = input.data();
    let (mean, var) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::Config(
                    "batch norm in train mode needs at least 2 rows per batch; use batch_size ≥ 2 \
                     or set bn_single_sample = \"identity\""
                        .into(),
                ));
            }
            let mean: Vec<f64> = col_sums(x, n, f).into_iter().map(|s| s / n as f64).collect();
            let mut var = vec![0.0; f];
            for row in x.chunks(f) {
                for ((v, xv), m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (xv - m) * (xv - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            (mean, var)
        }
        Mode::Infer => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut xhat = vec![0.0; n * f];
    let mut out = vec![0.0; n * f];
    for i in 0..n {
        for j in 0..f {
            let h = (x[i * f + j] - mean[j]) * inv_std[j];
            xhat[i * f + j] = h;
            out[i * f + j] = gamma.data()[j] * h + beta.data()[j];
        }
    }
    Ok((
        Tensor::new(vec![n, f], out)?,
        BatchNormCache { xhat, inv_std, n, f, mode, batch_mean: mean, batch_var: var },
    ))
}

pub fn batchnorm_backward(cache: &BatchNormCache, gamma: &Tensor, dout: &Tensor) -> Result<BatchNormGrads> {
    let (n, f) = (cache.n, cache.f);
    expect_len(dout, n * f, "batchnorm upstream gradient")?;
    let dy = dout.data();
    let mut dgamma = vec![0.0; f];
    let mut dbeta = vec![0.0; f];
    for i in 0..n {
        for j in 0..f {
            dgamma[j] += dy[i * f + j] * cache.xhat[i * f + j];
            dbeta[j] += dy[i * f + j];
        }
    }
    let mut dx = vec![0.0; n * f];
    match cache.mode {
        Mode::Train => {
            let nf = n as f64;
            for j in 0..f {
                let g = gamma.data()[j];
                // Σ dx̂ and Σ dx̂·x̂ per feature.
                let sum_dxhat = g * dbeta[j];
                let sum_dxhat_xhat = g * dgamma[j];
                for i in 0..n {
                    let dxhat = dy[i * f + j] * g;
                    dx[i * f + j] = cache.inv_std[j] / nf
                        * (nf * dxhat - sum_dxhat - cache.xhat[i * f + j] * sum_dxhat_xhat);
                }
            }
        }
        Mode::Infer => {
            for i in 0..n {
                for j in 0..f {
                    dx[i * f + j] = dy[i * f + j] * gamma.data()[j] * cache.inv_std[j];
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(vec![n, f], dx)?,
        gamma: Tensor::new(vec![f], dgamma)?,
        beta: Tensor::new(vec![f], dbeta)?,
    })
}

/// `running ← momentum·running + (1 − momentum)·batch`.
pub fn update_running_stats(
    cache: &BatchNormCache,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    momentum: f64,
) {
    if cache.mode != Mode::Train {
        return;
    }
    for (r, b) in running_mean.data_mut().iter_mut().zip(&cache.batch_mean) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
    for (r, b) in running_var.data_mut().iter_mut().zip(&cache.batch_var) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
}

// ---------------------------------------------------------------- dense / relu

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// `(N, D) · (D, H) + bias`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(Tensor, DenseCache)> {
    let (n, d) = dims2(input, "dense input")?;
    let (wd, h) = dims2(weights, "dense weights")?;
    if wd != d {
        return Err(Error::Shape(format!("dense weights expect {wd} inputs, got {d}")));
    }
    expect_len(bias, h, "dense bias")?;
    let mut out = matmul(input.data(), weights.data(), n, d, h);
    add_row_bias(&mut out, bias.data());
    Ok((Tensor::new(vec![n, h], out)?, DenseCache { input: input.clone() }))
}

pub fn dense_backward(cache: &DenseCache, weights: &Tensor, dout: &Tensor) -> Result<DenseGrads> {
    let (n, d) = (cache.input.shape()[0], cache.input.shape()[1]);
    let h = weights.shape()[1];
    expect_len(dout, n * h, "dense upstream gradient")?;
    Ok(DenseGrads {
        input: Tensor::new(vec![n, d], matmul_nt(dout.data(), weights.data(), n, h, d))?,
        weights: Tensor::new(vec![d, h], matmul_tn(cache.input.data(), dout.data(), n, d, h))?,
        bias: Tensor::new(vec![h], col_sums(dout.data(), n, h))?,
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Gradient through a ReLU given its forward input.
pub fn relu_backward(input: &Tensor, dout: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(dout.data())
        .map(|(x, d)| if *x > 0.0 { *d } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

// ---------------------------------------------------------------- dropout

/// Per-unit multipliers: 0 for dropped units, `1/(1 − rate)` for survivors.
#[derive(Debug, Clone)]
pub struct DropoutMask(Vec<f64>);

impl DropoutMask {
    pub fn survivors(&self) -> usize {
        self.0.iter().filter(|m| **m != 0.0).count()
    }
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted dropout. Infer mode and `rate = 0` are identities.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, DropoutMask)> {
    check_dropout_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((input.clone(), DropoutMask(vec![1.0; input.len()])));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> =
        (0..input.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::new(input.shape().to_vec(), data)?, DropoutMask(mask)))
}

pub fn dropout_backward(mask: &DropoutMask, dout: &Tensor) -> Tensor {
    let data = dout.data().iter().zip(&mask.0).map(|(d, m)| d * m).collect();
    Tensor::new(dout.shape().to_vec(), data).expect("same shape")
}

// ---------------------------------------------------------------- softmax + cross-entropy

pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let (_, c) = dims2(logits, "softmax logits")?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

pub fn one_hot(labels: &[u8], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l as usize >= classes {
            return Err(Error::Validation(format!("label {l} out of range for {classes} classes")));
        }
        data[i * classes + l as usize] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], data)
}

fn check_one_hot(labels: &Tensor, n: usize, c: usize) -> Result<()> {
    if labels.shape() != [n, c] {
        return Err(Error::Shape(format!("labels must be ({n}, {c}), got {:?}", labels.shape())));
    }
    for (i, row) in labels.data().chunks(c).enumerate() {
        let ok = row.iter().all(|v| *v == 0.0 || *v == 1.0) && row.iter().sum::<f64>() == 1.0;
        if !ok {
            return Err(Error::Validation(format!("label row {i} is not one-hot: {row:?}")));
        }
    }
    Ok(())
}

/// Softmax cross-entropy on logits. Returns the batch-mean loss, the
/// probabilities, and the logit gradient `(p − y) / B`.
pub fn softmax_xent(logits: &Tensor, labels: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    let (n, c) = dims2(logits, "logits")?;
    check_one_hot(labels, n, c)?;
    let probs = softmax_rows(logits)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * c];
    for i in 0..n {
        for j in 0..c {
            let p = probs.data()[i * c + j];
            let y = labels.data()[i * c + j];
            if y > 0.0 {
                loss -= y * p.max(LOG_CLAMP).ln();
            }
            grad[i * c + j] = (p - y) / n as f64;
        }
    }
    Ok((loss / n as f64, probs, Tensor::new(vec![n, c], grad)?))
}

/// Output of [`dense_softmax_xent`].
pub struct DenseSoftmaxXent {
    pub loss: f64,
    pub probs: Tensor,
    pub logit_grad: Tensor,
    pub grads: DenseGrads,
}

/// Dense projection to class logits followed by softmax cross-entropy.
pub fn dense_softmax_xent(
    features: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    labels: &Tensor,
) -> Result<DenseSoftmaxXent> {
    let (logits, cache) = dense(features, weights, bias)?;
    let (loss, probs, logit_grad) = softmax_xent(&logits, labels)?;
    let grads = dense_backward(&cache, weights, &logit_grad)?;
    Ok(DenseSoftmaxXent { loss, probs, logit_grad, grads })
}
