//! Forward and backward passes for every layer in the network.
//!
//! Conventions fixed here and relied on by the tests: convolution is
//! cross-correlation (no kernel flip) with valid padding; batch norm uses
//! population variance in train mode; ReLU's subgradient at 0 is 0; softmax is
//! stabilized by row-max subtraction; cross-entropy clamps probabilities at
//! 1e-12 and its gradient is taken with respect to the pre-softmax logits.

use super::{NnError, Tensor};
use crate::rng::SeededRng;

/// Dot product with four independent accumulators: a fixed summation order
/// (so results are bit-reproducible) that still vectorizes well.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let (x, y) = (&a[i * 4..i * 4 + 4], &b[i * 4..i * 4 + 4]);
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// y += s * x, elementwise.
#[inline]
fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

fn expect_3d(x: &Tensor, what: &str) -> Result<(usize, usize, usize), NnError> {
    match *x.shape() {
        [b, c, l] => Ok((b, c, l)),
        _ => Err(NnError::ShapeMismatch(format!(
            "{what} expects [batch, channels, len], got {:?}",
            x.shape()
        ))),
    }
}

fn expect_2d(x: &Tensor, what: &str) -> Result<(usize, usize), NnError> {
    match *x.shape() {
        [b, f] => Ok((b, f)),
        _ => Err(NnError::ShapeMismatch(format!(
            "{what} expects [batch, features], got {:?}",
            x.shape()
        ))),
    }
}

/// Strided 1-D convolution (cross-correlation, valid padding).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    /// [out_channels, in_channels, kernel_len]
    pub weights: Tensor,
    /// [out_channels]
    pub bias: Tensor,
    pub stride: usize,
}

impl Conv1dLayer {
    /// He-initialized layer: weights ~ N(0, 2/fan_in), zero bias.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        stride: usize,
        rng: &mut SeededRng,
    ) -> Conv1dLayer {
        assert!(kernel_len >= 1 && stride >= 1);
        let std = (2.0 / (in_channels * kernel_len) as f64).sqrt();
        let data = (0..out_channels * in_channels * kernel_len)
            .map(|_| std * rng.next_normal())
            .collect();
        Conv1dLayer {
            weights: Tensor::from_vec(&[out_channels, in_channels, kernel_len], data),
            bias: Tensor::zeros(&[out_channels]),
            stride,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_len(&self) -> usize {
        self.weights.shape()[2]
    }

    /// Output length for an input of `len` samples, if the kernel fits.
    pub fn out_len(&self, len: usize) -> Option<usize> {
        len.checked_sub(self.kernel_len())
            .map(|d| d / self.stride + 1)
    }

    /// y[b,o,t] = bias[o] + sum_{c,j} w[o,c,j] * x[b,c,t*stride+j]
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (batch, in_ch, len) = expect_3d(x, "conv1d")?;
        if in_ch != self.in_channels() {
            return Err(NnError::ShapeMismatch(format!(
                "conv1d got {in_ch} input channels, layer has {}",
                self.in_channels()
            )));
        }
        let out_len = self.out_len(len).filter(|&t| t > 0).ok_or_else(|| {
            NnError::ShapeMismatch(format!(
                "conv1d input len {len} shorter than kernel {}",
                self.kernel_len()
            ))
        })?;
        let (out_ch, k, stride) = (self.out_channels(), self.kernel_len(), self.stride);
        let mut y = Tensor::zeros(&[batch, out_ch, out_len]);
        let (w, bias) = (self.weights.data(), self.bias.data());
        let xd = x.data();
        let yd = y.data_mut();
        for b in 0..batch {
            let xb = &xd[b * in_ch * len..(b + 1) * in_ch * len];
            for o in 0..out_ch {
                let yrow = &mut yd[(b * out_ch + o) * out_len..(b * out_ch + o + 1) * out_len];
                yrow.fill(bias[o]);
                for c in 0..in_ch {
                    let xc = &xb[c * len..(c + 1) * len];
                    let wrow = &w[(o * in_ch + c) * k..(o * in_ch + c + 1) * k];
                    for (t, yt) in yrow.iter_mut().enumerate() {
                        *yt += dot(wrow, &xc[t * stride..t * stride + k]);
                    }
                }
            }
        }
        Ok(y)
    }

    /// Gradients of the forward map: (grad_x, grad_weights, grad_bias).
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Tensor, Tensor), NnError> {
        let (batch, in_ch, len) = expect_3d(x, "conv1d backward")?;
        let (gb, go, gt) = expect_3d(grad_out, "conv1d backward grad")?;
        let out_len = self.out_len(len).unwrap_or(0);
        if in_ch != self.in_channels() || gb != batch || go != self.out_channels() || gt != out_len
        {
            return Err(NnError::ShapeMismatch(format!(
                "conv1d backward: x {:?} vs grad_out {:?}",
                x.shape(),
                grad_out.shape()
            )));
        }
        let (out_ch, k, stride) = (self.out_channels(), self.kernel_len(), self.stride);
        let mut grad_x = Tensor::zeros(&[batch, in_ch, len]);
        let mut grad_w = Tensor::zeros(&[out_ch, in_ch, k]);
        let mut grad_b = Tensor::zeros(&[out_ch]);
        let (xd, w, god) = (x.data(), self.weights.data(), grad_out.data());
        let gxd = grad_x.data_mut();
        {
            let gwd = grad_w.data_mut();
            let gbd = grad_b.data_mut();
            for b in 0..batch {
                for o in 0..out_ch {
                    let grow = &god[(b * out_ch + o) * out_len..(b * out_ch + o + 1) * out_len];
                    gbd[o] += grow.iter().sum::<f64>();
                    for c in 0..in_ch {
                        let xc = &xd[(b * in_ch + c) * len..(b * in_ch + c + 1) * len];
                        let gxc = &mut gxd[(b * in_ch + c) * len..(b * in_ch + c + 1) * len];
                        let wrow = &w[(o * in_ch + c) * k..(o * in_ch + c + 1) * k];
                        let gwrow = &mut gwd[(o * in_ch + c) * k..(o * in_ch + c + 1) * k];
                        for (t, &g) in grow.iter().enumerate() {
                            let base = t * stride;
                            axpy(gwrow, g, &xc[base..base + k]);
                            axpy(&mut gxc[base..base + k], g, wrow);
                        }
                    }
                }
            }
        }
        Ok((grad_x, grad_w, grad_b))
    }
}

/// Values captured by a train-mode batch-norm forward, needed for backward.
#[derive(Debug, Clone)]
pub struct BnCache {
    /// Normalized input (x - mean)/sqrt(var + eps), same shape as x.
    pub xhat: Tensor,
    /// Per-channel 1/sqrt(var + eps).
    pub inv_std: Vec<f64>,
}

/// Per-channel batch normalization over [batch, channels, len].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1dLayer {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNorm1dLayer {
    pub fn new(channels: usize) -> BatchNorm1dLayer {
        BatchNorm1dLayer {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            epsilon: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    /// Train mode: standardize by this batch's population statistics (over
    /// batch x time per channel), scale/shift by gamma/beta, and fold the
    /// batch statistics into the running ones.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache), NnError> {
        let (batch, ch, len) = expect_3d(x, "batchnorm")?;
        if ch != self.channels() {
            return Err(NnError::ShapeMismatch(format!(
                "batchnorm got {ch} channels, layer has {}",
                self.channels()
            )));
        }
        let n = batch * len;
        if n < 2 {
            return Err(NnError::DegenerateBatch);
        }
        let xd = x.data();
        let mut y = Tensor::zeros(&[batch, ch, len]);
        let mut xhat = Tensor::zeros(&[batch, ch, len]);
        let mut inv_std = vec![0.0; ch];
        for c in 0..ch {
            let mut sum = 0.0;
            for b in 0..batch {
                sum += xd[(b * ch + c) * len..(b * ch + c + 1) * len]
                    .iter()
                    .sum::<f64>();
            }
            let mean = sum / n as f64;
            let mut sq = 0.0;
            for b in 0..batch {
                for &v in &xd[(b * ch + c) * len..(b * ch + c + 1) * len] {
                    sq += (v - mean) * (v - mean);
                }
            }
            let var = sq / n as f64; // population variance
            let is = 1.0 / (var + self.epsilon).sqrt();
            inv_std[c] = is;
            let (g, be) = (self.gamma.data()[c], self.beta.data()[c]);
            for b in 0..batch {
                let src = &xd[(b * ch + c) * len..(b * ch + c + 1) * len];
                let range = (b * ch + c) * len..(b * ch + c + 1) * len;
                let xh = &mut xhat.data_mut()[range.clone()];
                for (i, &v) in src.iter().enumerate() {
                    xh[i] = (v - mean) * is;
                }
                let yr = &mut y.data_mut()[range];
                for (i, &v) in src.iter().enumerate() {
                    yr[i] = g * (v - mean) * is + be;
                }
            }
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = (1.0 - self.momentum) * *rm + self.momentum * mean;
            let rv = &mut self.running_var.data_mut()[c];
            *rv = (1.0 - self.momentum) * *rv + self.momentum * var;
        }
        Ok((y, BnCache { xhat, inv_std }))
    }

    /// Inference mode: standardize by the stored running statistics.
    pub fn forward_infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (batch, ch, len) = expect_3d(x, "batchnorm")?;
        if ch != self.channels() {
            return Err(NnError::ShapeMismatch(format!(
                "batchnorm got {ch} channels, layer has {}",
                self.channels()
            )));
        }
        let mut y = Tensor::zeros(&[batch, ch, len]);
        let xd = x.data();
        let yd = y.data_mut();
        for c in 0..ch {
            let mean = self.running_mean.data()[c];
            let is = 1.0 / (self.running_var.data()[c] + self.epsilon).sqrt();
            let (g, be) = (self.gamma.data()[c], self.beta.data()[c]);
            for b in 0..batch {
                let range = (b * ch + c) * len..(b * ch + c + 1) * len;
                for (yi, &v) in yd[range.clone()].iter_mut().zip(&xd[range]) {
                    *yi = g * (v - mean) * is + be;
                }
            }
        }
        Ok(y)
    }

    /// Exact gradients through the train-mode normalization, including the
    /// dependence of the batch mean and variance on x:
    ///   grad_x = gamma*inv_std/N * (N*g - sum(g) - xhat*sum(g*xhat))
    pub fn backward(
        &self,
        cache: &BnCache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Tensor, Tensor), NnError> {
        let (batch, ch, len) = expect_3d(grad_out, "batchnorm backward")?;
        if grad_out.shape() != cache.xhat.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "batchnorm backward: cache {:?} vs grad_out {:?}",
                cache.xhat.shape(),
                grad_out.shape()
            )));
        }
        let n = (batch * len) as f64;
        let mut grad_x = Tensor::zeros(&[batch, ch, len]);
        let mut grad_gamma = Tensor::zeros(&[ch]);
        let mut grad_beta = Tensor::zeros(&[ch]);
        let (god, xhd) = (grad_out.data(), cache.xhat.data());
        for c in 0..ch {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for b in 0..batch {
                let range = (b * ch + c) * len..(b * ch + c + 1) * len;
                for (&g, &xh) in god[range.clone()].iter().zip(&xhd[range]) {
                    sum_g += g;
                    sum_gx += g * xh;
                }
            }
            grad_beta.data_mut()[c] = sum_g;
            grad_gamma.data_mut()[c] = sum_gx;
            let scale = self.gamma.data()[c] * cache.inv_std[c] / n;
            let gxd = grad_x.data_mut();
            for b in 0..batch {
                let range = (b * ch + c) * len..(b * ch + c + 1) * len;
                for i in range {
                    gxd[i] = scale * (n * god[i] - sum_g - xhd[i] * sum_gx);
                }
            }
        }
        Ok((grad_x, grad_gamma, grad_beta))
    }
}

/// max(0, x) elementwise.
pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

/// Gradient passes where the forward input was strictly positive; the
/// subgradient at exactly 0 is 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    assert_eq!(x.shape(), grad_out.shape());
    let mut g = grad_out.clone();
    for (gi, &xi) in g.data_mut().iter_mut().zip(x.data()) {
        if xi <= 0.0 {
            *gi = 0.0;
        }
    }
    g
}

/// Mean over the time axis: [batch, ch, len] -> [batch, ch].
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor, NnError> {
    let (batch, ch, len) = expect_3d(x, "global_avg_pool")?;
    if len == 0 {
        return Err(NnError::ShapeMismatch("pool over empty time axis".into()));
    }
    let mut y = Tensor::zeros(&[batch, ch]);
    for b in 0..batch {
        for c in 0..ch {
            y.data_mut()[b * ch + c] = x.data()[(b * ch + c) * len..(b * ch + c + 1) * len]
                .iter()
                .sum::<f64>()
                / len as f64;
        }
    }
    Ok(y)
}

/// Transpose of the mean: spread each gradient uniformly as grad/len.
pub fn global_avg_pool_backward(grad_out: &Tensor, len: usize) -> Result<Tensor, NnError> {
    let (batch, ch) = expect_2d(grad_out, "global_avg_pool backward")?;
    let mut g = Tensor::zeros(&[batch, ch, len]);
    for b in 0..batch {
        for c in 0..ch {
            let v = grad_out.data()[b * ch + c] / len as f64;
            g.data_mut()[(b * ch + c) * len..(b * ch + c + 1) * len].fill(v);
        }
    }
    Ok(g)
}

/// Fully-connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// [out_features, in_features]
    pub weights: Tensor,
    /// [out_features]
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn new(in_features: usize, out_features: usize, rng: &mut SeededRng) -> DenseLayer {
        let std = (2.0 / in_features as f64).sqrt();
        let data = (0..out_features * in_features)
            .map(|_| std * rng.next_normal())
            .collect();
        DenseLayer {
            weights: Tensor::from_vec(&[out_features, in_features], data),
            bias: Tensor::zeros(&[out_features]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (batch, feats) = expect_2d(x, "dense")?;
        if feats != self.in_features() {
            return Err(NnError::ShapeMismatch(format!(
                "dense got {feats} features, layer has {}",
                self.in_features()
            )));
        }
        let (out, inf) = (self.out_features(), self.in_features());
        let mut y = Tensor::zeros(&[batch, out]);
        for b in 0..batch {
            let xb = &x.data()[b * inf..(b + 1) * inf];
            for o in 0..out {
                y.data_mut()[b * out + o] =
                    self.bias.data()[o] + dot(&self.weights.data()[o * inf..(o + 1) * inf], xb);
            }
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Tensor, Tensor), NnError> {
        let (batch, feats) = expect_2d(x, "dense backward")?;
        let (gb, gout) = expect_2d(grad_out, "dense backward grad")?;
        if feats != self.in_features() || gb != batch || gout != self.out_features() {
            return Err(NnError::ShapeMismatch(format!(
                "dense backward: x {:?} vs grad_out {:?}",
                x.shape(),
                grad_out.shape()
            )));
        }
        let (out, inf) = (self.out_features(), self.in_features());
        let mut grad_x = Tensor::zeros(&[batch, inf]);
        let mut grad_w = Tensor::zeros(&[out, inf]);
        let mut grad_b = Tensor::zeros(&[out]);
        for b in 0..batch {
            let xb = &x.data()[b * inf..(b + 1) * inf];
            for o in 0..out {
                let g = grad_out.data()[b * out + o];
                grad_b.data_mut()[o] += g;
                axpy(&mut grad_w.data_mut()[o * inf..(o + 1) * inf], g, xb);
                axpy(
                    &mut grad_x.data_mut()[b * inf..(b + 1) * inf],
                    g,
                    &self.weights.data()[o * inf..(o + 1) * inf],
                );
            }
        }
        Ok((grad_x, grad_w, grad_b))
    }
}

/// Row-wise softmax over [batch, k], stabilized by subtracting the row max.
pub fn softmax(x: &Tensor) -> Tensor {
    let (batch, k) = match *x.shape() {
        [b, k] => (b, k),
        _ => panic!("softmax expects [batch, k], got {:?}", x.shape()),
    };
    let mut y = x.clone();
    for b in 0..batch {
        let row = &mut y.data_mut()[b * k..(b + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

/// Mean over the batch of -log(probs[label]), with probabilities clamped
/// below at 1e-12. `probs` must already be softmax output.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64, NnError> {
    let (batch, k) = match *probs.shape() {
        [b, k] => (b, k),
        _ => {
            return Err(NnError::ShapeMismatch(format!(
                "cross_entropy expects [batch, k], got {:?}",
                probs.shape()
            )))
        }
    };
    if labels.len() != batch {
        return Err(NnError::ShapeMismatch(format!(
            "{} labels for batch of {batch}",
            labels.len()
        )));
    }
    debug_assert!(probs
        .data()
        .chunks(k)
        .all(|row| (row.iter().sum::<f64>() - 1.0).abs() < 1e-6));
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(NnError::LabelOutOfRange { label, classes: k });
        }
        loss -= probs.data()[b * k + label].max(1e-12).ln();
    }
    Ok(loss / batch as f64)
}

/// Gradient of the cross-entropy loss with respect to the pre-softmax logits:
/// (probs - one_hot) / batch.
pub fn cross_entropy_logit_grad(probs: &Tensor, labels: &[usize]) -> Result<Tensor, NnError> {
    let (batch, k) = match *probs.shape() {
        [b, k] => (b, k),
        _ => {
            return Err(NnError::ShapeMismatch(format!(
                "cross_entropy expects [batch, k], got {:?}",
                probs.shape()
            )))
        }
    };
    if labels.len() != batch {
        return Err(NnError::ShapeMismatch(format!(
            "{} labels for batch of {batch}",
            labels.len()
        )));
    }
    let mut g = probs.clone();
    for (b, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(NnError::LabelOutOfRange { label, classes: k });
        }
        g.data_mut()[b * k + label] -= 1.0;
    }
    for v in g.data_mut() {
        *v /= batch as f64;
    }
    Ok(g)
}
