//! The BarkNet classifier: conv -> BN -> ReLU, twice, then global average
//! pooling into a five-way dense softmax head. Raw fragments go in,
//! per-class probabilities come out.
//!
//! Also owns the checkpoint format (see [`BarkNet::save_checkpoint`]):
//! a "BARK1" magic, a version word, the architecture integers, then every
//! parameter and running statistic as little-endian f64 in a fixed order.

use serde::{Deserialize, Serialize};

use crate::data::{EmotionClass, NUM_CLASSES};
use crate::nn::{
    cross_entropy, cross_entropy_logit_grad, global_avg_pool, global_avg_pool_backward, relu,
    relu_backward, softmax, BatchNorm1dLayer, Conv1dLayer, DenseLayer, NnError, Tensor,
};
use crate::rng::SeededRng;

/// Architecture and init-seed knobs. The five-way head is fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarkNetConfig {
    pub fragment_len: usize,
    pub conv1_channels: usize,
    pub conv1_kernel: usize,
    pub conv1_stride: usize,
    pub conv2_channels: usize,
    pub conv2_kernel: usize,
    pub conv2_stride: usize,
    pub seed: u64,
}

impl Default for BarkNetConfig {
    fn default() -> BarkNetConfig {
        BarkNetConfig {
            fragment_len: 12_000,
            conv1_channels: 16,
            conv1_kernel: 64,
            conv1_stride: 8,
            conv2_channels: 32,
            conv2_kernel: 32,
            conv2_stride: 4,
            seed: 47,
        }
    }
}

impl BarkNetConfig {
    /// Tiny variant used for finite-difference testing, where every loss
    /// evaluation must be cheap.
    pub fn micro() -> BarkNetConfig {
        BarkNetConfig {
            fragment_len: 64,
            conv1_channels: 2,
            conv1_kernel: 8,
            conv1_stride: 4,
            conv2_channels: 3,
            conv2_kernel: 4,
            conv2_stride: 2,
            seed: 0,
        }
    }

    fn conv_out(len: usize, kernel: usize, stride: usize) -> Option<usize> {
        len.checked_sub(kernel).map(|d| d / stride + 1)
    }

    /// The two conv output lengths, or BadConfig if either collapses to 0.
    pub fn feature_lens(&self) -> Result<(usize, usize), ModelError> {
        let bad = |what: String| ModelError::BadConfig(what);
        if self.conv1_channels == 0 || self.conv2_channels == 0 {
            return Err(bad("channel counts must be >= 1".into()));
        }
        if self.conv1_kernel == 0 || self.conv2_kernel == 0 {
            return Err(bad("kernel lengths must be >= 1".into()));
        }
        if self.conv1_stride == 0 || self.conv2_stride == 0 {
            return Err(bad("strides must be >= 1".into()));
        }
        let l1 = Self::conv_out(self.fragment_len, self.conv1_kernel, self.conv1_stride)
            .filter(|&l| l > 0)
            .ok_or_else(|| {
                bad(format!(
                    "fragment_len {} too short for conv1 kernel {}",
                    self.fragment_len, self.conv1_kernel
                ))
            })?;
        let l2 = Self::conv_out(l1, self.conv2_kernel, self.conv2_stride)
            .filter(|&l| l > 0)
            .ok_or_else(|| {
                bad(format!(
                    "conv1 output {l1} too short for conv2 kernel {}",
                    self.conv2_kernel
                ))
            })?;
        Ok((l1, l2))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("checkpoint does not start with the BARK1 magic")]
    BadMagic,
    #[error("checkpoint format version {found} (this build reads version {CHECKPOINT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
}

/// Forward-pass mode: train uses batch statistics in the BN layers and
/// updates their running averages; infer is a pure function of the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"BARK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BarkNet {
    pub cfg: BarkNetConfig,
    conv1: Conv1dLayer,
    bn1: BatchNorm1dLayer,
    conv2: Conv1dLayer,
    bn2: BatchNorm1dLayer,
    dense: DenseLayer,
}

impl BarkNet {
    /// Deterministic He initialization from cfg.seed.
    pub fn init(cfg: BarkNetConfig) -> Result<BarkNet, ModelError> {
        cfg.feature_lens()?;
        let mut rng = SeededRng::new(cfg.seed);
        let conv1 = Conv1dLayer::new(
            1,
            cfg.conv1_channels,
            cfg.conv1_kernel,
            cfg.conv1_stride,
            &mut rng,
        );
        let bn1 = BatchNorm1dLayer::new(cfg.conv1_channels);
        let conv2 = Conv1dLayer::new(
            cfg.conv1_channels,
            cfg.conv2_channels,
            cfg.conv2_kernel,
            cfg.conv2_stride,
            &mut rng,
        );
        let bn2 = BatchNorm1dLayer::new(cfg.conv2_channels);
        let dense = DenseLayer::new(cfg.conv2_channels, NUM_CLASSES, &mut rng);
        Ok(BarkNet {
            cfg,
            conv1,
            bn1,
            conv2,
            bn2,
            dense,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        match *x.shape() {
            [_, 1, len] if len == self.cfg.fragment_len => Ok(()),
            _ => Err(NnError::ShapeMismatch(format!(
                "expected [batch, 1, {}], got {:?}",
                self.cfg.fragment_len,
                x.shape()
            ))),
        }
    }

    /// Class probabilities for a batch of fragments, [batch, 5].
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        match mode {
            Mode::Infer => self.forward_infer(x),
            Mode::Train => {
                self.check_input(x)?;
                let z1 = self.conv1.forward(x)?;
                let (b1, _) = self.bn1.forward_train(&z1)?;
                let z2 = self.conv2.forward(&relu(&b1))?;
                let (b2, _) = self.bn2.forward_train(&z2)?;
                let pooled = global_avg_pool(&relu(&b2))?;
                Ok(softmax(&self.dense.forward(&pooled)?))
            }
        }
    }

    /// Infer-mode forward through a shared reference; safe to call
    /// concurrently since nothing is mutated.
    pub fn forward_infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let z1 = self.conv1.forward(x)?;
        let b1 = self.bn1.forward_infer(&z1)?;
        let z2 = self.conv2.forward(&relu(&b1))?;
        let b2 = self.bn2.forward_infer(&z2)?;
        let pooled = global_avg_pool(&relu(&b2))?;
        Ok(softmax(&self.dense.forward(&pooled)?))
    }

    /// Mean cross-entropy over the batch plus gradients for every trainable
    /// parameter, in the same order as [`BarkNet::params`]. Train mode, so
    /// the BN running statistics advance.
    pub fn loss_and_grads(
        &mut self,
        x: &Tensor,
        labels: &[usize],
    ) -> Result<(f64, Vec<Tensor>), NnError> {
        self.check_input(x)?;
        let z1 = self.conv1.forward(x)?;
        let (b1, bn1_cache) = self.bn1.forward_train(&z1)?;
        let a1 = relu(&b1);
        let z2 = self.conv2.forward(&a1)?;
        let (b2, bn2_cache) = self.bn2.forward_train(&z2)?;
        let a2 = relu(&b2);
        let pooled = global_avg_pool(&a2)?;
        let logits = self.dense.forward(&pooled)?;
        let probs = softmax(&logits);
        let loss = cross_entropy(&probs, labels)?;

        let g_logits = cross_entropy_logit_grad(&probs, labels)?;
        let (g_pooled, g_dw, g_db) = self.dense.backward(&pooled, &g_logits)?;
        let g_a2 = global_avg_pool_backward(&g_pooled, a2.shape()[2])?;
        let g_b2 = relu_backward(&b2, &g_a2);
        let (g_z2, g_bn2g, g_bn2b) = self.bn2.backward(&bn2_cache, &g_b2)?;
        let (g_a1, g_c2w, g_c2b) = self.conv2.backward(&a1, &g_z2)?;
        let g_b1 = relu_backward(&b1, &g_a1);
        let (g_z1, g_bn1g, g_bn1b) = self.bn1.backward(&bn1_cache, &g_b1)?;
        let (_g_x, g_c1w, g_c1b) = self.conv1.backward(x, &g_z1)?;
        Ok((
            loss,
            vec![
                g_c1w, g_c1b, g_bn1g, g_bn1b, g_c2w, g_c2b, g_bn2g, g_bn2b, g_dw, g_db,
            ],
        ))
    }

    /// Trainable parameters in checkpoint order (running stats excluded):
    /// conv1 w,b; bn1 gamma,beta; conv2 w,b; bn2 gamma,beta; dense w,b.
    pub fn params(&self) -> Vec<Tensor> {
        vec![
            self.conv1.weights.clone(),
            self.conv1.bias.clone(),
            self.bn1.gamma.clone(),
            self.bn1.beta.clone(),
            self.conv2.weights.clone(),
            self.conv2.bias.clone(),
            self.bn2.gamma.clone(),
            self.bn2.beta.clone(),
            self.dense.weights.clone(),
            self.dense.bias.clone(),
        ]
    }

    /// Overwrite the trainable parameters; shapes must match [`params`].
    pub fn set_params(&mut self, params: &[Tensor]) {
        assert_eq!(params.len(), 10, "expected 10 parameter tensors");
        let slots: [&mut Tensor; 10] = [
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.dense.weights,
            &mut self.dense.bias,
        ];
        for (slot, p) in slots.into_iter().zip(params) {
            assert_eq!(slot.shape(), p.shape(), "parameter shape changed");
            *slot = p.clone();
        }
    }

    /// Single-fragment inference: winning class (ties to the lowest ordinal)
    /// plus the raw five-way confidence vector.
    pub fn predict(&self, fragment: &[f64]) -> Result<(EmotionClass, [f64; NUM_CLASSES]), NnError> {
        let x = Tensor::from_vec(&[1, 1, fragment.len()], fragment.to_vec());
        let probs = self.forward_infer(&x)?;
        let mut conf = [0.0; NUM_CLASSES];
        conf.copy_from_slice(probs.data());
        let class = EmotionClass::from_ordinal(argmax_tie_low(&conf)).unwrap();
        Ok((class, conf))
    }

    fn param_and_stat_tensors(&self) -> [&Tensor; 14] {
        [
            &self.conv1.weights,
            &self.conv1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.bn1.running_mean,
            &self.bn1.running_var,
            &self.conv2.weights,
            &self.conv2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.bn2.running_mean,
            &self.bn2.running_var,
            &self.dense.weights,
            &self.dense.bias,
        ]
    }

    /// Serialize to the BARK1 byte format: magic, u32 version, seven u32
    /// architecture fields (fragment_len, conv1 ch/kernel/stride, conv2
    /// ch/kernel/stride), then all tensors from `param_and_stat_tensors`
    /// as consecutive little-endian f64.
    pub fn save_checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [
            self.cfg.fragment_len,
            self.cfg.conv1_channels,
            self.cfg.conv1_kernel,
            self.cfg.conv1_stride,
            self.cfg.conv2_channels,
            self.cfg.conv2_kernel,
            self.cfg.conv2_stride,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for t in self.param_and_stat_tensors() {
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`save_checkpoint`]; never yields a partially-filled model.
    pub fn load_checkpoint(bytes: &[u8]) -> Result<BarkNet, ModelError> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(5, "magic")? != CHECKPOINT_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = rd.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch { found: version });
        }
        let cfg = BarkNetConfig {
            fragment_len: rd.u32("fragment_len")? as usize,
            conv1_channels: rd.u32("conv1_channels")? as usize,
            conv1_kernel: rd.u32("conv1_kernel")? as usize,
            conv1_stride: rd.u32("conv1_stride")? as usize,
            conv2_channels: rd.u32("conv2_channels")? as usize,
            conv2_kernel: rd.u32("conv2_kernel")? as usize,
            conv2_stride: rd.u32("conv2_stride")? as usize,
            seed: 0,
        };
        let mut net = BarkNet::init(cfg.clone())?;
        let c1 = cfg.conv1_channels;
        let c2 = cfg.conv2_channels;
        let shapes: [(&'static str, Vec<usize>); 14] = [
            ("conv1 weights", vec![c1, 1, cfg.conv1_kernel]),
            ("conv1 bias", vec![c1]),
            ("bn1 gamma", vec![c1]),
            ("bn1 beta", vec![c1]),
            ("bn1 running_mean", vec![c1]),
            ("bn1 running_var", vec![c1]),
            ("conv2 weights", vec![c2, c1, cfg.conv2_kernel]),
            ("conv2 bias", vec![c2]),
            ("bn2 gamma", vec![c2]),
            ("bn2 beta", vec![c2]),
            ("bn2 running_mean", vec![c2]),
            ("bn2 running_var", vec![c2]),
            ("dense weights", vec![NUM_CLASSES, c2]),
            ("dense bias", vec![NUM_CLASSES]),
        ];
        let mut tensors = Vec::with_capacity(14);
        for (name, shape) in shapes {
            tensors.push(rd.f64_tensor(&shape, name)?);
        }
        let mut it = tensors.into_iter();
        net.conv1.weights = it.next().unwrap();
        net.conv1.bias = it.next().unwrap();
        net.bn1.gamma = it.next().unwrap();
        net.bn1.beta = it.next().unwrap();
        net.bn1.running_mean = it.next().unwrap();
        net.bn1.running_var = it.next().unwrap();
        net.conv2.weights = it.next().unwrap();
        net.conv2.bias = it.next().unwrap();
        net.bn2.gamma = it.next().unwrap();
        net.bn2.beta = it.next().unwrap();
        net.bn2.running_mean = it.next().unwrap();
        net.bn2.running_var = it.next().unwrap();
        net.dense.weights = it.next().unwrap();
        net.dense.bias = it.next().unwrap();
        Ok(net)
    }
}

/// First index of the maximum; equal values resolve to the earliest.
pub fn argmax_tie_low(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(ModelError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64_tensor(&mut self, shape: &[usize], what: &'static str) -> Result<Tensor, ModelError> {
        let n: usize = shape.iter().product();
        let raw = self.take(n * 8, what)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor::from_vec(shape, data))
    }
}
