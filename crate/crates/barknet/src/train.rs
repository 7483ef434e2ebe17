//! Mini-batch training with validation-based early stopping.
//!
//! Each epoch: reshuffle the training set (seeded per epoch), step the
//! optimizer over softmax cross-entropy batch by batch, then sweep the
//! validation split in infer mode. Training stops when validation accuracy
//! has not improved for `early_stop_patience` epochs, and the weights from
//! the best-validation epoch are what comes back.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{peak_normalize, shuffled_batches, EmotionClass, LabeledFragment};
use crate::model::{BarkNet, Mode};
use crate::nn::{adam_step, sgd_step, AdamState, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs_max: 50,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            early_stop_patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    /// Wall-clock seconds; kept out of [`TrainLog::render`] so rendered logs
    /// are reproducible byte for byte.
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl TrainLog {
    /// One line per epoch: "epoch=<n> loss=<x> val_acc=<y>".
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&format!(
                "epoch={} loss={:.6} val_acc={:.4}\n",
                e.epoch, e.train_loss, e.val_acc
            ));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Stack fragments into a [n, 1, len] batch, peak-normalizing each one, and
/// collect the label ordinals.
fn batch_tensor(items: &[LabeledFragment], idxs: &[usize]) -> (Tensor, Vec<usize>) {
    let len = items[idxs[0]].fragment.samples.len();
    let mut data = Vec::with_capacity(idxs.len() * len);
    let mut labels = Vec::with_capacity(idxs.len());
    for &i in idxs {
        let start = data.len();
        data.extend_from_slice(&items[i].fragment.samples);
        peak_normalize(&mut data[start..]);
        labels.push(items[i].label.ordinal());
    }
    (Tensor::from_vec(&[idxs.len(), 1, len], data), labels)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Mean train-mode cross-entropy over `items` without any parameter update,
/// using the same seeded batch order as epoch 1 of [`fit`]. This is the
/// "loss before training" probe; it still advances BN running statistics,
/// so callers who care should pass a clone.
pub fn mean_train_loss(
    net: &mut BarkNet,
    items: &[LabeledFragment],
    batch_size: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptySplit("loss probe"));
    }
    let mut total = 0.0;
    for idxs in shuffled_batches(items.len(), batch_size, epoch_seed(seed, 1)) {
        let (x, labels) = batch_tensor(items, &idxs);
        let probs = net.forward(&x, Mode::Train)?;
        let loss = crate::nn::cross_entropy(&probs, &labels)?;
        total += loss * idxs.len() as f64;
    }
    Ok(total / items.len() as f64)
}

/// Train `net` and return it rewound to the best-validation epoch, along
/// with the full epoch log.
pub fn fit(
    mut net: BarkNet,
    train: &[LabeledFragment],
    val: &[LabeledFragment],
    cfg: &TrainConfig,
) -> Result<(BarkNet, TrainLog), TrainError> {
    assert!(cfg.epochs_max >= 1 && cfg.batch_size >= 1 && cfg.early_stop_patience >= 1);
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let mut adam = AdamState::new(&net.params(), cfg.learning_rate);
    let mut log = TrainLog::default();
    let mut best_bytes: Option<Vec<u8>> = None;
    let mut stale_epochs = 0usize;
    for epoch in 1..=cfg.epochs_max {
        let t0 = Instant::now();
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for idxs in shuffled_batches(train.len(), cfg.batch_size, epoch_seed(cfg.seed, epoch)) {
            let (x, labels) = batch_tensor(train, &idxs);
            let (loss, grads) = net.loss_and_grads(&x, &labels)?;
            let mut params = net.params();
            match cfg.optimizer {
                OptimizerKind::Sgd => sgd_step(&mut params, &grads, cfg.learning_rate),
                OptimizerKind::Adam => adam_step(&mut adam, &mut params, &grads),
            }
            net.set_params(&params);
            loss_sum += loss * idxs.len() as f64;
            seen += idxs.len();
        }
        let (val_acc, _) = evaluate_split(&net, val)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_acc,
            wall_secs: t0.elapsed().as_secs_f64(),
        });
        if best_bytes.is_none() || val_acc > log.best_val_acc {
            log.best_val_acc = val_acc;
            log.best_epoch = epoch;
            best_bytes = Some(net.save_checkpoint());
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let bytes = best_bytes.expect("at least one epoch ran");
    let best = BarkNet::load_checkpoint(&bytes).expect("checkpoint written by this process");
    Ok((best, log))
}

/// Infer-mode accuracy and per-item predictions over a labeled split.
pub fn evaluate_split(
    net: &BarkNet,
    items: &[LabeledFragment],
) -> Result<(f64, Vec<EmotionClass>), TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let mut preds = Vec::with_capacity(items.len());
    let mut correct = 0usize;
    for item in items {
        let mut samples = item.fragment.samples.clone();
        peak_normalize(&mut samples);
        let (class, _) = net.predict(&samples)?;
        if class == item.label {
            correct += 1;
        }
        preds.push(class);
    }
    Ok((correct as f64 / items.len() as f64, preds))
}
