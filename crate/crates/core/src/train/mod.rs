//! Training loop, optimizer and sliding-window inference.

mod data;
mod infer;
mod optim;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::loss::total_loss;
use crate::metrics::evaluate_image;
use crate::model::{Ctx, DsaNet};
use crate::param::ParamStore;
use crate::pipeline::{AugmentConfig, LabelMap};
use crate::tensor::Scalar;

pub use data::{batch_tensors, label_batch, Input, RawSample};
pub use infer::{argmax_classes, predict, predict_probs, InferConfig, Tta};
pub use optim::{poly_lr, Sgd, SgdConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Defaults to one pass over the training set.
    pub iters_per_epoch: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub poly_power: f64,
    pub sgd: SgdConfig,
    /// `None` disables augmentation.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            iters_per_epoch: None,
            batch_size: 2,
            lr: 0.01,
            poly_power: 0.9,
            sgd: SgdConfig::default(),
            augment: Some(AugmentConfig::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.iters_per_epoch == Some(0) {
            return Err(Error::Config("epochs, batch size and iterations per epoch must be positive".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.sgd.momentum) || self.sgd.weight_decay < 0.0 {
            return Err(Error::Config("need lr > 0, momentum in [0, 1) and weight decay >= 0".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub grad_norm: f64,
    /// Mean whole-vessel Dice on the validation samples.
    pub val_dice: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_val_dice: Option<f64>,
}

/// Mean whole-vessel Dice of argmax predictions against labelled samples.
pub fn mean_dice<S: Scalar>(net: &DsaNet, store: &ParamStore<S>, samples: &[RawSample], cfg: &InferConfig) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let gt = s.label.as_ref().ok_or_else(|| Error::Data(format!("{}: no label to score", s.id())))?;
        let (pred, _) = predict(net, store, &s.normalized(), cfg)?;
        total += evaluate_image(&pred, None, gt)?.all.view.dice;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Runs the whole schedule. `on_epoch` sees every log line and the current
/// parameters, with a flag telling whether validation Dice improved.
pub fn train<S: Scalar>(
    net: &DsaNet,
    store: &mut ParamStore<S>,
    train_set: &[RawSample],
    val_set: &[RawSample],
    cfg: &TrainConfig,
    infer: &InferConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog, &ParamStore<S>, bool) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if let Some(s) = train_set.iter().find(|s| s.label.is_none()) {
        return Err(Error::Data(format!("{}: training sample has no label", s.id())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sgd = Sgd::new(cfg.sgd.clone(), store);
    let iters = cfg.iters_per_epoch.unwrap_or(train_set.len().div_ceil(cfg.batch_size));
    let mut order: Vec<usize> = Vec::new();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let (mut best_epoch, mut best_dice) = (None, None::<f64>);

    for epoch in 0..cfg.epochs {
        let lr = poly_lr(cfg.lr, epoch, cfg.epochs, cfg.poly_power);
        let (mut loss_sum, mut norm_sum) = (0.0, 0.0);
        for _ in 0..iters {
            let mut batch = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                if order.is_empty() {
                    order = (0..train_set.len()).collect();
                    order.shuffle(&mut rng);
                }
                let s = &train_set[order.pop().expect("refilled above")];
                batch.push(match &cfg.augment {
                    Some(a) => s.augmented(rng.next_u64(), a)?,
                    None => s.clone(),
                });
            }
            let inputs: Vec<Input> = batch.iter().map(RawSample::normalized).collect();
            let labels: Vec<&LabelMap> = batch.iter().map(|s| s.label.as_ref().expect("checked above")).collect();
            let (seq, mip) = batch_tensors::<S>(&inputs)?;
            let target = label_batch(&labels)?;
            store.zero_grad();
            let loss = {
                let tape = Tape::new();
                let ctx = Ctx::new(&tape, store);
                let out = net.forward_tensors(&ctx, seq, mip)?;
                let loss = total_loss(&out, &target)?;
                let value = loss.value().item().as_f64();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("training loss is {value} at epoch {epoch}")));
                }
                tape.backward(loss, store)?;
                value
            };
            norm_sum += sgd.step(store, lr);
            loss_sum += loss;
        }
        let val_dice = if val_set.is_empty() { None } else { Some(mean_dice(net, store, val_set, infer)?) };
        let improved = match (val_dice, best_dice) {
            (Some(d), Some(b)) => d > b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            best_dice = val_dice;
            best_epoch = Some(epoch);
        }
        let log = EpochLog { epoch, lr, train_loss: loss_sum / iters as f64, grad_norm: norm_sum / iters as f64, val_dice };
        on_epoch(&log, store, improved)?;
        logs.push(log);
    }
    Ok(TrainOutcome { logs, best_epoch, best_val_dice: best_dice })
}
