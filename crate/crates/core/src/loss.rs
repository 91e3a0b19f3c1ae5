//! Training objectives: pixel cross-entropy, soft Dice over foreground
//! classes, and their deep-supervised sum over the three output scales.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::model::ModelOutput;
use crate::tensor::{Scalar, Tensor};

pub use crate::autodiff::LOG_CLAMP;

/// Smoothing term in the soft Dice denominator.
pub const DICE_EPS: f64 = 1e-6;

/// Foreground classes scored by the Dice term.
pub const FOREGROUND: [u8; 2] = [1, 2];

/// Labels of a `[B, H, W]` batch with their spatial size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelBatch {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub classes: Vec<u8>,
}

impl LabelBatch {
    pub fn new(batch: usize, height: usize, width: usize, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != batch * height * width {
            return Err(Error::Dimension(format!(
                "{} labels for {batch}x{height}x{width}",
                classes.len()
            )));
        }
        Ok(LabelBatch { batch, height, width, classes })
    }

    /// Nearest-neighbour downsampling by `factor`, keeping the top-left
    /// pixel of each block.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor) {
            return Err(Error::Dimension(format!(
                "{}x{} labels not divisible by {factor}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut classes = Vec::with_capacity(self.batch * h * w);
        for b in 0..self.batch {
            for y in 0..h {
                for x in 0..w {
                    classes.push(self.classes[(b * self.height + y * factor) * self.width + x * factor]);
                }
            }
        }
        Ok(LabelBatch { batch: self.batch, height: h, width: w, classes })
    }

    /// Foreground classes that occur in the batch.
    pub fn present_foreground(&self) -> Vec<usize> {
        FOREGROUND
            .iter()
            .filter(|&&k| self.classes.contains(&k))
            .map(|&k| k as usize)
            .collect()
    }
}

/// Cross-entropy from logits `[B, M, H, W]`, softmax applied internally.
pub fn ce_loss<'t, S: Scalar>(logits: Var<'t, S>, target: &LabelBatch) -> Result<Var<'t, S>> {
    logits.cross_entropy_logits(&target.classes)
}

/// Cross-entropy from class probabilities `[B, M, H, W]`.
pub fn ce_loss_probs<'t, S: Scalar>(probs: Var<'t, S>, target: &LabelBatch) -> Result<Var<'t, S>> {
    probs.cross_entropy_probs(&target.classes)
}

/// Soft Dice loss averaged over the foreground classes present in the
/// batch; zero when no foreground is present.
pub fn dice_loss<'t, S: Scalar>(probs: Var<'t, S>, target: &LabelBatch) -> Result<Var<'t, S>> {
    let classes = target.present_foreground();
    if classes.is_empty() {
        return Ok(probs.tape().constant(Tensor::scalar(S::zero())));
    }
    probs.soft_dice(&target.classes, &classes, DICE_EPS)
}

/// `CE + Dice` for one head of logits.
pub fn scale_loss<'t, S: Scalar>(logits: Var<'t, S>, target: &LabelBatch) -> Result<Var<'t, S>> {
    let ce = ce_loss(logits, target)?;
    ce.add(dice_loss(logits.softmax(1)?, target)?)
}

/// `sum_a 2^-a (CE_a + Dice_a)` over heads at downsampling `2^a`, with
/// nearest-downsampled targets.
pub fn deep_supervision_loss<'t, S: Scalar>(heads: &[Var<'t, S>], target: &LabelBatch) -> Result<Var<'t, S>> {
    let mut total: Option<Var<'t, S>> = None;
    for (a, &head) in heads.iter().enumerate() {
        let t = if a == 0 { target.clone() } else { target.downsample(1 << a)? };
        let term = scale_loss(head, &t)?.scale(S::c(0.5f64.powi(a as i32)))?;
        total = Some(match total {
            Some(acc) => acc.add(term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::Usage("no output heads".into()))
}

pub fn total_loss<'t, S: Scalar>(output: &ModelOutput<'t, S>, target: &LabelBatch) -> Result<Var<'t, S>> {
    deep_supervision_loss(&output.heads(), target)
}
