use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::LabelMap;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Counts from paired binary decisions.
    pub fn from_masks(pred: impl Iterator<Item = bool>, gt: impl Iterator<Item = bool>) -> Self {
        let mut c = ConfusionCounts::default();
        for (p, g) in pred.zip(gt) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// One-vs-rest counts for BV and MAT plus the merged vessel view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub bv: ConfusionCounts,
    pub mat: ConfusionCounts,
    pub all: ConfusionCounts,
}

pub fn confusion_counts(pred: &LabelMap, gt: &LabelMap) -> Result<ClassCounts> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(Error::Usage(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    let view = |f: fn(u8) -> bool| {
        ConfusionCounts::from_masks(pred.classes.iter().map(|&c| f(c)), gt.classes.iter().map(|&c| f(c)))
    };
    Ok(ClassCounts { bv: view(|c| c == 1), mat: view(|c| c == 2), all: view(|c| c != 0) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub jac: f64,
    pub dice: f64,
    pub sen: f64,
    pub pre: f64,
}

/// `num / den`, with `0/0` read as 1 when the class is absent from both
/// prediction and ground truth and as 0 otherwise.
fn ratio(num: u64, den: u64, empty: bool) -> f64 {
    if den == 0 {
        if empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

pub fn scalar_metrics(c: &ConfusionCounts) -> ScalarMetrics {
    let empty = c.tp == 0 && c.fp == 0 && c.fn_ == 0;
    ScalarMetrics {
        jac: ratio(c.tp, c.tp + c.fp + c.fn_, empty),
        dice: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, empty),
        sen: ratio(c.tp, c.tp + c.fn_, empty),
        pre: ratio(c.tp, c.tp + c.fp, empty),
    }
}
