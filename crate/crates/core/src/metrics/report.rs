use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::auc::auc;
use super::confusion::{confusion_counts, scalar_metrics, ConfusionCounts};
use super::skeleton::{cl_dice, BinaryMask};
use super::stats::{aggregate_folds, paired_t_test, MeanStd};
use crate::error::{Error, Result};
use crate::pipeline::LabelMap;

/// Metrics of one class view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub jac: f64,
    pub dice: f64,
    pub sen: f64,
    pub pre: f64,
    /// Absent when the ground truth has a single class or no scores were given.
    pub auc: Option<f64>,
}

impl ViewReport {
    fn from_counts(c: &ConfusionCounts, auc: Option<f64>) -> Self {
        let m = scalar_metrics(c);
        ViewReport { jac: m.jac, dice: m.dice, sen: m.sen, pre: m.pre, auc }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselReport {
    #[serde(flatten)]
    pub view: ViewReport,
    pub cldice: f64,
}

/// BV, MAT and whole-vessel metrics for one image, or their mean over images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "BV")]
    pub bv: ViewReport,
    #[serde(rename = "MAT")]
    pub mat: ViewReport,
    pub all: VesselReport,
}

/// Scores one prediction. `probs` holds class probabilities as `[3, H, W]`;
/// the vessel view is scored by `1 - p_background`.
pub fn evaluate_image(pred: &LabelMap, probs: Option<&[f32]>, gt: &LabelMap) -> Result<EvalReport> {
    let counts = confusion_counts(pred, gt)?;
    let n = gt.classes.len();
    if let Some(p) = probs {
        if p.len() != 3 * n {
            return Err(Error::Dimension(format!("{} probabilities for 3x{n} pixels", p.len())));
        }
    }
    let view_auc = |scores: &dyn Fn(usize) -> f64, positive: fn(u8) -> bool| -> Option<f64> {
        probs?;
        let s: Vec<f64> = (0..n).map(scores).collect();
        let g: Vec<bool> = gt.classes.iter().map(|&c| positive(c)).collect();
        auc(&s, &g)
    };
    let p = |k: usize, i: usize| probs.map_or(0.0, |p| p[k * n + i] as f64);
    let to_mask = |m: &LabelMap| BinaryMask {
        height: m.height,
        width: m.width,
        data: m.classes.iter().map(|&c| c != 0).collect(),
    };
    Ok(EvalReport {
        bv: ViewReport::from_counts(&counts.bv, view_auc(&|i| p(1, i), |c| c == 1)),
        mat: ViewReport::from_counts(&counts.mat, view_auc(&|i| p(2, i), |c| c == 2)),
        all: VesselReport {
            view: ViewReport::from_counts(&counts.all, view_auc(&|i| 1.0 - p(0, i), |c| c != 0)),
            cldice: cl_dice(&to_mask(pred), &to_mask(gt))?,
        },
    })
}

fn mean_views(views: &[ViewReport]) -> ViewReport {
    let n = views.len() as f64;
    let avg = |f: fn(&ViewReport) -> f64| views.iter().map(f).sum::<f64>() / n;
    let aucs: Vec<f64> = views.iter().filter_map(|v| v.auc).collect();
    ViewReport {
        jac: avg(|v| v.jac),
        dice: avg(|v| v.dice),
        sen: avg(|v| v.sen),
        pre: avg(|v| v.pre),
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
    }
}

impl EvalReport {
    /// Per-image average; AUC averages only the images where it is defined.
    pub fn mean(reports: &[EvalReport]) -> Result<EvalReport> {
        if reports.is_empty() {
            return Err(Error::Usage("no image reports to average".into()));
        }
        let pick = |f: fn(&EvalReport) -> ViewReport| mean_views(&reports.iter().map(f).collect::<Vec<_>>());
        Ok(EvalReport {
            bv: pick(|r| r.bv),
            mat: pick(|r| r.mat),
            all: VesselReport {
                view: pick(|r| r.all.view),
                cldice: reports.iter().map(|r| r.all.cldice).sum::<f64>() / reports.len() as f64,
            },
        })
    }

    /// Flat `view.metric` map; undefined AUCs are omitted.
    pub fn flatten(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (name, v) in [("BV", &self.bv), ("MAT", &self.mat), ("all", &self.all.view)] {
            for (m, x) in [("jac", v.jac), ("dice", v.dice), ("sen", v.sen), ("pre", v.pre)] {
                out.insert(format!("{name}.{m}"), x);
            }
            if let Some(a) = v.auc {
                out.insert(format!("{name}.auc"), a);
            }
        }
        out.insert("all.cldice".into(), self.all.cldice);
        out
    }
}

/// Evaluation output: the mean over folds (or images), each fold's report,
/// per-metric fold statistics, and paired t-test p-values against named
/// comparison runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub summary: EvalReport,
    pub folds: Vec<EvalReport>,
    pub fold_stats: BTreeMap<String, MeanStd>,
    pub p_values: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MetricsReport {
    pub fn from_folds(folds: Vec<EvalReport>) -> Result<Self> {
        let flat: Vec<_> = folds.iter().map(EvalReport::flatten).collect();
        let fold_stats = aggregate_folds(&flat)?;
        Ok(MetricsReport { summary: EvalReport::mean(&folds)?, folds, fold_stats, p_values: BTreeMap::new() })
    }

    /// Adds paired t-test p-values of every shared metric against `other`'s folds.
    pub fn compare(&mut self, name: &str, other: &MetricsReport) -> Result<()> {
        if other.folds.len() != self.folds.len() {
            return Err(Error::Usage(format!(
                "comparison {name:?} has {} folds, this report {}",
                other.folds.len(),
                self.folds.len()
            )));
        }
        let mine: Vec<_> = self.folds.iter().map(EvalReport::flatten).collect();
        let theirs: Vec<_> = other.folds.iter().map(EvalReport::flatten).collect();
        let mut p = BTreeMap::new();
        for metric in mine[0].keys() {
            let a: Option<Vec<f64>> = mine.iter().map(|f| f.get(metric).copied()).collect();
            let b: Option<Vec<f64>> = theirs.iter().map(|f| f.get(metric).copied()).collect();
            if let (Some(a), Some(b)) = (a, b) {
                p.insert(metric.clone(), paired_t_test(&a, &b)?.p);
            }
        }
        self.p_values.insert(name.to_string(), p);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// `metric,mean,std` rows over folds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,std\n");
        for (k, v) in &self.fold_stats {
            out.push_str(&format!("{k},{},{}\n", v.mean, v.std));
        }
        out
    }
}
