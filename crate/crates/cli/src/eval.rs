use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use dsanet_core::metrics::{evaluate_image, EvalReport, MetricsReport};
use dsanet_core::phantom::read_folds;
use dsanet_core::pipeline::{load_image, read_label, LABEL_FILE};
use dsanet_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::infer::{prob_file, PRED_FILE};
use crate::run_config::create_dir;
use crate::Globals;

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Prediction directory with one `<id>/pred.pgm` per sample.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Dataset directory with one `<id>/label.pgm` per sample.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Fold file; metrics are averaged per fold, then across folds.
    #[arg(long)]
    folds: Option<PathBuf>,
    /// Second prediction directory compared by paired t-tests.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub folds: Option<PathBuf>,
    pub compare: Option<PathBuf>,
}

fn predicted_ids(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(PRED_FILE).is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    if ids.is_empty() {
        return Err(Error::Data(format!("{}: no */{PRED_FILE} found", dir.display())));
    }
    ids.sort();
    Ok(ids)
}

/// Probability planes if all three maps are present.
fn load_probs(dir: &Path) -> Result<Option<Vec<f32>>> {
    let mut out = Vec::new();
    for k in 0..3 {
        let path = dir.join(prob_file(k));
        if !path.is_file() {
            return Ok(None);
        }
        let (img, max) = load_image(&path)?;
        out.extend(img.data.iter().map(|v| v / max as f32));
    }
    Ok(Some(out))
}

fn score(pred_dir: &Path, gt_dir: &Path, id: &str) -> Result<EvalReport> {
    let pred = read_label(&pred_dir.join(id).join(PRED_FILE))?;
    let gt = read_label(&gt_dir.join(id).join(LABEL_FILE))?;
    let probs = load_probs(&pred_dir.join(id))?;
    evaluate_image(&pred, probs.as_deref(), &gt)
}

fn report(pred_dir: &Path, gt_dir: &Path, groups: &[Vec<String>]) -> Result<MetricsReport> {
    let folds = groups
        .iter()
        .map(|ids| {
            let reports = ids.iter().map(|id| score(pred_dir, gt_dir, id)).collect::<Result<Vec<_>>>()?;
            EvalReport::mean(&reports)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_folds(folds)
}

pub fn run(a: EvalArgs, g: &Globals) -> Result<ExitCode> {
    let mut s: EvalSettings = g.file.settings("eval")?;
    if let Some(p) = a.pred {
        s.pred = p;
    }
    if let Some(p) = a.gt {
        s.gt = p;
    }
    if a.folds.is_some() {
        s.folds = a.folds;
    }
    if a.compare.is_some() {
        s.compare = a.compare;
    }
    if s.pred.as_os_str().is_empty() || s.gt.as_os_str().is_empty() {
        crate::usage_exit("the following required arguments were not provided: --pred <PRED> --gt <GT>");
    }
    let ids = predicted_ids(&s.pred)?;
    let groups: Vec<Vec<String>> = match &s.folds {
        None => vec![ids],
        Some(path) => {
            let folds: BTreeMap<String, Vec<String>> = read_folds(path)?;
            folds
                .values()
                .map(|members| members.iter().filter(|m| ids.contains(m)).cloned().collect::<Vec<_>>())
                .filter(|g| !g.is_empty())
                .collect()
        }
    };
    let mut rep = report(&s.pred, &s.gt, &groups)?;
    if let Some(other) = &s.compare {
        let name = other.file_name().map_or_else(|| other.display().to_string(), |n| n.to_string_lossy().into_owned());
        rep.compare(&name, &report(other, &s.gt, &groups)?)?;
    }
    match &g.out {
        Some(out) => {
            create_dir(out)?;
            g.run_config("eval", &s).write(out)?;
            rep.write_json(&out.join(REPORT_FILE))?;
            let csv = out.join(REPORT_CSV);
            std::fs::write(&csv, rep.to_csv()).map_err(|e| Error::Io { path: csv, source: e })?;
            let all = rep.summary.all;
            println!(
                "vessel dice {:.4}  jaccard {:.4}  cldice {:.4}  over {} fold(s); report in {}",
                all.view.dice,
                all.view.jac,
                all.cldice,
                rep.folds.len(),
                out.display()
            );
        }
        None => println!("{}", rep.to_json()),
    }
    Ok(ExitCode::SUCCESS)
}
