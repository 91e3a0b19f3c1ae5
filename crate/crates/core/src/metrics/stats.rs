use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
}

/// Two-sided paired t-test on `a - b` with `n - 1` degrees of freedom.
/// Constant non-zero differences give an infinite statistic and `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Usage("a paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, p: 1.0 }
        } else {
            TTest { t: mean.signum() * f64::INFINITY, p: 0.0 }
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for one value.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

/// Mean and sample standard deviation of every metric across folds. All
/// folds must carry the same metric names.
pub fn aggregate_folds(folds: &[BTreeMap<String, f64>]) -> Result<BTreeMap<String, MeanStd>> {
    let Some(first) = folds.first() else {
        return Err(Error::Usage("no fold reports to aggregate".into()));
    };
    for (i, fold) in folds.iter().enumerate().skip(1) {
        if let Some(name) = first.keys().find(|k| !fold.contains_key(*k)) {
            return Err(Error::MetricSchema { fold: i, metric: name.clone() });
        }
        if let Some(name) = fold.keys().find(|k| !first.contains_key(*k)) {
            return Err(Error::MetricSchema { fold: i, metric: name.clone() });
        }
    }
    Ok(first
        .keys()
        .map(|k| {
            let values: Vec<f64> = folds.iter().map(|f| f[k]).collect();
            (k.clone(), mean_std(&values))
        })
        .collect())
}
