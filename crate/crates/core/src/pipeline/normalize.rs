//! Per-sample z-score normalization.

/// Population mean and standard deviation, accumulated in `f64`.
pub fn mean_std(values: &[f32]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Applies `(v - mean) / std`; a vanishing `std` is replaced by 1 so constant
/// inputs map to zeros.
pub fn apply_zscore(values: &[f32], mean: f64, std: f64) -> Vec<f32> {
    let std = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
    values.iter().map(|&v| ((v as f64 - mean) / std) as f32).collect()
}

/// Z-score of `values` against their own statistics.
pub fn normalize_intensity(values: &[f32]) -> Vec<f32> {
    assert!(!values.is_empty(), "normalization of an empty input");
    let (mean, std) = mean_std(values);
    apply_zscore(values, mean, std)
}

/// Normalizes the MinIP and every frame with the MinIP's statistics so both
/// network inputs share one scale. Returns `(frames, minip)`.
pub fn normalize_sample(frames: &[f32], minip: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let (mean, std) = mean_std(minip);
    (apply_zscore(frames, mean, std), apply_zscore(minip, mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_and_constants() {
        assert_eq!(normalize_intensity(&[0.0, 10.0]), vec![-1.0, 1.0]);
        assert!(normalize_intensity(&[3.5; 9]).iter().all(|&v| v == 0.0));
    }
}
