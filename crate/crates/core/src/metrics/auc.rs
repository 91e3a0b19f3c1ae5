/// Area under the ROC curve by the Mann-Whitney statistic with midranks for
/// ties. `None` when the ground truth holds only one class.
pub fn auc(scores: &[f64], gt: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), gt.len(), "scores and labels differ in length");
    let n_pos = gt.iter().filter(|&&g| g).count();
    let n_neg = gt.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let pos = order[i..=j].iter().filter(|&&k| gt[k]).count();
        rank_sum += mid * pos as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}
