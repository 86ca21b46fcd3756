use crate::error::{Error, Result};

/// Area under the ROC curve as the normalized Mann-Whitney U statistic.
///
/// Ties between a positive and a negative score count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::input(format!(
            "auroc: {} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("auroc: NaN score"));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auroc needs both classes (positives {n_pos}, negatives {n_neg})"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based mid-ranks of the positives. Mid-ranks are multiples of
    // one half, so the sum is exact in f64 for any realistic length.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_block = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid_rank * pos_in_block as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
