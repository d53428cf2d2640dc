//! Ranking and evaluation helpers shared by the estimators and the simulator.

use std::cmp::Ordering;

/// 1-based midranks: tied values share the average of the ranks they span.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Empirical CDF value of each entry, `(midrank - 1/2) / n`.
///
/// Distinct values map to `(r - 1/2)/n`; a fully tied sample maps to 1/2.
pub fn empirical_cdf(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    midranks(values)
        .into_iter()
        .map(|r| (r - 0.5) / n)
        .collect()
}

/// Area under the ROC curve of `scores` for the positive class, via the
/// Mann-Whitney statistic with midranks. Returns `None` when one class is empty.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Per-group accuracies for `groups` labelled `0..n_groups`; groups with no
/// examples are `None`.
pub fn group_accuracies(
    predicted: &[u8],
    truth: &[u8],
    groups: &[usize],
    n_groups: usize,
) -> Vec<Option<f64>> {
    let mut hits = vec![0usize; n_groups];
    let mut counts = vec![0usize; n_groups];
    for ((p, t), &g) in predicted.iter().zip(truth).zip(groups) {
        counts[g] += 1;
        if p == t {
            hits[g] += 1;
        }
    }
    hits.iter()
        .zip(&counts)
        .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
        .collect()
}

pub fn accuracy(predicted: &[u8], truth: &[u8]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Minimum accuracy over the non-empty groups.
pub fn worst_group_accuracy(
    predicted: &[u8],
    truth: &[u8],
    groups: &[usize],
    n_groups: usize,
) -> f64 {
    group_accuracies(predicted, truth, groups, n_groups)
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min)
}

/// Indices of the points not dominated by any other point when both
/// coordinates are maximized. Duplicates of a non-dominated point are all kept.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (a, b) = points[i];
            !points
                .iter()
                .any(|&(c, d)| c >= a && d >= b && (c > a || d > b))
        })
        .collect()
}
