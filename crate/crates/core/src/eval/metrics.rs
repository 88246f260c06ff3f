//! Threshold-free detection metrics over an (ID, OOD) pair of score lists.
//!
//! Orientation: scores are uncertainties, so OOD should score high. For
//! AUPR-IN and FPR@95TPR the ID set is the positive class and an instance
//! is flagged as ID when its score is at or below the threshold. Worked
//! example: id = [1, 2], ood = [1.5, 3]. Thresholds 1, 1.5, 2, 3 give
//! (TP, FP) = (1, 0), (1, 1), (2, 1), (2, 2); the 95% TPR threshold is 2,
//! where one of two OOD scores is accepted, so FPR@95TPR = 0.5.

use crate::error::{Error, Result};

fn check(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::Empty("ID and OOD score lists must both be nonempty".into()));
    }
    if id.iter().chain(ood).any(|v| v.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    Ok(())
}

/// Midranks (1-based, ties averaged) of `values`, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney `U` of `a` against `b`: pairs with `a > b` plus half the ties.
pub(crate) fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let ra: f64 = ranks[..a.len()].iter().sum();
    let na = a.len() as f64;
    ra - na * (na + 1.0) / 2.0
}

/// `P(ood > id) + ½ P(ood = id)` via rank sums, `O(n log n)`.
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, ood)?;
    Ok(u_statistic(ood, id) / (id.len() as f64 * ood.len() as f64))
}

/// `P(a > b) + ½ P(a = b)`.
pub fn cles(a: &[f64], b: &[f64]) -> Result<f64> {
    auroc(b, a)
}

/// `(threshold, TP, FP)` at every distinct score, ascending, where TP/FP
/// count ID/OOD scores at or below the threshold.
fn sweep(id: &[f64], ood: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((t, tp, fp));
    }
    out
}

/// Step-wise area under the precision-recall curve with ID as positive:
/// `Σ_k (R_k − R_{k−1}) · P_k` over ascending thresholds.
pub fn aupr_in(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, ood)?;
    let n = id.len() as f64;
    let mut area = 0.0;
    let mut prev_tp = 0;
    for (_, tp, fp) in sweep(id, ood) {
        if tp > prev_tp {
            area += (tp - prev_tp) as f64 / n * (tp as f64 / (tp + fp) as f64);
            prev_tp = tp;
        }
    }
    Ok(area)
}

/// Fraction of OOD scores at or below the smallest threshold that accepts
/// at least 95% of ID scores.
pub fn fpr_at_95_tpr(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, ood)?;
    for (_, tp, fp) in sweep(id, ood) {
        if tp * 100 >= 95 * id.len() {
            return Ok(fp as f64 / ood.len() as f64);
        }
    }
    unreachable!("the largest threshold accepts every ID score")
}
