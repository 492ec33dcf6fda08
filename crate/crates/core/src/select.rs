//! Knockoff+ threshold and selection metrics.

use serde::{Deserialize, Serialize};

/// Default target FDR level.
pub const DEFAULT_Q: f64 = 0.2;

/// Result of thresholding one statistic vector, scored against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// `+∞` when nothing can be selected.
    pub threshold: f64,
    /// Indices with `W_j ≥ T`, ascending.
    pub selected: Vec<usize>,
    pub fdp: f64,
    pub power: f64,
    /// `#{null, W ≥ T} / (#{null, W ≤ −T} + 1)`
    pub ratio_stat: f64,
    pub q: f64,
}

/// `T = min{t > 0 : (1 + #{W ≤ −t}) / max(#{W ≥ t}, 1) ≤ q}` over the
/// candidates `t ∈ {|W_j| : W_j ≠ 0}`; `+∞` if no candidate qualifies.
pub fn knockoff_plus_threshold(w: &[f64], q: f64) -> f64 {
    let mut mags: Vec<f64> = w.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
    mags.sort_by(|a, b| a.total_cmp(b));
    mags.dedup();
    if mags.is_empty() {
        return f64::INFINITY;
    }
    // sorted positive parts and negative magnitudes for counting by bisection
    let mut pos: Vec<f64> = w.iter().filter(|v| **v > 0.0).copied().collect();
    let mut neg: Vec<f64> = w.iter().filter(|v| **v < 0.0).map(|v| -v).collect();
    pos.sort_by(|a, b| a.total_cmp(b));
    neg.sort_by(|a, b| a.total_cmp(b));
    let count_ge = |sorted: &[f64], t: f64| sorted.len() - sorted.partition_point(|v| *v < t);
    for &t in &mags {
        let num = 1 + count_ge(&neg, t);
        let den = count_ge(&pos, t).max(1);
        if (num as f64) <= q * den as f64 {
            return t;
        }
    }
    f64::INFINITY
}

/// `{j : W_j ≥ T}`
pub fn select(w: &[f64], threshold: f64) -> Vec<usize> {
    if threshold.is_infinite() {
        return Vec::new();
    }
    (0..w.len()).filter(|&j| w[j] >= threshold).collect()
}

/// Thresholds `w` at level `q` and scores the selection against `beta`.
pub fn evaluate(w: &[f64], beta: &[f64], q: f64) -> SelectionOutcome {
    let threshold = knockoff_plus_threshold(w, q);
    evaluate_at(w, beta, q, threshold)
}

/// Scores the selection `{W ≥ threshold}` against `beta`.
pub fn evaluate_at(w: &[f64], beta: &[f64], q: f64, threshold: f64) -> SelectionOutcome {
    assert_eq!(w.len(), beta.len(), "W and beta lengths differ");
    let selected = select(w, threshold);
    let k = beta.iter().filter(|b| **b != 0.0).count();
    let false_sel = selected.iter().filter(|&&j| beta[j] == 0.0).count();
    let true_sel = selected.len() - false_sel;
    let fdp = false_sel as f64 / selected.len().max(1) as f64;
    let power = if k == 0 { 0.0 } else { true_sel as f64 / k as f64 };
    let ratio_stat = if threshold.is_infinite() {
        0.0
    } else {
        let neg = (0..w.len())
            .filter(|&j| beta[j] == 0.0 && w[j] <= -threshold)
            .count();
        false_sel as f64 / (neg + 1) as f64
    };
    SelectionOutcome {
        threshold,
        selected,
        fdp,
        power,
        ratio_stat,
        q,
    }
}
