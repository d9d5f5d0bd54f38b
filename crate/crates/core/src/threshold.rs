//! Supervised threshold selection by minimum weighted Gini impurity.
//!
//! For a labeled validation set `D` the threshold `τ` splits
//! `D_1 = {s ≤ τ}` from `D_2 = {s > τ}`; the chosen `τ*` minimizes
//! `|D_1|/|D|·Gini(D_1) + |D_2|/|D|·Gini(D_2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 - p₊² - p₋²` from counts; an empty set has impurity 0.
pub fn gini_counts(positives: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p_pos = positives as f64 / total as f64;
    let p_neg = (total - positives) as f64 / total as f64;
    1.0 - (p_pos * p_pos + p_neg * p_neg)
}

pub fn gini(labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    gini_counts(pos, labels.len())
}

/// Weighted impurity of a two-way partition given per-side `(positives, size)`.
pub fn split_impurity(left: (usize, usize), right: (usize, usize)) -> f64 {
    let n = (left.1 + right.1) as f64;
    left.1 as f64 / n * gini_counts(left.0, left.1) + right.1 as f64 / n * gini_counts(right.0, right.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub tau_star: f64,
    pub objective: f64,
    pub candidates_evaluated: usize,
    /// `(|D_1|, |D_2|)` at `τ*`.
    pub partition_sizes: (usize, usize),
    /// Set when the data has a single class or a single distinct score.
    pub degenerate: bool,
}

/// Candidate thresholds for ascending distinct scores: a sentinel below the
/// minimum, the midpoint of every consecutive pair, and a sentinel above the
/// maximum. A midpoint that rounds onto one of its neighbors is replaced by
/// the lower neighbor so that each candidate induces the intended split.
pub fn candidate_thresholds(distinct_sorted: &[f64]) -> Vec<f64> {
    let Some((&first, &last)) = distinct_sorted.first().zip(distinct_sorted.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(distinct_sorted.len() + 1);
    out.push(first - 1.0);
    for w in distinct_sorted.windows(2) {
        let mid = w[0] / 2.0 + w[1] / 2.0;
        out.push(if mid > w[0] && mid < w[1] { mid } else { w[0] });
    }
    out.push(last + 1.0);
    out
}

/// Sorted single sweep over distinct scores with running label counts.
pub fn fit_threshold(data: &[(f64, u8)]) -> Result<ThresholdReport> {
    if data.len() < 2 {
        return Err(Error::Precondition(
            "threshold fitting needs at least two scored edges".into(),
        ));
    }
    if let Some((s, _)) = data.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::Precondition(format!("non-finite score {s}")));
    }
    if let Some((_, l)) = data.iter().find(|(_, l)| *l > 1) {
        return Err(Error::Precondition(format!("label {l} is not 0 or 1")));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // (score, positives, count) per distinct score.
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &(s, l) in &sorted {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                g.1 += l as usize;
                g.2 += 1;
            }
            _ => groups.push((s, l as usize, 1)),
        }
    }
    let distinct: Vec<f64> = groups.iter().map(|g| g.0).collect();
    let candidates = candidate_thresholds(&distinct);
    let n = sorted.len();
    let total_pos: usize = groups.iter().map(|g| g.1).sum();

    let (mut left_pos, mut left_n) = (0usize, 0usize);
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (k, _) in candidates.iter().enumerate() {
        if k > 0 {
            let g = groups[k - 1];
            left_pos += g.1;
            left_n += g.2;
        }
        let obj = split_impurity((left_pos, left_n), (total_pos - left_pos, n - left_n));
        if obj < best.0 {
            best = (obj, k, left_n);
        }
    }
    let degenerate = groups.len() == 1 || total_pos == 0 || total_pos == n;
    Ok(ThresholdReport {
        tau_star: candidates[best.1],
        objective: best.0,
        candidates_evaluated: candidates.len(),
        partition_sizes: (best.2, n - best.2),
        degenerate,
    })
}

/// Slow reference: recounts both sides from scratch for every candidate.
/// Returns `(tau, objective)` with the same tie-breaking as [`fit_threshold`].
pub fn brute_force_threshold(data: &[(f64, u8)]) -> Option<(f64, f64)> {
    let mut distinct: Vec<f64> = data.iter().map(|d| d.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut best: Option<(f64, f64)> = None;
    for tau in candidate_thresholds(&distinct) {
        let (mut left, mut right) = ((0, 0), (0, 0));
        for &(s, l) in data {
            let side = if s <= tau { &mut left } else { &mut right };
            side.0 += l as usize;
            side.1 += 1;
        }
        let obj = split_impurity(left, right);
        if best.is_none_or(|b| obj < b.1) {
            best = Some((tau, obj));
        }
    }
    best
}

/// 1 for scores strictly above `tau`.
pub fn classify(scores: &[f64], tau: f64) -> Vec<u8> {
    scores.iter().map(|&s| (s > tau) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[0, 0, 0, 0]), 0.0);
        assert_eq!(gini(&[0, 1, 0, 1]), 0.5);
        assert_eq!(gini(&[1, 0, 0, 0]), 1.0 - (0.0625 + 0.5625));
        assert_eq!(gini(&[]), 0.0);
    }

    #[test]
    fn separable_set() {
        let d = [(0.1, 0), (0.2, 0), (0.8, 1), (0.9, 1)];
        let r = fit_threshold(&d).unwrap();
        assert!((r.tau_star - 0.5).abs() < 1e-15);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.partition_sizes, (2, 2));
        assert!(!r.degenerate);
        assert_eq!(r.candidates_evaluated, 5);
    }

    #[test]
    fn interleaved_set_matches_enumeration() {
        // Splits after 0,1,2,3,4 items; impurities computed by hand:
        // k=0: 0.5; k=1: 3/4·(1-(1/9+4/9)) = 1/3; k=2: 0.5;
        // k=3: 3/4·(1-(4/9+1/9)) = 1/3; k=4: 0.5. Smallest τ wins the tie.
        let d = [(0.1, 1), (0.2, 0), (0.3, 1), (0.4, 0)];
        let r = fit_threshold(&d).unwrap();
        assert!((r.objective - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.tau_star - 0.15).abs() < 1e-15);
        assert_eq!(r.partition_sizes, (1, 3));
    }

    #[test]
    fn single_class_is_degenerate() {
        let d = [(0.3, 0), (0.7, 0), (0.5, 0)];
        let r = fit_threshold(&d).unwrap();
        assert_eq!(r.objective, 0.0);
        assert!(r.degenerate);
        assert!(r.tau_star < 0.3);
    }

    #[test]
    fn identical_scores_are_degenerate() {
        let d = [(0.4, 0), (0.4, 1), (0.4, 1)];
        let r = fit_threshold(&d).unwrap();
        assert!(r.degenerate);
        assert!(r.tau_star < 0.4);
    }

    #[test]
    fn too_small_input() {
        assert!(fit_threshold(&[(0.1, 0)]).is_err());
        assert!(fit_threshold(&[]).is_err());
    }

    #[test]
    fn classify_boundary() {
        assert_eq!(classify(&[0.5, 0.5 + 1e-12, 0.1], 0.5), vec![0, 1, 0]);
        assert!(classify(&[], 0.5).is_empty());
    }

    #[test]
    fn adjacent_floats_get_a_valid_candidate() {
        let a = 0.3f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let c = candidate_thresholds(&[a, b]);
        assert_eq!(c[1], a);
    }
}
