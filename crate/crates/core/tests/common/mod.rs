//! Slow reference implementations used as test oracles. They recompute
//! everything from raw inputs and share no code with the library paths they
//! check.

#![allow(dead_code)]

use edgehst::hst::{HalfSpaceForest, HstTree};

/// Axis-aligned half-open box `[lo, hi)`.
#[derive(Clone, Debug)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| lo <= v && v < hi)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// Leaf regions of a tree in left-to-right order, derived from the split
/// table by interval bookkeeping alone.
pub fn leaf_regions(tree: &HstTree) -> Vec<Region> {
    fn walk(tree: &HstTree, node: usize, region: Region, out: &mut Vec<Region>) {
        if node >= tree.split_dim.len() {
            out.push(region);
            return;
        }
        let q = tree.split_dim[node] as usize;
        let v = tree.split_value[node];
        let mut left = region.clone();
        left.hi[q] = v;
        let mut right = region;
        right.lo[q] = v;
        walk(tree, 2 * node + 1, left, out);
        walk(tree, 2 * node + 2, right, out);
    }
    let mut out = Vec::new();
    let root = Region {
        lo: tree.workspace_min.clone(),
        hi: tree.workspace_max.clone(),
    };
    walk(tree, 0, root, &mut out);
    out
}

pub fn clamp_point(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) })
        .collect()
}

/// Per-tree leaf mass for `x` recounted from the raw point log, and the
/// resulting anomaly score.
pub fn hst_oracle(forest: &HalfSpaceForest, log: &[Vec<f64>], x: &[f64]) -> (Vec<u64>, f64) {
    let x = clamp_point(x);
    let log: Vec<Vec<f64>> = log.iter().map(|p| clamp_point(p)).collect();
    let h = forest.params.height as i32;
    let z = forest.params.window as f64 * 2f64.powi(h);
    let mut masses = Vec::new();
    let mut sum = 0.0;
    for tree in &forest.trees {
        let regions = leaf_regions(tree);
        let holders: Vec<&Region> = regions.iter().filter(|r| r.contains(&x)).collect();
        assert_eq!(holders.len(), 1, "leaf regions must tile the workspace");
        let count = log.iter().filter(|p| holders[0].contains(p)).count() as u64;
        masses.push(count);
        sum += count as f64 * 2f64.powi(h) / z;
    }
    (masses, 1.0 - sum / forest.trees.len() as f64)
}

/// Gini impurity of a label multiset.
pub fn gini_oracle(labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let n = labels.len() as f64;
    let p = labels.iter().filter(|&&l| l == 1).count() as f64 / n;
    let q = labels.iter().filter(|&&l| l == 0).count() as f64 / n;
    1.0 - (p * p + q * q)
}

/// Exhaustive threshold search: every midpoint of consecutive distinct
/// scores plus one threshold below and one above all scores. Each candidate
/// re-partitions the data from scratch. Returns `(tau, objective)` of the
/// first minimum in ascending threshold order.
pub fn threshold_oracle(data: &[(f64, u8)]) -> (f64, f64) {
    let mut distinct: Vec<f64> = data.iter().map(|d| d.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut cands = vec![distinct[0] - 1.0];
    for w in distinct.windows(2) {
        cands.push(w[0] / 2.0 + w[1] / 2.0);
    }
    cands.push(distinct[distinct.len() - 1] + 1.0);
    let n = data.len() as f64;
    let mut best = (f64::NAN, f64::INFINITY);
    for tau in cands {
        let left: Vec<u8> = data.iter().filter(|d| d.0 <= tau).map(|d| d.1).collect();
        let right: Vec<u8> = data.iter().filter(|d| d.0 > tau).map(|d| d.1).collect();
        let obj = left.len() as f64 / n * gini_oracle(&left) + right.len() as f64 / n * gini_oracle(&right);
        if obj < best.1 {
            best = (tau, obj);
        }
    }
    best
}

/// ROC-AUC by comparing every positive with every negative.
pub fn auc_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let (mut p, mut n) = (0usize, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            p += 1;
        } else {
            n += 1;
        }
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj == 0 {
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / (p as f64 * n as f64)
}

/// Average precision by enumerating every distinct threshold from the top
/// and counting hits from scratch at each.
pub fn ap_enumeration(scores: &[f64], labels: &[u8]) -> f64 {
    let total_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let at_t = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| s == t && l == 1)
            .count();
        if at_t == 0 {
            continue;
        }
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l == 1).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l == 0).count() as f64;
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    ap
}

/// Lower median.
pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[(v.len() - 1) / 2]
}
