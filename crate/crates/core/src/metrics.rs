//! Ranking and thresholded detection metrics.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::threshold::classify;

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by score (ascending), with tie groups as index ranges.
fn tie_groups(scores: &[f64], order: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || scores[order[i]] != scores[order[start]] {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Mann-Whitney ROC-AUC with half credit for ties.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC-AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    for g in tie_groups(scores, &order) {
        // Average 1-based rank of the group.
        let rank = (g.start + 1 + g.end) as f64 / 2.0;
        let group_pos = order[g].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += rank * group_pos as f64;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Non-interpolated average precision; tied scores enter as one step.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for g in tie_groups(scores, &order) {
        let group_pos = order[g.clone()].iter().filter(|&&i| labels[i] == 1).count();
        tp += group_pos;
        fp += g.len() - group_pos;
        if group_pos > 0 {
            let recall = tp as f64 / pos as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(pred: &[u8], labels: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &l) in pred.iter().zip(labels) {
            match (p, l) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn f1(&self) -> f64 {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    pub fn balanced_accuracy(&self) -> f64 {
        (ratio(self.tp, self.tp + self.fn_) + ratio(self.tn, self.tn + self.fp)) / 2.0
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Absent when the labels hold a single class.
    pub roc_auc: Option<f64>,
    /// Absent when there are no positives.
    pub ap: Option<f64>,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub tau: f64,
    pub confusion: Confusion,
    pub n_positive: usize,
    pub n_negative: usize,
}

pub fn thresholded_metrics(scores: &[f64], labels: &[u8], tau: f64) -> Result<EvalResult> {
    let (n_positive, n_negative) = check(scores, labels)?;
    let confusion = Confusion::from_predictions(&classify(scores, tau), labels);
    Ok(EvalResult {
        roc_auc: roc_auc(scores, labels).ok(),
        ap: average_precision(scores, labels).ok(),
        f1: confusion.f1(),
        balanced_accuracy: confusion.balanced_accuracy(),
        tau,
        confusion,
        n_positive,
        n_negative,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucSlice {
    pub window_index: usize,
    /// `None` when the window holds a single class.
    pub auc: Option<f64>,
    pub n_edges: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSlicedAuc {
    pub slices: Vec<AucSlice>,
}

impl TimeSlicedAuc {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_index,auc,n_edges\n");
        for s in &self.slices {
            let auc = s.auc.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", s.window_index, auc, s.n_edges));
        }
        out
    }
}

/// ROC-AUC over `n_slices` contiguous windows of (nearly) equal edge count.
pub fn time_sliced_auc(scores: &[f64], labels: &[u8], n_slices: usize) -> Result<TimeSlicedAuc> {
    check(scores, labels)?;
    if n_slices == 0 {
        return Err(Error::Config("n_slices must be >= 1".into()));
    }
    let n = scores.len();
    let slices = (0..n_slices)
        .map(|k| {
            let (a, b) = (k * n / n_slices, (k + 1) * n / n_slices);
            AucSlice {
                window_index: k,
                auc: roc_auc(&scores[a..b], &labels[a..b]).ok(),
                n_edges: b - a,
            }
        })
        .collect();
    Ok(TimeSlicedAuc { slices })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd {
                mean: f64::NAN,
                std: 0.0,
                n: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        MeanStd { mean, std, n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSummary {
    pub fraction: f64,
    pub repeats: usize,
    pub roc_auc: MeanStd,
    pub ap: MeanStd,
    pub f1: Option<MeanStd>,
    pub balanced_accuracy: Option<MeanStd>,
    /// Repeats whose subsample had a single class (AUC skipped).
    pub skipped: usize,
}

/// Metric spread over `repeats` uniform subsamples without replacement.
/// F1 and balanced accuracy are included when `tau` is given.
pub fn subsample_eval(
    scores: &[f64],
    labels: &[u8],
    tau: Option<f64>,
    fraction: f64,
    repeats: usize,
    seed: u64,
) -> Result<SubsampleSummary> {
    check(scores, labels)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} not in (0,1]")));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let n = scores.len();
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n.max(1));
    let (mut aucs, mut aps, mut f1s, mut baccs) = (vec![], vec![], vec![], vec![]);
    let mut skipped = 0;
    for rep in 0..repeats {
        let mut idx = index::sample(&mut rng::derive(seed, rep as u64), n, k).into_vec();
        idx.sort_unstable();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        match roc_auc(&s, &l) {
            Ok(a) => aucs.push(a),
            Err(_) => skipped += 1,
        }
        if let Ok(a) = average_precision(&s, &l) {
            aps.push(a);
        }
        if let Some(t) = tau {
            let c = Confusion::from_predictions(&classify(&s, t), &l);
            f1s.push(c.f1());
            baccs.push(c.balanced_accuracy());
        }
    }
    Ok(SubsampleSummary {
        fraction,
        repeats,
        roc_auc: MeanStd::of(&aucs),
        ap: MeanStd::of(&aps),
        f1: tau.map(|_| MeanStd::of(&f1s)),
        balanced_accuracy: tau.map(|_| MeanStd::of(&baccs)),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_inverted_auc() {
        let labels = [0u8, 1, 0, 1, 1];
        let s: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        assert_eq!(roc_auc(&s, &labels).unwrap(), 1.0);
        let inv: Vec<f64> = labels.iter().map(|&l| 1.0 - l as f64).collect();
        assert_eq!(roc_auc(&inv, &labels).unwrap(), 0.0);
    }

    #[test]
    fn all_tied_scores_give_half() {
        assert_eq!(roc_auc(&[0.3; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_auc_is_undefined() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(average_precision(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn ap_of_perfect_ranking() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(),
            1.0
        );
    }

    #[test]
    fn ap_of_last_ranked_positive() {
        for n in [2usize, 5, 17] {
            let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
            let mut labels = vec![0u8; n];
            labels[n - 1] = 1;
            let ap = average_precision(&scores, &labels).unwrap();
            assert!((ap - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn confusion_arithmetic() {
        let c = Confusion {
            tp: 3,
            fp: 1,
            fn_: 1,
            tn: 5,
        };
        assert!((c.f1() - 0.75).abs() < 1e-15);
        assert!((c.balanced_accuracy() - (0.75 + 5.0 / 6.0) / 2.0).abs() < 1e-15);
        assert!((c.balanced_accuracy() - 0.7917).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_silent_predictors() {
        let labels = [1u8, 0, 1, 0];
        let r = thresholded_metrics(&[0.9, 0.1, 0.8, 0.2], &labels, 0.5).unwrap();
        assert_eq!((r.f1, r.balanced_accuracy), (1.0, 1.0));
        let r = thresholded_metrics(&[0.4, 0.1, 0.3, 0.2], &labels, 0.5).unwrap();
        assert_eq!((r.f1, r.balanced_accuracy), (0.0, 0.5));
        assert_eq!(r.confusion.tp + r.confusion.fn_, r.n_positive);
        assert_eq!(r.confusion.tn + r.confusion.fp, r.n_negative);
    }

    #[test]
    fn one_slice_equals_global_auc() {
        let s = [0.1, 0.9, 0.4, 0.7, 0.3, 0.35];
        let l = [0u8, 1, 0, 1, 1, 0];
        let t = time_sliced_auc(&s, &l, 1).unwrap();
        assert_eq!(t.slices.len(), 1);
        assert_eq!(t.slices[0].auc, Some(roc_auc(&s, &l).unwrap()));
        assert_eq!(t.slices[0].n_edges, 6);
    }

    #[test]
    fn anomaly_free_slice_is_absent() {
        let s = [0.1, 0.2, 0.3, 0.4, 0.9, 0.8];
        let l = [0u8, 0, 0, 0, 1, 0];
        let t = time_sliced_auc(&s, &l, 3).unwrap();
        assert_eq!(t.slices[0].auc, None);
        assert_eq!(t.slices[1].auc, None);
        assert!(t.slices[2].auc.is_some());
        assert_eq!(t.slices.iter().map(|s| s.n_edges).sum::<usize>(), 6);
        assert_eq!(t.to_csv().lines().count(), 4);
    }

    #[test]
    fn full_fraction_has_zero_spread() {
        let s = [0.1, 0.9, 0.4, 0.7, 0.3, 0.35];
        let l = [0u8, 1, 0, 1, 1, 0];
        let r = subsample_eval(&s, &l, Some(0.5), 1.0, 5, 3).unwrap();
        assert_eq!(r.roc_auc.std, 0.0);
        assert_eq!(r.roc_auc.mean, roc_auc(&s, &l).unwrap());
        let r = subsample_eval(&s, &l, None, 0.5, 1, 3).unwrap();
        assert_eq!(r.roc_auc.std, 0.0);
        assert!(r.f1.is_none());
    }

    #[test]
    fn single_class_subsamples_are_counted() {
        let s = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let l = [0u8, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        let r = subsample_eval(&s, &l, None, 0.1, 20, 1).unwrap();
        assert!(r.skipped > 0);
        assert_eq!(r.skipped + r.roc_auc.n, 20);
    }
}
