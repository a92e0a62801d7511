use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DetectorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Fraud,
    NonFraud,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Fraud => "fraud",
            Verdict::NonFraud => "non-fraud",
        })
    }
}

/// A loss at or above the threshold is fraud.
pub fn classify(scores: &[f64], threshold: f64) -> Vec<Verdict> {
    scores
        .iter()
        .map(|&s| {
            if s >= threshold {
                Verdict::Fraud
            } else {
                Verdict::NonFraud
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Confusion {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), DetectorError> {
    if a == b {
        Ok(())
    } else {
        Err(DetectorError::LengthMismatch { scores: a, labels: b })
    }
}

pub fn confusion_and_rates(verdicts: &[Verdict], labels: &[bool]) -> Result<Confusion, DetectorError> {
    check_lengths(verdicts.len(), labels.len())?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (v, &l) in verdicts.iter().zip(labels) {
        match (v, l) {
            (Verdict::Fraud, true) => tp += 1,
            (Verdict::Fraud, false) => fp += 1,
            (Verdict::NonFraud, false) => tn += 1,
            (Verdict::NonFraud, true) => fn_ += 1,
        }
    }
    Ok(Confusion::from_counts(tp, fp, tn, fn_))
}

/// Score/label pairs sorted by score, with NaN rejected.
fn sorted_pairs(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, bool)>, DetectorError> {
    check_lengths(scores.len(), labels.len())?;
    if let Some(&bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(DetectorError::NonFiniteScore(bad));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    Ok(pairs)
}

/// Groups of equal scores as `(score, positives, negatives)`, ascending.
fn tie_groups(pairs: &[(f64, bool)]) -> Vec<(f64, usize, usize)> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &(s, l) in pairs {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if l {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((s, usize::from(l), usize::from(!l))),
        }
    }
    groups
}

/// Outcome of the F1 threshold search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub threshold: f64,
    pub f1: f64,
    /// `(threshold, F1)` for every candidate, ascending in threshold.
    pub curve: Vec<(f64, f64)>,
}

/// Maximizes F1 over thresholds: the lowest score, every midpoint between
/// consecutive distinct scores, and one value above the highest score.
/// Ties go to the larger threshold.
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdSearch, DetectorError> {
    let pairs = sorted_pairs(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(DetectorError::DegenerateLabels);
    }
    let groups = tie_groups(&pairs);
    let m = groups.len();
    let mut candidates = Vec::with_capacity(m + 1);
    candidates.push(groups[0].0);
    for w in groups.windows(2) {
        candidates.push(w[0].0 + (w[1].0 - w[0].0) / 2.0);
    }
    let top = groups[m - 1].0;
    let step = if m >= 2 {
        (top - groups[m - 2].0) / 2.0
    } else {
        top.abs().max(1.0)
    };
    candidates.push(top + step);

    // Candidate i predicts fraud for groups i.. .
    let (mut tp, mut fp) = (positives, labels.len() - positives);
    let mut curve = Vec::with_capacity(candidates.len());
    let mut best = (candidates[0], f64::NEG_INFINITY);
    for (i, &thr) in candidates.iter().enumerate() {
        if i > 0 {
            tp -= groups[i - 1].1;
            fp -= groups[i - 1].2;
        }
        let f1 = Confusion::from_counts(tp, fp, 0, positives - tp).f1;
        curve.push((thr, f1));
        if f1 >= best.1 {
            best = (thr, f1);
        }
    }
    Ok(ThresholdSearch {
        threshold: best.0,
        f1: best.1,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC points at every distinct score and the trapezoid area under them.
pub fn roc_curve_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, DetectorError> {
    let pairs = sorted_pairs(scores, labels)?;
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(DetectorError::DegenerateLabels);
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    for &(_, gp, gn) in tie_groups(&pairs).iter().rev() {
        let (x0, y0) = (fp as f64 / n as f64, tp as f64 / p as f64);
        tp += gp;
        fp += gn;
        let (x1, y1) = (fp as f64 / n as f64, tp as f64 / p as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` swept from the highest score down.
    pub points: Vec<(f64, f64)>,
    /// Average precision.
    pub auc: f64,
}

/// Precision and recall at every distinct score; the area is the step-wise
/// average precision `Σ (R_i − R_{i−1}) · P_i`.
pub fn pr_curve_auc(scores: &[f64], labels: &[bool]) -> Result<PrCurve, DetectorError> {
    let pairs = sorted_pairs(scores, labels)?;
    let p = labels.iter().filter(|&&l| l).count();
    if p == 0 {
        return Err(DetectorError::NoPositives);
    }
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut auc = 0.0;
    for &(_, gp, gn) in tie_groups(&pairs).iter().rev() {
        tp += gp;
        fp += gn;
        let recall = tp as f64 / p as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(PrCurve { points, auc })
}
