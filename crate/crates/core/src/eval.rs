//! Localisation and detection metrics.
//!
//! Ratios with an empty denominator follow one convention throughout: when
//! there are no ground-truth positives and no predicted positives every
//! metric is 1 (a correct "nothing tampered" call); otherwise an empty
//! denominator yields 0.

use std::ops::{Add, AddAssign};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Quantity;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Pixel-wise confusion counts of two binary masks of equal shape.
pub fn confusion(pred: &Grid<u8>, gt: &Grid<u8>) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            _ => return Err(Error::NotBinary(i)),
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub iou: T,
}

fn ratio<T: Quantity>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

/// Precision, recall, F1 and IoU of a confusion table.
pub fn metrics<T: Quantity>(c: &ConfusionCounts) -> Metrics<T> {
    if c.tp + c.fp + c.fn_ == 0 {
        return Metrics {
            precision: T::one(),
            recall: T::one(),
            f1: T::one(),
            iou: T::one(),
        };
    }
    let precision: T = ratio(c.tp, c.tp + c.fp);
    let recall: T = ratio(c.tp, c.tp + c.fn_);
    let sum = precision.clone() + recall.clone();
    let f1 = if sum == T::zero() {
        T::zero()
    } else {
        T::from_count(2) * precision.clone() * recall.clone() / sum
    };
    Metrics {
        precision,
        recall,
        f1,
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
    }
}

/// Sample-level confusion of `score ≥ threshold` against labels.
pub fn detection_counts(scored: &[(f64, bool)], threshold: f64) -> ConfusionCounts {
    scored
        .iter()
        .map(|&(s, tampered)| {
            let flagged = s >= threshold;
            ConfusionCounts {
                tp: u64::from(flagged && tampered),
                fp: u64::from(flagged && !tampered),
                fn_: u64::from(!flagged && tampered),
                tn: u64::from(!flagged && !tampered),
            }
        })
        .sum()
}

/// Rank-based area under the ROC curve: the probability that a tampered
/// sample outscores an authentic one, ties counting one half.
pub fn detection_auc(scores: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));

    // Sum of 1-based mid-ranks of the positives.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mid * order[i..=j].iter().filter(|&&k| scores[k].1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn identical_masks() {
        let gt = Grid::from_fn(10, 10, |r, c| u8::from(r == 0 && c < 10));
        let c = confusion(&gt, &gt).unwrap();
        assert_eq!(c, counts(10, 0, 0, 90));
    }

    #[test]
    fn complement_masks() {
        let gt = Grid::from_fn(8, 8, |r, c| u8::from((r * c) % 3 == 0));
        let inv = gt.map(|v| 1 - v);
        let c = confusion(&inv, &gt).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert_eq!(c.total(), 64);
    }

    #[test]
    fn confusion_errors() {
        let a = Grid::filled(2, 2, 0u8);
        let b = Grid::filled(2, 3, 0u8);
        assert!(matches!(confusion(&a, &b), Err(Error::ShapeMismatch(_))));
        let bad = Grid::new(2, 2, vec![0u8, 2, 0, 0]).unwrap();
        assert!(matches!(confusion(&bad, &a), Err(Error::NotBinary(1))));
    }

    #[test]
    fn metric_examples() {
        let m: Metrics<f64> = metrics(&counts(5, 0, 0, 95));
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (1.0, 1.0, 1.0, 1.0));

        let m: Metrics<f64> = metrics(&counts(0, 0, 0, 100));
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (1.0, 1.0, 1.0, 1.0));

        let m: Metrics<Ratio<i64>> = metrics(&counts(6, 2, 4, 0));
        assert_eq!(m.precision, Ratio::new(3, 4));
        assert_eq!(m.recall, Ratio::new(3, 5));
        assert_eq!(m.f1, Ratio::new(2, 3));
        assert_eq!(m.iou, Ratio::new(1, 2));
        let one = Ratio::from_integer(1);
        assert_eq!(m.f1, Ratio::from_integer(2) * m.iou / (one + m.iou));
    }

    #[test]
    fn missed_positives_score_zero() {
        let m: Metrics<f64> = metrics(&counts(0, 0, 7, 10));
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (0.0, 0.0, 0.0, 0.0));
        let m: Metrics<f64> = metrics(&counts(0, 3, 0, 10));
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn auc_examples() {
        let sep = [(0.1, false), (0.2, false), (0.8, true), (0.9, true)];
        assert_eq!(detection_auc(&sep).unwrap(), 1.0);
        let tied = [(0.5, false), (0.5, true), (0.5, false), (0.5, true)];
        assert_eq!(detection_auc(&tied).unwrap(), 0.5);
        assert!(matches!(detection_auc(&[(0.3, true)]), Err(Error::SingleClass)));
    }

    #[test]
    fn detection_counts_threshold_inclusive() {
        let c = detection_counts(&[(0.5, true), (0.49, true), (0.5, false), (0.1, false)], 0.5);
        assert_eq!(c, counts(1, 1, 1, 1));
    }
}
