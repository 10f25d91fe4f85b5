use serde::{Deserialize, Serialize};

use super::network::bce_loss;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    /// Counts with label 1 as the positive (malware) class; a score at or
    /// above `threshold` predicts positive.
    pub fn from_scores(scores: &[f64], labels: &[f64], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y == 1.0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Area under the ROC curve by trapezoidal integration over every distinct
/// score threshold. 0 when either class is missing.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return 0.0;
    }
    let mut pairs: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| (s, y == 1.0))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub fpr: f64,
    pub loss: f64,
    pub confusion: Confusion,
}

pub fn compute_metrics(scores: &[f64], labels: &[f64], threshold: f64) -> Metrics {
    let c = Confusion::from_scores(scores, labels, threshold);
    Metrics {
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        auc: roc_auc(scores, labels),
        fpr: c.fpr(),
        loss: bce_loss(scores, labels),
        confusion: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_one_one_nine() {
        let c = Confusion {
            tp: 9,
            fp: 1,
            tn: 9,
            fn_: 1,
        };
        assert_eq!(c.accuracy(), 0.9);
        assert_eq!(c.precision(), 0.9);
        assert_eq!(c.recall(), 0.9);
        assert_eq!(c.fpr(), 0.1);
        assert!((c.f1() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_denominators() {
        let c = Confusion::default();
        assert_eq!(
            (c.accuracy(), c.precision(), c.recall(), c.fpr(), c.f1()),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(roc_auc(&[0.2, 0.9], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn separated_scores() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.1], &[1.0, 1.0, 0.0, 0.0]), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[1.0, 1.0, 0.0, 0.0]), 0.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
    }

    #[test]
    fn threshold_is_inclusive() {
        let c = Confusion::from_scores(&[0.5, 0.49], &[1.0, 0.0], 0.5);
        assert_eq!((c.tp, c.tn), (1, 1));
    }
}
