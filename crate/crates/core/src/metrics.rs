//! Structure-recovery metrics: precision, recall and F1 over directed edges
//! or over the skeleton.

use crate::graphs::GroundTruth;
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// What counts as an edge match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Ordered pairs; a reversed prediction is both a false positive and a
    /// false negative. Bidirected truth edges accept either orientation.
    Directed,
    /// Unordered pairs; orientation is ignored entirely.
    Skeleton,
}

/// Precision/recall/F1 with the underlying confusion counts.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub mode: EvalMode,
    /// Wall-clock of the run being evaluated, stamped by the caller.
    pub seconds: f64,
}

/// Column order of [`EvalReport::csv_row`].
pub const CSV_HEADER: &str = "method,d,degree,n,noise,seed,precision,recall,f1,seconds";

impl EvalReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report encoding cannot fail")
    }

    /// One aggregate-CSV row; the run metadata comes from the caller.
    pub fn csv_row(
        &self,
        method: &str,
        d: usize,
        degree: f64,
        n: usize,
        noise: &str,
        seed: u64,
    ) -> String {
        format!(
            "{method},{d},{degree},{n},{noise},{seed},{},{},{},{}",
            self.precision, self.recall, self.f1, self.seconds
        )
    }
}

fn rates(tp: usize, fp: usize, fn_: usize, tn: usize, mode: EvalMode) -> EvalReport {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EvalReport {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        mode,
        seconds: 0.0,
    }
}

/// Scores a predicted binary adjacency (entry ≠ 0 ⇒ directed edge i→j)
/// against ground truth.
pub fn evaluate(
    predicted: &DMatrix<f64>,
    truth: &GroundTruth,
    mode: EvalMode,
) -> Result<EvalReport> {
    let d = truth.node_count();
    if predicted.nrows() != d || predicted.ncols() != d {
        return Err(Error::Contract(format!(
            "predicted graph is {}x{} but truth has {d} nodes",
            predicted.nrows(),
            predicted.ncols()
        )));
    }

    match mode {
        EvalMode::Skeleton => {
            let mut pred = BTreeSet::new();
            for i in 0..d {
                for j in (i + 1)..d {
                    if predicted[(i, j)] != 0.0 || predicted[(j, i)] != 0.0 {
                        pred.insert((i, j));
                    }
                }
            }
            let truth_pairs = truth.skeleton_pairs();
            let tp = pred.intersection(&truth_pairs).count();
            let fp = pred.len() - tp;
            let fn_ = truth_pairs.len() - tp;
            let tn = d * (d - 1) / 2 - tp - fp - fn_;
            Ok(rates(tp, fp, fn_, tn, mode))
        }
        EvalMode::Directed => {
            let directed: BTreeSet<(usize, usize)> = truth.directed().iter().copied().collect();
            let bidirected: BTreeSet<(usize, usize)> = truth.bidirected().iter().copied().collect();
            let mut matched_bidirected = BTreeSet::new();
            let mut tp = 0;
            let mut fp = 0;
            let mut predictions = 0;
            for i in 0..d {
                for j in 0..d {
                    if i == j || predicted[(i, j)] == 0.0 {
                        continue;
                    }
                    predictions += 1;
                    let pair = (i.min(j), i.max(j));
                    if directed.contains(&(i, j)) {
                        tp += 1;
                    } else if bidirected.contains(&pair) && matched_bidirected.insert(pair) {
                        // Either orientation claims a bidirected edge once;
                        // the second orientation is an extra prediction.
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            let truth_count = directed.len() + bidirected.len();
            let fn_ = truth_count - (tp.min(truth_count));
            let tn = d * (d - 1) - predictions - fn_;
            Ok(rates(tp, fp, fn_, tn, mode))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adj(d: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(d, d);
        for &(i, j) in edges {
            m[(i, j)] = 1.0;
        }
        m
    }

    #[test]
    fn exact_prediction_scores_one() {
        let truth = GroundTruth::new(4, vec![(0, 1), (1, 2), (0, 3)], vec![], 0).unwrap();
        let pred = adj(4, &[(0, 1), (1, 2), (0, 3)]);
        for mode in [EvalMode::Directed, EvalMode::Skeleton] {
            let r = evaluate(&pred, &truth, mode).unwrap();
            assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
            assert_eq!(r.false_positives, 0);
            assert_eq!(r.false_negatives, 0);
        }
    }

    #[test]
    fn confusion_arithmetic_matches_definitions() {
        // TP=2, FP=1, FN=2 → P=2/3, R=1/2, F1=4/7.
        let truth = GroundTruth::new(5, vec![(0, 1), (1, 2), (2, 3), (3, 4)], vec![], 0).unwrap();
        let pred = adj(5, &[(0, 1), (1, 2), (0, 4)]);
        let r = evaluate(&pred, &truth, EvalMode::Directed).unwrap();
        assert_eq!(r.true_positives, 2);
        assert_eq!(r.false_positives, 1);
        assert_eq!(r.false_negatives, 2);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall - 0.5).abs() < 1e-15);
        assert!((r.f1 - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn empty_prediction_gets_zero_scores() {
        let truth = GroundTruth::new(3, vec![(0, 1)], vec![], 0).unwrap();
        let r = evaluate(&DMatrix::zeros(3, 3), &truth, EvalMode::Directed).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_truth_gives_full_recall() {
        let truth = GroundTruth::new(3, vec![], vec![], 0).unwrap();
        let r = evaluate(&DMatrix::zeros(3, 3), &truth, EvalMode::Skeleton).unwrap();
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn reversed_edge_is_both_fp_and_fn_in_directed_mode() {
        let truth = GroundTruth::new(3, vec![(0, 1)], vec![], 0).unwrap();
        let pred = adj(3, &[(1, 0)]);
        let r = evaluate(&pred, &truth, EvalMode::Directed).unwrap();
        assert_eq!(r.true_positives, 0);
        assert_eq!(r.false_positives, 1);
        assert_eq!(r.false_negatives, 1);
        // The same prediction is correct at the skeleton level.
        let s = evaluate(&pred, &truth, EvalMode::Skeleton).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn skeleton_mode_is_invariant_under_reorientation() {
        let truth = GroundTruth::new(4, vec![(0, 1), (2, 3)], vec![], 0).unwrap();
        let a = evaluate(&adj(4, &[(0, 1), (3, 2)]), &truth, EvalMode::Skeleton).unwrap();
        let b = evaluate(&adj(4, &[(1, 0), (2, 3)]), &truth, EvalMode::Skeleton).unwrap();
        assert_eq!(a.f1, b.f1);
        assert_eq!(a.true_positives, b.true_positives);
    }

    #[test]
    fn bidirected_truth_matches_either_orientation_once() {
        let truth = GroundTruth::new(3, vec![], vec![(0, 1)], 1).unwrap();
        let one = evaluate(&adj(3, &[(1, 0)]), &truth, EvalMode::Directed).unwrap();
        assert_eq!(one.true_positives, 1);
        assert_eq!(one.false_positives, 0);
        assert_eq!(one.f1, 1.0);
        // Both orientations predicted: one claims the edge, one is extra.
        let both = evaluate(&adj(3, &[(0, 1), (1, 0)]), &truth, EvalMode::Directed).unwrap();
        assert_eq!(both.true_positives, 1);
        assert_eq!(both.false_positives, 1);
    }

    #[test]
    fn f1_is_exactly_the_harmonic_mean() {
        let truth = GroundTruth::new(6, vec![(0, 1), (1, 2), (2, 3)], vec![], 0).unwrap();
        let pred = adj(6, &[(0, 1), (4, 5), (5, 4)]);
        let r = evaluate(&pred, &truth, EvalMode::Directed).unwrap();
        let expect = 2.0 * r.precision * r.recall / (r.precision + r.recall);
        assert_eq!(r.f1, expect);
        assert!(r.f1 <= r.precision.max(r.recall));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let truth = GroundTruth::new(4, vec![], vec![], 0).unwrap();
        assert!(evaluate(&DMatrix::zeros(3, 3), &truth, EvalMode::Directed).is_err());
    }

    #[test]
    fn csv_row_layout() {
        let truth = GroundTruth::new(3, vec![(0, 1)], vec![], 0).unwrap();
        let mut r = evaluate(&adj(3, &[(0, 1)]), &truth, EvalMode::Directed).unwrap();
        r.seconds = 0.25;
        assert_eq!(
            r.csv_row("alvgl", 3, 1.0, 100, "gaussian", 7),
            "alvgl,3,1,100,gaussian,7,1,1,1,0.25"
        );
        assert_eq!(
            CSV_HEADER.split(',').count(),
            r.csv_row("m", 1, 1.0, 1, "g", 1).split(',').count()
        );
    }
}
