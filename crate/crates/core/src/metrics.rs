//! Predictive, calibration and selective-prediction metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DocPrediction, LabelSpace};

pub const DEFAULT_BINS: usize = 10;

/// Ground truth keyed by `doc_id`.
pub type Labels = BTreeMap<String, usize>;

/// Per-prediction `(confidence, correct)` in input order.
fn outcomes<'a>(
    predictions: &'a [DocPrediction],
    labels: &Labels,
) -> Result<Vec<(&'a DocPrediction, bool)>> {
    if predictions.is_empty() {
        return Err(Error::NoDocuments);
    }
    predictions
        .iter()
        .map(|p| {
            labels
                .get(&p.doc_id)
                .map(|&y| (p, p.label == y))
                .ok_or_else(|| Error::MissingLabel {
                    doc_id: p.doc_id.clone(),
                })
        })
        .collect()
}

pub fn accuracy(predictions: &[DocPrediction], labels: &Labels) -> Result<f64> {
    let outcomes = outcomes(predictions, labels)?;
    let correct = outcomes.iter().filter(|(_, ok)| *ok).count();
    Ok(correct as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub weighted: f64,
    pub macro_avg: f64,
    /// F1 of every class in the space, 0 where precision + recall is 0.
    pub per_class: Vec<f64>,
}

/// One-vs-rest F1 per class. The macro mean runs over classes that occur in
/// the ground truth; the weighted mean weights each class by its support.
pub fn f1_scores(
    predictions: &[DocPrediction],
    labels: &Labels,
    space: &LabelSpace,
) -> Result<F1Scores> {
    let outcomes = outcomes(predictions, labels)?;
    let n_classes = space.size();
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for (p, _) in &outcomes {
        let y = labels[&p.doc_id];
        if y >= n_classes || p.label >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "document {:?}: class id outside a space of {n_classes} classes",
                p.doc_id
            )));
        }
        support[y] += 1;
        if p.label == y {
            tp[y] += 1;
        } else {
            fp[p.label] += 1;
        }
    }
    let per_class: Vec<f64> = (0..n_classes)
        .map(|k| {
            let fn_ = support[k] - tp[k];
            let denom = 2 * tp[k] + fp[k] + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[k] as f64 / denom as f64
            }
        })
        .collect();
    let present: Vec<usize> = (0..n_classes).filter(|&k| support[k] > 0).collect();
    let macro_avg = present.iter().map(|&k| per_class[k]).sum::<f64>() / present.len() as f64;
    let total = outcomes.len() as f64;
    let weighted = present
        .iter()
        .map(|&k| per_class[k] * support[k] as f64)
        .sum::<f64>()
        / total;
    Ok(F1Scores {
        weighted,
        macro_avg,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    /// 0 for empty bins.
    pub mean_confidence: f64,
    /// 0 for empty bins.
    pub empirical_accuracy: f64,
}

/// Expected calibration error over `n_bins` equal-width confidence bins
/// `[i/n, (i+1)/n)`, the last bin closed at 1.
///
/// Returns the ECE and the full bin table, empty bins included.
pub fn ece(
    predictions: &[DocPrediction],
    labels: &Labels,
    n_bins: usize,
) -> Result<(f64, Vec<ReliabilityBin>)> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    let outcomes = outcomes(predictions, labels)?;
    let mut counts = vec![0usize; n_bins];
    let mut conf_sums = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (p, correct) in &outcomes {
        let c = p.confidence;
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidArgument(format!(
                "document {:?}: confidence {c} outside [0, 1]",
                p.doc_id
            )));
        }
        let b = ((c * n_bins as f64) as usize).min(n_bins - 1);
        counts[b] += 1;
        conf_sums[b] += c;
        hits[b] += usize::from(*correct);
    }
    let total = outcomes.len() as f64;
    let mut ece = 0.0;
    let bins = (0..n_bins)
        .map(|b| {
            let (mean_confidence, empirical_accuracy) = if counts[b] == 0 {
                (0.0, 0.0)
            } else {
                let n = counts[b] as f64;
                (conf_sums[b] / n, hits[b] as f64 / n)
            };
            if counts[b] > 0 {
                ece += counts[b] as f64 / total * (empirical_accuracy - mean_confidence).abs();
            }
            ReliabilityBin {
                bin_lo: b as f64 / n_bins as f64,
                bin_hi: (b + 1) as f64 / n_bins as f64,
                count: counts[b],
                mean_confidence,
                empirical_accuracy,
            }
        })
        .collect();
    Ok((ece, bins))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub coverage: f64,
    pub risk: f64,
}

/// Selective risk at every coverage level `k/N`, accepting predictions in
/// order of descending confidence (ties by ascending `doc_id`).
pub fn risk_coverage_curve(
    predictions: &[DocPrediction],
    labels: &Labels,
) -> Result<Vec<RiskCoveragePoint>> {
    let mut outcomes = outcomes(predictions, labels)?;
    outcomes.sort_by(|(a, _), (b, _)| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    let n = outcomes.len() as f64;
    let mut errors = 0usize;
    Ok(outcomes
        .iter()
        .enumerate()
        .map(|(i, (_, correct))| {
            errors += usize::from(!correct);
            let k = (i + 1) as f64;
            RiskCoveragePoint {
                coverage: k / n,
                risk: errors as f64 / k,
            }
        })
        .collect())
}

/// Mean selective risk over all coverage points.
pub fn aurc(points: &[RiskCoveragePoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::NoDocuments);
    }
    Ok(points.iter().map(|p| p.risk).sum::<f64>() / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub strategy: String,
    pub n_documents: usize,
    pub accuracy: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
    pub ece: f64,
    pub aurc: f64,
    pub bin_table: Vec<ReliabilityBin>,
    pub rc_points: Vec<RiskCoveragePoint>,
}

/// Computes every metric for one strategy's predictions.
pub fn evaluate(
    predictions: &[DocPrediction],
    labels: &Labels,
    space: &LabelSpace,
    n_bins: usize,
) -> Result<MetricsReport> {
    let first = predictions.first().ok_or(Error::NoDocuments)?;
    if let Some(other) = predictions.iter().find(|p| p.strategy != first.strategy) {
        return Err(Error::InvalidArgument(format!(
            "mixed strategies {} and {} in one evaluation",
            first.strategy, other.strategy
        )));
    }
    let accuracy = accuracy(predictions, labels)?;
    let f1 = f1_scores(predictions, labels, space)?;
    let (ece, bin_table) = ece(predictions, labels, n_bins)?;
    let rc_points = risk_coverage_curve(predictions, labels)?;
    let aurc = aurc(&rc_points)?;
    Ok(MetricsReport {
        strategy: first.strategy.to_string(),
        n_documents: predictions.len(),
        accuracy,
        f1_weighted: f1.weighted,
        f1_macro: f1.macro_avg,
        ece,
        aurc,
        bin_table,
        rc_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::Strategy;
    use crate::model::LabelSpaceKind;

    /// Predictions with given confidences; `correct[i]` decides whether the
    /// label matches ground truth class 0.
    fn fixture(confidences: &[f64], correct: &[bool]) -> (Vec<DocPrediction>, Labels) {
        let mut preds = Vec::new();
        let mut labels = Labels::new();
        for (i, (&c, &ok)) in confidences.iter().zip(correct).enumerate() {
            let id = format!("d{i:03}");
            let label = if ok { 0 } else { 1 };
            preds.push(DocPrediction {
                doc_id: id.clone(),
                strategy: Strategy::First,
                label,
                confidence: c,
                scores: vec![],
                fallback_used: false,
            });
            labels.insert(id, 0);
        }
        (preds, labels)
    }

    fn pred(id: &str, label: usize) -> DocPrediction {
        DocPrediction {
            doc_id: id.into(),
            strategy: Strategy::SoftVote,
            label,
            confidence: 1.0,
            scores: vec![],
            fallback_used: false,
        }
    }

    fn space(n: usize) -> LabelSpace {
        LabelSpace::anonymous(LabelSpaceKind::DocumentLevel, n).unwrap()
    }

    #[test]
    fn accuracy_counts() {
        let (p, l) = fixture(&[0.9; 4], &[true, true, false, true]);
        assert_eq!(accuracy(&p, &l).unwrap(), 0.75);
        let (p, l) = fixture(&[0.9; 3], &[true; 3]);
        assert_eq!(accuracy(&p, &l).unwrap(), 1.0);
        assert!(matches!(accuracy(&[], &l), Err(Error::NoDocuments)));
    }

    #[test]
    fn accuracy_missing_label_names_document() {
        let err = accuracy(&[pred("lost", 0)], &Labels::new()).unwrap_err();
        assert!(err.to_string().contains("lost"));
    }

    #[test]
    fn f1_binary_hand_example() {
        // class 1: TP=1 FP=1 FN=0, class 0: TP=1 FP=0 FN=1
        let preds = vec![pred("a", 0), pred("b", 1), pred("c", 1)];
        let labels: Labels = [("a", 0), ("b", 0), ("c", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let f1 = f1_scores(&preds, &labels, &space(2)).unwrap();
        assert!((f1.per_class[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((f1.per_class[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((f1.macro_avg - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f1_excludes_absent_classes_from_macro() {
        let preds = vec![pred("a", 0), pred("b", 1)];
        let labels: Labels = [("a", 0), ("b", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let f1 = f1_scores(&preds, &labels, &space(3)).unwrap();
        assert_eq!(f1.per_class, vec![1.0, 1.0, 0.0]);
        assert_eq!(f1.macro_avg, 1.0);
        assert_eq!(f1.weighted, 1.0);
    }

    #[test]
    fn f1_balanced_macro_equals_weighted() {
        let preds = vec![pred("a", 0), pred("b", 1), pred("c", 1), pred("d", 0)];
        let labels: Labels = [("a", 0), ("b", 0), ("c", 1), ("d", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let f1 = f1_scores(&preds, &labels, &space(2)).unwrap();
        assert!((f1.macro_avg - f1.weighted).abs() < 1e-15);
    }

    #[test]
    fn ece_hand_example() {
        let (p, l) = fixture(&[0.95, 0.85, 0.65, 0.55], &[true, true, false, true]);
        let (value, bins) = ece(&p, &l, 10).unwrap();
        assert!((value - 0.325).abs() < 1e-12, "{value}");
        assert_eq!(bins.len(), 10);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 4);
        assert_eq!(bins[9].count, 1);
        assert_eq!(bins[0].bin_lo, 0.0);
        assert_eq!(bins[9].bin_hi, 1.0);
    }

    #[test]
    fn ece_confidence_one_lands_in_last_bin() {
        let (p, l) = fixture(&[1.0, 1.0], &[true, true]);
        let (value, bins) = ece(&p, &l, 10).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(bins[9].count, 2);
    }

    #[test]
    fn ece_rejects_bad_input() {
        let (p, l) = fixture(&[0.5], &[true]);
        assert!(ece(&p, &l, 0).is_err());
        assert!(ece(&[], &l, 10).is_err());
        let (p, l) = fixture(&[1.5], &[true]);
        assert!(ece(&p, &l, 10).is_err());
    }

    #[test]
    fn rc_curve_hand_example() {
        let (p, l) = fixture(&[0.9, 0.8, 0.7, 0.6], &[true, true, false, true]);
        let rc = risk_coverage_curve(&p, &l).unwrap();
        let risks: Vec<f64> = rc.iter().map(|r| r.risk).collect();
        assert_eq!(risks, vec![0.0, 0.0, 1.0 / 3.0, 0.25]);
        assert_eq!(rc.last().unwrap().coverage, 1.0);
        let area = aurc(&rc).unwrap();
        assert!((area - 0.145_833_333_333_333_33).abs() < 1e-9);
    }

    #[test]
    fn rc_curve_ties_sorted_by_doc_id() {
        // d000 wrong, d001 right, same confidence: d000 is accepted first
        let (p, l) = fixture(&[0.5, 0.5], &[false, true]);
        let rc = risk_coverage_curve(&p, &l).unwrap();
        assert_eq!(rc[0].risk, 1.0);
        assert_eq!(rc[1].risk, 0.5);
    }

    #[test]
    fn rc_curve_degenerate_cases() {
        let (p, l) = fixture(&[0.3], &[false]);
        let rc = risk_coverage_curve(&p, &l).unwrap();
        assert_eq!(rc, vec![RiskCoveragePoint { coverage: 1.0, risk: 1.0 }]);
        assert!(aurc(&[]).is_err());
        let (p, l) = fixture(&[0.3, 0.9, 0.1], &[true; 3]);
        assert_eq!(aurc(&risk_coverage_curve(&p, &l).unwrap()).unwrap(), 0.0);
        let (p, l) = fixture(&[0.3, 0.9, 0.1], &[false; 3]);
        assert_eq!(aurc(&risk_coverage_curve(&p, &l).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_perfect_corpus() {
        let preds: Vec<_> = (0..16).map(|k| pred(&format!("d{k:02}"), k)).collect();
        let labels: Labels = (0..16).map(|k| (format!("d{k:02}"), k)).collect();
        let report = evaluate(&preds, &labels, &space(16), 10).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.f1_weighted, 1.0);
        assert_eq!(report.f1_macro, 1.0);
        assert_eq!(report.ece, 0.0);
        assert_eq!(report.aurc, 0.0);
        assert_eq!(report.strategy, "soft_vote");
        assert_eq!(report.n_documents, 16);
    }

    #[test]
    fn evaluate_rejects_mixed_strategies() {
        let mut preds = vec![pred("a", 0), pred("b", 0)];
        preds[1].strategy = Strategy::First;
        let labels: Labels = [("a".to_string(), 0), ("b".to_string(), 0)].into();
        assert!(evaluate(&preds, &labels, &space(2), 10).is_err());
    }
}
