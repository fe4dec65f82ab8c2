use serde::{Deserialize, Serialize};

use super::EvalError;

/// Number of recall sample points used for interpolated AP (0.00..=1.00).
pub const RECALL_SAMPLES: usize = 101;

/// IoU thresholds 0.50, 0.55, ..., 0.95 for mAP@0.5:0.95.
pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// One detection in a confidence-ranked list, already labeled by matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedDetection {
    pub confidence: f64,
    pub is_tp: bool,
}

impl RankedDetection {
    pub fn new(confidence: f64, is_tp: bool) -> Self {
        Self { confidence, is_tp }
    }
}

/// `P = TP / (TP + FP)` and `R = TP / (TP + FN)`, each 0 when its
/// denominator is 0.
pub fn precision_recall(tp: u64, fp: u64, fn_: u64) -> (f64, f64) {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    (ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub confidence: f64,
}

/// Cumulative precision/recall points of a ranked list plus the
/// interpolated envelope sampled at recall `0.00, 0.01, ..., 1.00`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub total_gt: u64,
    pub points: Vec<PrPoint>,
    /// `(recall, interpolated precision)`, 101 samples.
    pub envelope: Vec<(f64, f64)>,
}

impl PrCurve {
    /// Mean of the envelope samples, i.e. the 101-point AP.
    pub fn area(&self) -> f64 {
        self.envelope.iter().map(|(_, p)| p).sum::<f64>() / self.envelope.len() as f64
    }
}

#[inline]
fn recall_sample(i: usize) -> f64 {
    i as f64 / (RECALL_SAMPLES - 1) as f64
}

fn check_ranked(ranked: &[RankedDetection], total_gt: u64) -> Result<(), EvalError> {
    for (i, d) in ranked.iter().enumerate() {
        if !d.confidence.is_finite() {
            return Err(EvalError::InvalidInput(format!(
                "non-finite confidence at rank {i}"
            )));
        }
        if i > 0 && d.confidence > ranked[i - 1].confidence {
            return Err(EvalError::InvalidInput(format!(
                "detections not sorted by descending confidence at rank {i}"
            )));
        }
    }
    let tps = ranked.iter().filter(|d| d.is_tp).count() as u64;
    if tps > total_gt {
        return Err(EvalError::InvalidInput(format!(
            "{tps} true positives but only {total_gt} ground truths"
        )));
    }
    Ok(())
}

pub fn pr_curve(ranked: &[RankedDetection], total_gt: u64) -> Result<PrCurve, EvalError> {
    check_ranked(ranked, total_gt)?;

    let mut points = Vec::with_capacity(ranked.len());
    let mut tp = 0u64;
    for (i, d) in ranked.iter().enumerate() {
        tp += u64::from(d.is_tp);
        let recall = if total_gt == 0 {
            0.0
        } else {
            tp as f64 / total_gt as f64
        };
        points.push(PrPoint {
            recall,
            precision: tp as f64 / (i + 1) as f64,
            confidence: d.confidence,
        });
    }

    let envelope = if total_gt == 0 {
        // Nothing to find: vacuously perfect unless something was claimed.
        let p = if ranked.is_empty() { 1.0 } else { 0.0 };
        (0..RECALL_SAMPLES).map(|i| (recall_sample(i), p)).collect()
    } else {
        // Precision made non-increasing from the right, then sampled at the
        // first point whose recall reaches each sample.
        let mut smoothed: Vec<f64> = points.iter().map(|p| p.precision).collect();
        for i in (0..smoothed.len().saturating_sub(1)).rev() {
            smoothed[i] = smoothed[i].max(smoothed[i + 1]);
        }
        (0..RECALL_SAMPLES)
            .map(|i| {
                let r = recall_sample(i);
                let idx = points.partition_point(|p| p.recall < r);
                (r, smoothed.get(idx).copied().unwrap_or(0.0))
            })
            .collect()
    };

    Ok(PrCurve {
        total_gt,
        points,
        envelope,
    })
}

/// 101-point interpolated average precision of a confidence-ranked list.
///
/// With no ground truth the result is 1 for an empty list and 0 otherwise.
pub fn average_precision(ranked: &[RankedDetection], total_gt: u64) -> Result<f64, EvalError> {
    Ok(pr_curve(ranked, total_gt)?.area())
}

/// Unweighted mean of per-class APs. Callers pass only classes that have
/// ground truth.
pub fn mean_average_precision(aps: &[f64]) -> Result<f64, EvalError> {
    if aps.is_empty() {
        return Err(EvalError::InvalidInput("no classes to average".into()));
    }
    if let Some(ap) = aps.iter().find(|ap| !(0.0..=1.0).contains(*ap)) {
        return Err(EvalError::InvalidInput(format!("AP {ap} outside [0, 1]")));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// mAP@0.5:0.95: each class's APs at the ten [`IOU_THRESHOLDS`] are
/// averaged, then the per-class values are macro-averaged.
pub fn map_range(per_class: &[Vec<f64>]) -> Result<f64, EvalError> {
    let per_class_means = per_class
        .iter()
        .enumerate()
        .map(|(c, aps)| {
            if aps.len() != IOU_THRESHOLDS.len() {
                return Err(EvalError::InvalidInput(format!(
                    "class {c} has {} AP values, expected {}",
                    aps.len(),
                    IOU_THRESHOLDS.len()
                )));
            }
            Ok(aps.iter().sum::<f64>() / aps.len() as f64)
        })
        .collect::<Result<Vec<_>, _>>()?;
    mean_average_precision(&per_class_means)
}

/// Precision/recall at a confidence cut-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Lowest confidence kept; `None` when nothing is kept.
    pub confidence: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl OperatingPoint {
    fn new(confidence: Option<f64>, tp: u64, kept: u64, total_gt: u64) -> Self {
        let (precision, recall) = precision_recall(tp, kept - tp, total_gt - tp.min(total_gt));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            confidence,
            precision,
            recall,
            f1,
        }
    }
}

/// The cut-off maximizing F1. Cut-offs fall only between distinct
/// confidences; on equal F1 the higher cut-off wins.
pub fn f1_operating_point(
    ranked: &[RankedDetection],
    total_gt: u64,
) -> Result<OperatingPoint, EvalError> {
    check_ranked(ranked, total_gt)?;
    let mut best = OperatingPoint::new(None, 0, 0, total_gt);
    let mut tp = 0u64;
    for (i, d) in ranked.iter().enumerate() {
        tp += u64::from(d.is_tp);
        let last_of_tie = ranked
            .get(i + 1)
            .is_none_or(|next| next.confidence < d.confidence);
        if !last_of_tie {
            continue;
        }
        let candidate = OperatingPoint::new(Some(d.confidence), tp, (i + 1) as u64, total_gt);
        if best.confidence.is_none() || candidate.f1 > best.f1 {
            best = candidate;
        }
    }
    Ok(best)
}

/// Precision/recall keeping detections with confidence `>= threshold`.
pub fn precision_at_threshold(
    ranked: &[RankedDetection],
    total_gt: u64,
    threshold: f64,
) -> Result<OperatingPoint, EvalError> {
    check_ranked(ranked, total_gt)?;
    let kept = ranked.partition_point(|d| d.confidence >= threshold);
    let tp = ranked[..kept].iter().filter(|d| d.is_tp).count() as u64;
    let confidence = kept.checked_sub(1).map(|i| ranked[i].confidence);
    Ok(OperatingPoint::new(confidence, tp, kept as u64, total_gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(labels: &[bool]) -> Vec<RankedDetection> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &tp)| RankedDetection::new(1.0 - 0.1 * (i + 1) as f64, tp))
            .collect()
    }

    #[test]
    fn precision_recall_cases() {
        assert_eq!(precision_recall(9, 1, 3), (0.9, 0.75));
        assert_eq!(precision_recall(0, 0, 5), (0.0, 0.0));
        assert_eq!(precision_recall(5, 0, 0), (1.0, 1.0));
        assert_eq!(precision_recall(0, 0, 0), (0.0, 0.0));
    }

    #[test]
    fn ap_tp_fp_tp() {
        let ap = average_precision(&ranked(&[true, false, true]), 2).unwrap();
        let expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        assert!((ap - expected).abs() < 1e-12);
        assert!((ap - 0.834983).abs() < 1e-6);
    }

    #[test]
    fn ap_degenerate_cases() {
        assert_eq!(
            average_precision(&ranked(&[true, true, true]), 3).unwrap(),
            1.0
        );
        assert_eq!(average_precision(&ranked(&[false, false]), 4).unwrap(), 0.0);
        assert_eq!(average_precision(&[], 4).unwrap(), 0.0);
        assert_eq!(average_precision(&[], 0).unwrap(), 1.0);
        assert_eq!(average_precision(&ranked(&[false]), 0).unwrap(), 0.0);
    }

    #[test]
    fn ap_partial_recall() {
        // one of two found: recall samples 0..=0.5 get 1.0
        let ap = average_precision(&ranked(&[true]), 2).unwrap();
        assert!((ap - 51.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn ap_rejects_unsorted_and_overcount() {
        let bad = [
            RankedDetection::new(0.2, true),
            RankedDetection::new(0.9, false),
        ];
        assert!(matches!(
            average_precision(&bad, 1),
            Err(EvalError::InvalidInput(_))
        ));
        assert!(average_precision(&ranked(&[true, true]), 1).is_err());
        assert!(average_precision(&[RankedDetection::new(f64::NAN, true)], 1).is_err());
    }

    #[test]
    fn pr_curve_points() {
        let curve = pr_curve(&ranked(&[true, false, true]), 2).unwrap();
        let pts: Vec<_> = curve
            .points
            .iter()
            .map(|p| (p.recall, p.precision))
            .collect();
        assert_eq!(pts, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
        assert_eq!(curve.envelope.len(), 101);
        let single = pr_curve(&ranked(&[true]), 1).unwrap();
        assert_eq!(
            single
                .points
                .iter()
                .map(|p| (p.recall, p.precision))
                .collect::<Vec<_>>(),
            vec![(1.0, 1.0)]
        );
    }

    #[test]
    fn map_examples() {
        assert!((mean_average_precision(&[0.4; 7]).unwrap() - 0.4).abs() < 1e-15);
        assert!(mean_average_precision(&[]).is_err());

        let falling: Vec<f64> = (0..10).map(|i| 1.0 - 0.1 * i as f64).collect();
        assert!((map_range(&[falling]).unwrap() - 0.55).abs() < 1e-12);
        let mut spike = vec![0.0; 10];
        spike[0] = 0.8;
        assert!((map_range(&[spike]).unwrap() - 0.08).abs() < 1e-12);
        assert!((map_range(&[vec![0.7; 10]]).unwrap() - 0.7).abs() < 1e-15);
        assert!(map_range(&[vec![0.5; 9]]).is_err());
    }

    #[test]
    fn operating_points() {
        // TP FP TP FP, 2 gt: F1 is 1.0*... best at rank 3: P=2/3 R=1 F1=0.8
        let r = ranked(&[true, false, true, false]);
        let op = f1_operating_point(&r, 2).unwrap();
        assert!((op.f1 - 0.8).abs() < 1e-12);
        assert_eq!(op.confidence, Some(r[2].confidence));

        let fixed = precision_at_threshold(&r, 2, r[1].confidence).unwrap();
        assert_eq!((fixed.precision, fixed.recall), (0.5, 0.5));

        let none = f1_operating_point(&[], 3).unwrap();
        assert_eq!(
            (none.precision, none.recall, none.confidence),
            (0.0, 0.0, None)
        );
    }

    #[test]
    fn operating_point_respects_ties() {
        // both at 0.9: cannot split the tie
        let r = [
            RankedDetection::new(0.9, true),
            RankedDetection::new(0.9, false),
            RankedDetection::new(0.1, false),
        ];
        let op = f1_operating_point(&r, 1).unwrap();
        assert_eq!(op.confidence, Some(0.9));
        assert_eq!(op.precision, 0.5);
    }

    #[test]
    fn iou_thresholds_are_evenly_spaced() {
        for (i, t) in IOU_THRESHOLDS.iter().enumerate() {
            assert!((t - (0.5 + 0.05 * i as f64)).abs() < 1e-12);
        }
    }
}
