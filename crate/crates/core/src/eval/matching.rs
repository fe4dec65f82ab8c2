use serde::{Deserialize, Serialize};

use super::{check_threshold, EvalError};
use crate::annotation::GroundTruth;
use crate::geometry::{iou, BoundingBox};

/// A predicted box in pixel space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class: usize,
    pub confidence: f64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchLabel {
    Tp,
    Fp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    pub label: MatchLabel,
    /// Index into the ground-truth slice for true positives.
    pub gt: Option<usize>,
    pub iou: f64,
}

/// Outcome of matching one image's detections against its ground truth.
///
/// `detections[i]` describes input detection `i`; `matched_by[j]` is the
/// detection that claimed ground truth `j`, `None` for a false negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub iou_threshold: f64,
    pub detections: Vec<DetectionMatch>,
    pub matched_by: Vec<Option<usize>>,
}

impl MatchResult {
    /// `(tp, fp, fn)` for one class.
    pub fn counts(
        &self,
        class: usize,
        detections: &[Detection],
        ground_truths: &[GroundTruth],
    ) -> (u64, u64, u64) {
        let (mut tp, mut fp) = (0, 0);
        for (m, d) in self.detections.iter().zip(detections) {
            if d.class == class {
                match m.label {
                    MatchLabel::Tp => tp += 1,
                    MatchLabel::Fp => fp += 1,
                }
            }
        }
        let fn_ = self
            .matched_by
            .iter()
            .zip(ground_truths)
            .filter(|(m, g)| g.class == class && m.is_none())
            .count() as u64;
        (tp, fp, fn_)
    }
}

/// Greedy per-class matching for one image.
///
/// Detections are visited by descending confidence (input order breaks
/// ties). Each takes the still-unmatched ground truth of its own class with
/// the highest IoU at or above `iou_threshold`, preferring the lower index
/// on equal IoU. Anything left over is a false positive or false negative.
pub fn match_detections(
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    iou_threshold: f64,
) -> Result<MatchResult, EvalError> {
    check_threshold("iou_threshold", iou_threshold)?;
    if let Some(first) = detections.first() {
        if let Some(other) = detections.iter().find(|d| d.image_id != first.image_id) {
            return Err(EvalError::InvalidInput(format!(
                "detections from different images in one match: {:?} and {:?}",
                first.image_id, other.image_id
            )));
        }
    }
    if let Some(d) = detections
        .iter()
        .find(|d| !(0.0..=1.0).contains(&d.confidence))
    {
        return Err(EvalError::InvalidInput(format!(
            "confidence {} outside [0, 1]",
            d.confidence
        )));
    }

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .total_cmp(&detections[a].confidence)
            .then(a.cmp(&b))
    });

    let mut result = MatchResult {
        iou_threshold,
        detections: vec![
            DetectionMatch {
                label: MatchLabel::Fp,
                gt: None,
                iou: 0.0,
            };
            detections.len()
        ],
        matched_by: vec![None; ground_truths.len()],
    };

    for di in order {
        let det = &detections[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in ground_truths.iter().enumerate() {
            if gt.class != det.class || result.matched_by[gi].is_some() {
                continue;
            }
            let overlap = iou(&det.bbox, &gt.bbox);
            if overlap < iou_threshold {
                continue;
            }
            // strict > keeps the lower index on ties
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        if let Some((gi, overlap)) = best {
            result.matched_by[gi] = Some(di);
            result.detections[di] = DetectionMatch {
                label: MatchLabel::Tp,
                gt: Some(gi),
                iou: overlap,
            };
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(class: usize, confidence: f64, bbox: BoundingBox) -> Detection {
        Detection {
            image_id: "img".into(),
            class,
            confidence,
            bbox,
        }
    }

    fn gt(class: usize, bbox: BoundingBox) -> GroundTruth {
        GroundTruth { class, bbox }
    }

    // Box shifted right by `dx` against a 10x10 square at the origin: IoU = (10-dx)/(10+dx).
    fn shifted(dx: f64) -> BoundingBox {
        BoundingBox::new(dx, 0.0, 10.0, 10.0)
    }

    #[test]
    fn higher_confidence_wins() {
        let g = [gt(0, BoundingBox::new(0.0, 0.0, 10.0, 10.0))];
        // dx = 10/9 gives IoU 0.8 for both
        let d = [
            det(0, 0.6, shifted(10.0 / 9.0)),
            det(0, 0.9, shifted(10.0 / 9.0)),
        ];
        let m = match_detections(&d, &g, 0.5).unwrap();
        assert_eq!(m.detections[1].label, MatchLabel::Tp);
        assert_eq!(m.detections[0].label, MatchLabel::Fp);
        assert_eq!(m.matched_by, vec![Some(1)]);
    }

    #[test]
    fn below_threshold_is_fp_and_fn() {
        let g = [gt(0, BoundingBox::new(0.0, 0.0, 10.0, 10.0))];
        // dx solves (10-dx)/(10+dx) = 0.49
        let dx = 10.0 * 0.51 / 1.49;
        let d = [det(0, 0.9, shifted(dx))];
        let m = match_detections(&d, &g, 0.5).unwrap();
        assert!((iou(&d[0].bbox, &g[0].bbox) - 0.49).abs() < 1e-12);
        assert_eq!(m.detections[0].label, MatchLabel::Fp);
        assert_eq!(m.counts(0, &d, &g), (0, 1, 1));
    }

    #[test]
    fn highest_iou_gt_is_taken() {
        let probe = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        // IoU 0.6 and 0.7 against the probe
        let g = [gt(2, shifted(2.5)), gt(2, shifted(30.0 / 17.0))];
        let d = [det(2, 0.5, probe)];
        let m = match_detections(&d, &g, 0.5).unwrap();
        assert_eq!(m.detections[0].gt, Some(1));
        assert!((m.detections[0].iou - 0.7).abs() < 1e-12);
    }

    #[test]
    fn equal_iou_prefers_lower_gt_index() {
        let probe = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let g = [gt(0, shifted(1.0)), gt(0, shifted(-1.0))];
        let m = match_detections(&[det(0, 0.5, probe)], &g, 0.5).unwrap();
        assert_eq!(m.detections[0].gt, Some(0));
    }

    #[test]
    fn classes_do_not_cross_match() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let g = [gt(14, b)];
        let d = [det(13, 0.9, b)];
        let m = match_detections(&d, &g, 0.5).unwrap();
        assert_eq!(m.counts(13, &d, &g), (0, 1, 0));
        assert_eq!(m.counts(14, &d, &g), (0, 0, 1));
    }

    #[test]
    fn rejects_mixed_images_and_bad_threshold() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0);
        let mut other = det(0, 0.5, b);
        other.image_id = "other".into();
        assert!(match_detections(&[det(0, 0.5, b), other], &[], 0.5).is_err());
        assert!(match_detections(&[], &[], 0.0).is_err());
        assert!(match_detections(&[], &[], 1.5).is_err());
        assert!(match_detections(&[det(0, 1.5, b)], &[], 0.5).is_err());
    }
}
