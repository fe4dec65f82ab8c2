use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Detection;
use crate::annotation::ImageRecord;
use crate::geometry::iou;

/// `(k+1) x (k+1)` counts; rows are the true class, columns the predicted
/// class, and index `k` is background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![vec![0; num_classes + 1]; num_classes + 1],
        }
    }

    #[inline]
    pub fn background(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &c)| i == j || c == 0))
    }

    /// Each row divided by its sum: the share of a true class that went to
    /// each prediction. Empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if sum == 0 { 0.0 } else { c as f64 / sum as f64 })
                    .collect()
            })
            .collect()
    }
}

/// Class-agnostic confusion matrix.
///
/// Detections under `confidence_threshold` are dropped. Within each image,
/// detection/ground-truth pairs with IoU at or above `iou_threshold` are
/// taken greedily by descending IoU (then confidence, detection index,
/// ground-truth index), regardless of class, so cross-class confusions show
/// up off the diagonal. Leftover ground truths count as missed (predicted
/// background); leftover detections as spurious (true background).
/// Detections on images absent from `records` are all spurious.
pub fn confusion_matrix(
    detections: &[Detection],
    records: &[ImageRecord],
    num_classes: usize,
    iou_threshold: f64,
    confidence_threshold: f64,
) -> ConfusionMatrix {
    let mut matrix = ConfusionMatrix::new(num_classes);
    let bg = matrix.background();

    let mut per_image: HashMap<&str, Vec<&Detection>> = HashMap::new();
    for d in detections
        .iter()
        .filter(|d| d.confidence >= confidence_threshold)
    {
        per_image.entry(d.image_id.as_str()).or_default().push(d);
    }

    for record in records {
        let dets = per_image
            .remove(record.image_id.as_str())
            .unwrap_or_default();
        let gts = &record.annotations;

        let mut pairs = Vec::new();
        for (di, d) in dets.iter().enumerate() {
            for (gi, g) in gts.iter().enumerate() {
                let overlap = iou(&d.bbox, &g.bbox);
                if overlap >= iou_threshold && overlap > 0.0 {
                    pairs.push((overlap, di, gi));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(dets[b.1].confidence.total_cmp(&dets[a.1].confidence))
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut det_used = vec![false; dets.len()];
        let mut gt_used = vec![false; gts.len()];
        for (_, di, gi) in pairs {
            if det_used[di] || gt_used[gi] {
                continue;
            }
            det_used[di] = true;
            gt_used[gi] = true;
            matrix.counts[gts[gi].class.min(bg)][dets[di].class.min(bg)] += 1;
        }
        for (g, _) in gts.iter().zip(&gt_used).filter(|(_, used)| !**used) {
            matrix.counts[g.class.min(bg)][bg] += 1;
        }
        for (d, _) in dets.iter().zip(&det_used).filter(|(_, used)| !**used) {
            matrix.counts[bg][d.class.min(bg)] += 1;
        }
    }

    // Detections on images with no record.
    let mut leftovers: Vec<_> = per_image.into_values().flatten().collect();
    leftovers.sort_by_key(|d| d.class);
    for d in leftovers {
        matrix.counts[bg][d.class.min(bg)] += 1;
    }
    matrix
}
