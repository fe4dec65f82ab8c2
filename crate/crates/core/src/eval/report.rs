use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    average_precision, check_threshold, confusion_matrix, f1_operating_point, match_detections,
    mean_average_precision, pr_curve, precision_at_threshold, ConfusionMatrix, Detection,
    EvalError, MatchLabel, PrCurve, RankedDetection, IOU_THRESHOLDS, RECALL_SAMPLES,
};
use crate::annotation::{ClassMap, DatasetManifest, ImageRecord, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// IoU threshold for the confusion matrix.
    pub confusion_iou: f64,
    /// Detections below this confidence are left out of the confusion matrix.
    pub confusion_confidence: f64,
    /// Report P/R at this fixed confidence instead of each class's
    /// F1-maximizing cut-off.
    pub fixed_confidence: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            confusion_iou: 0.5,
            confusion_confidence: 0.25,
            fixed_confidence: None,
        }
    }
}

/// One line of the results table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub instances: u64,
    pub precision: f64,
    pub recall: f64,
    pub ap50: f64,
    pub ap50_95: f64,
}

/// Macro average over rows that have at least one instance; `instances` is
/// the total over all rows.
pub fn macro_average(rows: &[MetricRow]) -> Result<MetricRow, EvalError> {
    let included: Vec<&MetricRow> = rows.iter().filter(|r| r.instances > 0).collect();
    if included.is_empty() {
        return Err(EvalError::InvalidInput(
            "no class has ground-truth instances".into(),
        ));
    }
    let mean = |f: fn(&MetricRow) -> f64| {
        included.iter().map(|r| f(r)).sum::<f64>() / included.len() as f64
    };
    let ap50: Vec<f64> = included.iter().map(|r| r.ap50).collect();
    let ap50_95: Vec<f64> = included.iter().map(|r| r.ap50_95).collect();
    Ok(MetricRow {
        instances: rows.iter().map(|r| r.instances).sum(),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        ap50: mean_average_precision(&ap50)?,
        ap50_95: mean_average_precision(&ap50_95)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub name: String,
    pub detections: u64,
    pub metrics: MetricRow,
    /// Confidence cut-off the P/R values were taken at.
    pub operating_confidence: Option<f64>,
    /// AP at each of [`IOU_THRESHOLDS`].
    pub ap_per_threshold: Vec<f64>,
    /// PR curve at IoU 0.5.
    pub pr_curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub images: usize,
    pub all: MetricRow,
    pub classes: Vec<ClassReport>,
    pub confusion: ConfusionMatrix,
    /// Mean of the per-class envelopes over classes with instances; its area
    /// is the all-class mAP@0.5.
    pub mean_envelope: Vec<(f64, f64)>,
}

/// Evaluates detections against the test split of `manifest`.
///
/// Per-class TP/FP labels come from [`match_detections`] on every image at
/// each IoU threshold; detections are then ranked across images by
/// descending confidence, with image order in the manifest and then input
/// order breaking ties.
pub fn evaluate(
    detections: &[Detection],
    manifest: &DatasetManifest,
    class_map: &ClassMap,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    check_threshold("confusion IoU threshold", config.confusion_iou)?;
    check_threshold(
        "confusion confidence threshold",
        config.confusion_confidence,
    )?;
    if let Some(c) = config.fixed_confidence {
        check_threshold("fixed confidence threshold", c)?;
    }
    let k = class_map.len();

    let records: Vec<&ImageRecord> = manifest.iter_split(Split::Test).collect();
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if index.insert(r.image_id.as_str(), i).is_some() {
            return Err(EvalError::InvalidInput(format!(
                "duplicate image id {:?} in test split",
                r.image_id
            )));
        }
        if let Some(gt) = r.annotations.iter().find(|g| g.class >= k) {
            return Err(EvalError::InvalidInput(format!(
                "image {:?} has ground-truth class {} >= {k}",
                r.image_id, gt.class
            )));
        }
    }

    let mut per_image: Vec<Vec<Detection>> = vec![Vec::new(); records.len()];
    for d in detections {
        let &i = index.get(d.image_id.as_str()).ok_or_else(|| {
            EvalError::InvalidInput(format!("detection for unknown image id {:?}", d.image_id))
        })?;
        if d.class >= k {
            return Err(EvalError::InvalidInput(format!(
                "detection class {} >= {k}",
                d.class
            )));
        }
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(EvalError::InvalidInput(format!(
                "confidence {} outside [0, 1]",
                d.confidence
            )));
        }
        per_image[i].push(d.clone());
    }

    let mut instances = vec![0u64; k];
    for r in &records {
        for g in &r.annotations {
            instances[g.class] += 1;
        }
    }
    let mut det_counts = vec![0u64; k];
    for d in detections {
        det_counts[d.class] += 1;
    }

    let mut ap_table = vec![vec![0.0; IOU_THRESHOLDS.len()]; k];
    let mut ranked_at_50: Vec<Vec<RankedDetection>> = vec![Vec::new(); k];
    for (ti, &threshold) in IOU_THRESHOLDS.iter().enumerate() {
        let mut ranked: Vec<Vec<RankedDetection>> = vec![Vec::new(); k];
        for (record, dets) in records.iter().zip(&per_image) {
            let m = match_detections(dets, &record.annotations, threshold)?;
            for (d, dm) in dets.iter().zip(&m.detections) {
                ranked[d.class].push(RankedDetection::new(
                    d.confidence,
                    dm.label == MatchLabel::Tp,
                ));
            }
        }
        for (c, list) in ranked.iter_mut().enumerate() {
            // stable: keeps image/input order among equal confidences
            list.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
            ap_table[c][ti] = average_precision(list, instances[c])?;
        }
        if ti == 0 {
            ranked_at_50 = ranked;
        }
    }

    let mut classes = Vec::with_capacity(k);
    for c in 0..k {
        let list = &ranked_at_50[c];
        let op = match config.fixed_confidence {
            Some(t) => precision_at_threshold(list, instances[c], t)?,
            None => f1_operating_point(list, instances[c])?,
        };
        let aps = &ap_table[c];
        classes.push(ClassReport {
            class: c,
            name: class_map.name(c).unwrap_or_default().to_string(),
            detections: det_counts[c],
            metrics: MetricRow {
                instances: instances[c],
                precision: op.precision,
                recall: op.recall,
                ap50: aps[0],
                ap50_95: aps.iter().sum::<f64>() / aps.len() as f64,
            },
            operating_confidence: op.confidence,
            ap_per_threshold: aps.clone(),
            pr_curve: pr_curve(list, instances[c])?,
        });
    }

    let rows: Vec<MetricRow> = classes.iter().map(|c| c.metrics).collect();
    let all = macro_average(&rows)?;

    let included: Vec<&ClassReport> = classes.iter().filter(|c| c.metrics.instances > 0).collect();
    let mean_envelope = (0..RECALL_SAMPLES)
        .map(|i| {
            let r = included[0].pr_curve.envelope[i].0;
            let p = included
                .iter()
                .map(|c| c.pr_curve.envelope[i].1)
                .sum::<f64>()
                / included.len() as f64;
            (r, p)
        })
        .collect();

    let owned: Vec<ImageRecord> = records.iter().map(|r| (*r).clone()).collect();
    let confusion = confusion_matrix(
        detections,
        &owned,
        k,
        config.confusion_iou,
        config.confusion_confidence,
    );

    Ok(EvalReport {
        config: *config,
        images: records.len(),
        all,
        classes,
        confusion,
        mean_envelope,
    })
}

/// Renders a results table, `all` first, values to 3 decimals.
pub fn format_table(all: &MetricRow, rows: &[(&str, &MetricRow)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} {:>9} {:>6} {:>6} {:>6} {:>9}",
        "Class", "Instances", "P", "R", "mAP50", "mAP50-95"
    );
    let mut line = |name: &str, r: &MetricRow| {
        let _ = writeln!(
            out,
            "{:<width$} {:>9} {:>6.3} {:>6.3} {:>6.3} {:>9.3}",
            name, r.instances, r.precision, r.recall, r.ap50, r.ap50_95
        );
    };
    line("all", all);
    for (name, r) in rows {
        line(name, r);
    }
    out
}

impl EvalReport {
    pub fn class_names(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.name.as_str()).collect()
    }

    /// Console table: Class, Instances, P, R, mAP50, mAP50-95 with the
    /// "all" row first.
    pub fn table(&self) -> String {
        let rows: Vec<(&str, &MetricRow)> = self
            .classes
            .iter()
            .map(|c| (c.name.as_str(), &c.metrics))
            .collect();
        format_table(&self.all, &rows)
    }

    /// Results table as CSV with 3-decimal and full-precision columns.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "class,instances,detections,P,R,mAP50,mAP50-95,P_full,R_full,mAP50_full,mAP50-95_full,confidence\n",
        );
        let mut line = |name: &str, dets: Option<u64>, r: &MetricRow, conf: Option<f64>| {
            let _ = writeln!(
                out,
                "{name},{},{},{:.3},{:.3},{:.3},{:.3},{},{},{},{},{}",
                r.instances,
                dets.map(|d| d.to_string()).unwrap_or_default(),
                r.precision,
                r.recall,
                r.ap50,
                r.ap50_95,
                r.precision,
                r.recall,
                r.ap50,
                r.ap50_95,
                conf.map(|c| c.to_string()).unwrap_or_default(),
            );
        };
        let total: u64 = self.classes.iter().map(|c| c.detections).sum();
        line("all", Some(total), &self.all, None);
        for c in &self.classes {
            line(
                &c.name,
                Some(c.detections),
                &c.metrics,
                c.operating_confidence,
            );
        }
        out
    }

    /// Confusion matrix as CSV, rows true class, columns predicted.
    pub fn confusion_csv(&self, normalized: bool) -> String {
        let mut labels: Vec<&str> = self.class_names();
        labels.push("background");
        let mut out = String::from("true\\predicted");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        let norm = self.confusion.row_normalized();
        for (i, l) in labels.iter().enumerate() {
            out.push_str(l);
            for (share, count) in norm[i].iter().zip(&self.confusion.counts[i]) {
                if normalized {
                    let _ = write!(out, ",{share}");
                } else {
                    let _ = write!(out, ",{count}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// PR samples for external plotting: raw cumulative points and the
    /// 101-point envelope per class, plus the all-class mean envelope.
    pub fn pr_csv(&self) -> String {
        let mut out = String::from("class,kind,recall,precision,confidence\n");
        for c in &self.classes {
            for p in &c.pr_curve.points {
                let _ = writeln!(
                    out,
                    "{},raw,{},{},{}",
                    c.name, p.recall, p.precision, p.confidence
                );
            }
            for (r, p) in &c.pr_curve.envelope {
                let _ = writeln!(out, "{},envelope,{r},{p},", c.name);
            }
        }
        for (r, p) in &self.mean_envelope {
            let _ = writeln!(out, "all,envelope,{r},{p},");
        }
        out
    }
}
