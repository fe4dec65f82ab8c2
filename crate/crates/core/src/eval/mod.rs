//! Detection evaluation: matching, precision/recall, 101-point interpolated
//! AP, mAP over classes and IoU thresholds, confusion matrices with a
//! background class, and PR curves.

mod confusion;
mod detections;
mod matching;
mod metrics;
mod report;

pub use confusion::{confusion_matrix, ConfusionMatrix};
pub use detections::{parse_detections, write_detections};
pub use matching::{match_detections, Detection, DetectionMatch, MatchLabel, MatchResult};
pub use metrics::{
    average_precision, f1_operating_point, map_range, mean_average_precision, pr_curve,
    precision_at_threshold, precision_recall, OperatingPoint, PrCurve, PrPoint, RankedDetection,
    IOU_THRESHOLDS, RECALL_SAMPLES,
};
pub use report::{
    evaluate, format_table, macro_average, ClassReport, EvalConfig, EvalReport, MetricRow,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("detections line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub(crate) fn check_threshold(name: &str, value: f64) -> Result<(), EvalError> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(EvalError::InvalidInput(format!(
            "{name} must lie in (0, 1], got {value}"
        )));
    }
    Ok(())
}
