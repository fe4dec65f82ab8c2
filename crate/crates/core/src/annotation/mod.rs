//! Ground-truth annotations: the class map, per-image records, and the two
//! on-disk label formats (PASCAL VOC XML and YOLO normalized text).

mod classmap;
mod split;
mod voc;
mod yolo;

pub use classmap::{ClassMap, DEFAULT_VEHICLE_CLASSES};
pub use split::{
    read_manifest, split_assignment, split_dataset, write_manifest, write_manifest_rows,
    DatasetManifest, ManifestRow, Split, SplitFractions,
};
pub use voc::{parse_voc, parse_voc_with_warnings};
pub use yolo::{parse_yolo_txt, parse_yolo_txt_with_warnings, write_yolo_txt};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, GeometryError, ImageSize};

/// Overshoot past the image border tolerated (and clamped), as a fraction of
/// the image dimension along that axis.
pub const CLAMP_TOLERANCE: f64 = 0.05;

/// Slack allowed on each raw normalized YOLO value before it is rejected.
pub const NORMALIZED_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("invalid split fractions {0:?}: must be positive and sum to 1")]
    InvalidFractions([f64; 3]),
    #[error("invalid class map: {0}")]
    InvalidClassMap(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("manifest: {0}")]
    Manifest(#[from] csv::Error),
}

/// A non-fatal adjustment made while parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationWarning {
    pub object_index: usize,
    pub message: String,
}

/// A labeled vehicle: class index plus a pixel-space top-left/size box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class: usize,
    pub bbox: BoundingBox,
}

/// One image and its vehicle annotations. Images without vehicles simply have
/// an empty annotation list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub size: ImageSize,
    pub annotations: Vec<GroundTruth>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, size: ImageSize) -> Self {
        Self {
            image_id: image_id.into(),
            size,
            annotations: Vec::new(),
        }
    }

    /// Checks class indices against `num_classes` and boxes against the image.
    pub fn validate(&self, num_classes: usize) -> Result<(), AnnotationError> {
        self.size.validate()?;
        for (i, gt) in self.annotations.iter().enumerate() {
            if gt.class >= num_classes {
                return Err(AnnotationError::UnknownClass(gt.class.to_string()));
            }
            if gt.bbox.w < 0.0 || gt.bbox.h < 0.0 || !gt.bbox.within(self.size) {
                return Err(AnnotationError::InvalidAnnotation(format!(
                    "{}: object {i} box {:?} outside {}x{} image",
                    self.image_id, gt.bbox, self.size.width, self.size.height
                )));
            }
        }
        Ok(())
    }
}

/// Clamps a pixel-space corner pair into the image when the overshoot is
/// within [`CLAMP_TOLERANCE`]; larger overshoot is an error. Returns the box
/// and whether any coordinate was moved.
pub(crate) fn clamp_corners(
    [x1, y1, x2, y2]: [f64; 4],
    size: ImageSize,
) -> Result<(BoundingBox, bool), AnnotationError> {
    let (iw, ih) = (size.w(), size.h());
    let (tol_x, tol_y) = (CLAMP_TOLERANCE * iw, CLAMP_TOLERANCE * ih);
    if x1 < -tol_x || y1 < -tol_y || x2 > iw + tol_x || y2 > ih + tol_y {
        return Err(AnnotationError::InvalidAnnotation(format!(
            "box ({x1}, {y1}, {x2}, {y2}) exceeds {}x{} image by more than {}%",
            size.width,
            size.height,
            CLAMP_TOLERANCE * 100.0
        )));
    }
    let cx1 = x1.clamp(0.0, iw);
    let cy1 = y1.clamp(0.0, ih);
    let cx2 = x2.clamp(0.0, iw);
    let cy2 = y2.clamp(0.0, ih);
    let moved = (cx1, cy1, cx2, cy2) != (x1, y1, x2, y2);
    Ok((BoundingBox::from_corners(cx1, cy1, cx2, cy2), moved))
}
