//! Axis-aligned bounding boxes, the three coordinate conventions used by the
//! annotation formats, and intersection-over-union.
//!
//! All coordinates are continuous: a box spanning `xmin..xmax` has width
//! `xmax - xmin`, with no +1 pixel correction. This keeps conversions between
//! formats exactly invertible up to floating-point rounding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid image size {width}x{height}: both dimensions must be positive")]
    InvalidImageSize { width: u32, height: u32 },
    #[error("invalid {format:?} box {values:?}: {reason}")]
    InvalidBox {
        format: BoxFormat,
        values: [f64; 4],
        reason: &'static str,
    },
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        let size = Self { width, height };
        size.validate()?;
        Ok(size)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidImageSize {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn w(&self) -> f64 {
        f64::from(self.width)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        f64::from(self.height)
    }
}

/// Coordinate convention of a raw `[f64; 4]` box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxFormat {
    /// `(x, y, w, h)` with `(x, y)` the top-left corner, pixel units.
    TopLeftWh,
    /// `(xmin, ymin, xmax, ymax)` in pixel units, as used by PASCAL VOC.
    CornerPair,
    /// `(cx, cy, w, h)` normalized by the image size, as used by YOLO labels.
    CenterNormalized,
}

impl BoxFormat {
    /// Checks the format's own invariants on raw values.
    pub fn validate(self, values: [f64; 4]) -> Result<(), GeometryError> {
        let invalid = |reason| GeometryError::InvalidBox {
            format: self,
            values,
            reason,
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        match self {
            BoxFormat::TopLeftWh => {
                if values[2] < 0.0 || values[3] < 0.0 {
                    return Err(invalid("negative width or height"));
                }
            }
            BoxFormat::CornerPair => {
                if values[2] < values[0] || values[3] < values[1] {
                    return Err(invalid("max corner precedes min corner"));
                }
            }
            BoxFormat::CenterNormalized => {
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(invalid("normalized value outside [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// An axis-aligned box stored as top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    #[inline]
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self::new(xmin, ymin, xmax - xmin, ymax - ymin)
    }

    #[inline]
    pub fn xmax(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn ymax(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x, self.y, self.xmax(), self.ymax()]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::new(
            self.x * factor,
            self.y * factor,
            self.w * factor,
            self.h * factor,
        )
    }

    /// Area of the overlap with `other`, zero when disjoint.
    pub fn intersection_area(&self, other: &Self) -> f64 {
        let ix = (self.xmax().min(other.xmax()) - self.x.max(other.x)).max(0.0);
        let iy = (self.ymax().min(other.ymax()) - self.y.max(other.y)).max(0.0);
        ix * iy
    }

    /// True when the box lies inside `[0, width] x [0, height]`.
    pub fn within(&self, size: ImageSize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.xmax() <= size.w() && self.ymax() <= size.h()
    }

    /// Builds a pixel-space box from raw values in `format`.
    pub fn from_format(
        values: [f64; 4],
        format: BoxFormat,
        size: ImageSize,
    ) -> Result<Self, GeometryError> {
        let [x, y, w, h] = convert_box(values, format, BoxFormat::TopLeftWh, size)?;
        Ok(Self::new(x, y, w, h))
    }

    /// Raw values of this box in `format`.
    pub fn to_format(&self, format: BoxFormat, size: ImageSize) -> Result<[f64; 4], GeometryError> {
        convert_box(
            [self.x, self.y, self.w, self.h],
            BoxFormat::TopLeftWh,
            format,
            size,
        )
    }
}

/// Converts raw box values between coordinate conventions.
///
/// The region is preserved exactly up to floating-point rounding, so a
/// conversion followed by its inverse reproduces the input to about 1e-12
/// relative error.
pub fn convert_box(
    values: [f64; 4],
    from: BoxFormat,
    to: BoxFormat,
    size: ImageSize,
) -> Result<[f64; 4], GeometryError> {
    size.validate()?;
    from.validate(values)?;
    if from == to {
        return Ok(values);
    }
    let (iw, ih) = (size.w(), size.h());

    // Go through corner pairs in pixel space.
    let [x1, y1, x2, y2] = match from {
        BoxFormat::CornerPair => values,
        BoxFormat::TopLeftWh => {
            let [x, y, w, h] = values;
            [x, y, x + w, y + h]
        }
        BoxFormat::CenterNormalized => {
            let [cx, cy, w, h] = values;
            [
                (cx - w / 2.0) * iw,
                (cy - h / 2.0) * ih,
                (cx + w / 2.0) * iw,
                (cy + h / 2.0) * ih,
            ]
        }
    };

    Ok(match to {
        BoxFormat::CornerPair => [x1, y1, x2, y2],
        BoxFormat::TopLeftWh => [x1, y1, x2 - x1, y2 - y1],
        BoxFormat::CenterNormalized => [
            (x1 + x2) / 2.0 / iw,
            (y1 + y2) / 2.0 / ih,
            (x2 - x1) / iw,
            (y2 - y1) / ih,
        ],
    })
}

/// Intersection over union of two boxes in the same coordinate space.
///
/// When the union has zero area the result is 1 for identical boxes and 0
/// otherwise.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    // Areas from the same corner differences as the intersection, so that
    // iou(a, a) is exactly 1 under rounding.
    let corner_area = |r: &BoundingBox| (r.xmax() - r.x).max(0.0) * (r.ymax() - r.y).max(0.0);
    let inter = a.intersection_area(b);
    let union = corner_area(a) + corner_area(b) - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQ640: ImageSize = ImageSize {
        width: 640,
        height: 640,
    };

    #[test]
    fn corner_pair_to_center_normalized() {
        let out = convert_box(
            [0.0, 0.0, 320.0, 320.0],
            BoxFormat::CornerPair,
            BoxFormat::CenterNormalized,
            SQ640,
        )
        .unwrap();
        assert_eq!(out, [0.25, 0.25, 0.5, 0.5]);
    }

    #[test]
    fn full_image_box() {
        let size = ImageSize::new(1920, 1080).unwrap();
        let out = convert_box(
            [0.5, 0.5, 1.0, 1.0],
            BoxFormat::CenterNormalized,
            BoxFormat::CornerPair,
            size,
        )
        .unwrap();
        assert_eq!(out, [0.0, 0.0, 1920.0, 1080.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let zero = ImageSize {
            width: 0,
            height: 10,
        };
        assert!(matches!(
            convert_box([0.0; 4], BoxFormat::CornerPair, BoxFormat::TopLeftWh, zero),
            Err(GeometryError::InvalidImageSize { .. })
        ));
        assert!(matches!(
            convert_box(
                [10.0, 0.0, 5.0, 5.0],
                BoxFormat::CornerPair,
                BoxFormat::TopLeftWh,
                SQ640
            ),
            Err(GeometryError::InvalidBox { .. })
        ));
        assert!(matches!(
            convert_box(
                [0.5, 0.5, 1.2, 0.1],
                BoxFormat::CenterNormalized,
                BoxFormat::TopLeftWh,
                SQ640
            ),
            Err(GeometryError::InvalidBox { .. })
        ));
        assert!(BoxFormat::TopLeftWh
            .validate([0.0, 0.0, -1.0, 1.0])
            .is_err());
        assert!(BoxFormat::TopLeftWh
            .validate([f64::NAN, 0.0, 1.0, 1.0])
            .is_err());
    }

    #[test]
    fn iou_hand_cases() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BoundingBox::new(20.0, 20.0, 10.0, 10.0)), 0.0);
        let b = BoundingBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_degenerate() {
        let p = BoundingBox::new(3.0, 3.0, 0.0, 0.0);
        assert_eq!(iou(&p, &p), 1.0);
        assert_eq!(iou(&p, &BoundingBox::new(4.0, 3.0, 0.0, 0.0)), 0.0);
        // degenerate inside a real box: no overlap area
        assert_eq!(iou(&p, &BoundingBox::new(0.0, 0.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BoundingBox::new(10.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &b), 0.0);
    }
}
