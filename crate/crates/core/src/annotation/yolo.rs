//! YOLO label files: one `class cx cy w h` line per object, normalized.

use std::fmt::Write as _;

use super::{
    clamp_corners, AnnotationError, AnnotationWarning, ClassMap, GroundTruth, ImageRecord,
    NORMALIZED_SLACK,
};
use crate::geometry::{BoxFormat, ImageSize};

pub fn parse_yolo_txt(
    text: &str,
    image_id: &str,
    size: ImageSize,
    class_map: &ClassMap,
) -> Result<ImageRecord, AnnotationError> {
    let (record, warnings) = parse_yolo_txt_with_warnings(text, image_id, size, class_map)?;
    for w in &warnings {
        log::warn!("{image_id}: line {}: {}", w.object_index + 1, w.message);
    }
    Ok(record)
}

/// Like [`parse_yolo_txt`], returning clamping notes instead of logging them.
/// `object_index` in each warning is the 0-based line number.
pub fn parse_yolo_txt_with_warnings(
    text: &str,
    image_id: &str,
    size: ImageSize,
    class_map: &ClassMap,
) -> Result<(ImageRecord, Vec<AnnotationWarning>), AnnotationError> {
    size.validate()?;
    let mut record = ImageRecord::new(image_id, size);
    let mut warnings = Vec::new();

    for (line_index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let line_no = line_index + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(AnnotationError::Parse {
                line: line_no,
                message: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let class: usize = fields[0].parse().map_err(|_| AnnotationError::Parse {
            line: line_no,
            message: format!("class index {:?} is not a non-negative integer", fields[0]),
        })?;
        if class >= class_map.len() {
            return Err(AnnotationError::UnknownClass(class.to_string()));
        }

        let mut values = [0.0; 4];
        for (slot, field) in values.iter_mut().zip(&fields[1..]) {
            let v: f64 = field.parse().map_err(|_| AnnotationError::Parse {
                line: line_no,
                message: format!("{field:?} is not a number"),
            })?;
            if !v.is_finite() || !(-NORMALIZED_SLACK..=1.0 + NORMALIZED_SLACK).contains(&v) {
                return Err(AnnotationError::InvalidAnnotation(format!(
                    "line {line_no}: normalized value {v} outside [0, 1]"
                )));
            }
            *slot = v.clamp(0.0, 1.0);
        }

        // Centre/size values can be individually valid yet describe a box that
        // pokes out of the frame; those go through the shared clamping rule.
        let [cx, cy, w, h] = values;
        let corners = [
            (cx - w / 2.0) * size.w(),
            (cy - h / 2.0) * size.h(),
            (cx + w / 2.0) * size.w(),
            (cy + h / 2.0) * size.h(),
        ];
        let (bbox, clamped) = clamp_corners(corners, size).map_err(|e| match e {
            AnnotationError::InvalidAnnotation(msg) => {
                AnnotationError::InvalidAnnotation(format!("line {line_no}: {msg}"))
            }
            other => other,
        })?;
        if clamped {
            warnings.push(AnnotationWarning {
                object_index: line_index,
                message: "box clamped to image bounds".into(),
            });
        }
        record.annotations.push(GroundTruth { class, bbox });
    }
    Ok((record, warnings))
}

/// Serializes a record as YOLO label lines. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_yolo_txt(record: &ImageRecord) -> String {
    let mut out = String::new();
    for gt in &record.annotations {
        let [cx, cy, w, h] = gt
            .bbox
            .to_format(BoxFormat::CenterNormalized, record.size)
            .unwrap_or_else(|_| {
                // Out-of-range boxes are still written; parse will flag them.
                let (iw, ih) = (record.size.w(), record.size.h());
                let b = gt.bbox;
                [
                    (b.x + b.w / 2.0) / iw,
                    (b.y + b.h / 2.0) / ih,
                    b.w / iw,
                    b.h / ih,
                ]
            });
        let _ = writeln!(out, "{} {cx} {cy} {w} {h}", gt.class);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn sq640() -> ImageSize {
        ImageSize::new(640, 640).unwrap()
    }

    #[test]
    fn parse_car_line() {
        let rec =
            parse_yolo_txt("4 0.25 0.25 0.5 0.5\n", "a", sq640(), &ClassMap::vehicles()).unwrap();
        assert_eq!(
            rec.annotations,
            vec![GroundTruth {
                class: 4,
                bbox: BoundingBox::new(0.0, 0.0, 320.0, 320.0)
            }]
        );
    }

    #[test]
    fn write_car_line() {
        let mut rec = ImageRecord::new("a", sq640());
        rec.annotations.push(GroundTruth {
            class: 4,
            bbox: BoundingBox::new(0.0, 0.0, 320.0, 320.0),
        });
        assert_eq!(write_yolo_txt(&rec), "4 0.25 0.25 0.5 0.5\n");
    }

    #[test]
    fn empty_file_and_empty_record() {
        let rec = parse_yolo_txt("", "a", sq640(), &ClassMap::vehicles()).unwrap();
        assert!(rec.annotations.is_empty());
        assert_eq!(write_yolo_txt(&rec), "");
    }

    #[test]
    fn unknown_class_index() {
        let err =
            parse_yolo_txt("99 0.5 0.5 0.1 0.1", "a", sq640(), &ClassMap::vehicles()).unwrap_err();
        assert!(matches!(err, AnnotationError::UnknownClass(_)));
    }

    #[test]
    fn non_numeric_field() {
        let err =
            parse_yolo_txt("1 0.5 abc 0.1 0.1", "a", sq640(), &ClassMap::vehicles()).unwrap_err();
        assert!(matches!(err, AnnotationError::Parse { line: 1, .. }));
        let err =
            parse_yolo_txt("\n1 0.5 0.1 0.1", "a", sq640(), &ClassMap::vehicles()).unwrap_err();
        assert!(matches!(err, AnnotationError::Parse { line: 2, .. }));
    }

    #[test]
    fn slack_and_out_of_range() {
        let rec = parse_yolo_txt(
            "0 0.5 0.5 1.0000005 0.2",
            "a",
            sq640(),
            &ClassMap::vehicles(),
        )
        .unwrap();
        assert_eq!(rec.annotations[0].bbox.w, 640.0);
        let err =
            parse_yolo_txt("0 0.5 0.5 1.01 0.2", "a", sq640(), &ClassMap::vehicles()).unwrap_err();
        assert!(matches!(err, AnnotationError::InvalidAnnotation(_)));
    }

    #[test]
    fn box_poking_out_of_frame() {
        // left edge at -0.02: clamped
        let (rec, warnings) =
            parse_yolo_txt_with_warnings("0 0.08 0.5 0.2 0.2", "a", sq640(), &ClassMap::vehicles())
                .unwrap();
        assert_eq!(rec.annotations[0].bbox.x, 0.0);
        assert_eq!(warnings.len(), 1);
        rec.validate(15).unwrap();
        // left edge at -0.15: rejected
        assert!(parse_yolo_txt("0 0.1 0.5 0.5 0.2", "a", sq640(), &ClassMap::vehicles()).is_err());
    }
}
