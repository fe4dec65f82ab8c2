//! Detections file: one `image_id class_index confidence cx cy w h` line per
//! detection, box normalized like a YOLO label.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Detection, EvalError};
use crate::annotation::NORMALIZED_SLACK;
use crate::geometry::{BoundingBox, BoxFormat, ImageSize};

/// Parses a detections file. `sizes` maps image ids to pixel dimensions and
/// is used to convert boxes to pixel space. Blank lines and `#` comments are
/// skipped.
pub fn parse_detections(
    text: &str,
    sizes: &HashMap<String, ImageSize>,
    num_classes: usize,
) -> Result<Vec<Detection>, EvalError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line_no = i + 1;
        let perr = |message: String| EvalError::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(perr(format!("expected 7 fields, found {}", fields.len())));
        }
        let image_id = fields[0];
        let size = *sizes.get(image_id).ok_or_else(|| {
            EvalError::InvalidInput(format!("line {line_no}: unknown image id {image_id:?}"))
        })?;
        let class: usize = fields[1]
            .parse()
            .map_err(|_| perr(format!("bad class index {:?}", fields[1])))?;
        if class >= num_classes {
            return Err(perr(format!("class index {class} >= {num_classes}")));
        }
        let mut nums = [0.0; 5];
        for (slot, f) in nums.iter_mut().zip(&fields[2..]) {
            let v: f64 = f
                .parse()
                .map_err(|_| perr(format!("{f:?} is not a number")))?;
            if !(-NORMALIZED_SLACK..=1.0 + NORMALIZED_SLACK).contains(&v) {
                return Err(perr(format!("value {v} outside [0, 1]")));
            }
            *slot = v.clamp(0.0, 1.0);
        }
        let [confidence, cx, cy, w, h] = nums;
        let bbox = BoundingBox::from_format([cx, cy, w, h], BoxFormat::CenterNormalized, size)
            .map_err(|e| perr(e.to_string()))?;
        out.push(Detection {
            image_id: image_id.to_string(),
            class,
            confidence,
            bbox,
        });
    }
    Ok(out)
}

pub fn write_detections(
    detections: &[Detection],
    sizes: &HashMap<String, ImageSize>,
) -> Result<String, EvalError> {
    let mut out = String::new();
    for d in detections {
        let size = sizes
            .get(&d.image_id)
            .ok_or_else(|| EvalError::InvalidInput(format!("unknown image id {:?}", d.image_id)))?;
        let b = d.bbox;
        let (iw, ih) = (size.w(), size.h());
        let (cx, cy, w, h) = (
            (b.x + b.w / 2.0) / iw,
            (b.y + b.h / 2.0) / ih,
            b.w / iw,
            b.h / ih,
        );
        let _ = writeln!(
            out,
            "{} {} {} {cx} {cy} {w} {h}",
            d.image_id, d.class, d.confidence
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes() -> HashMap<String, ImageSize> {
        HashMap::from([("a".to_string(), ImageSize::new(640, 640).unwrap())])
    }

    #[test]
    fn parse_and_write() {
        let dets =
            parse_detections("# header\na 4 0.9 0.25 0.25 0.5 0.5\n\n", &sizes(), 15).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BoundingBox::new(0.0, 0.0, 320.0, 320.0));
        assert_eq!(dets[0].confidence, 0.9);
        assert_eq!(
            write_detections(&dets, &sizes()).unwrap(),
            "a 4 0.9 0.25 0.25 0.5 0.5\n"
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_detections("b 4 0.9 0.5 0.5 0.1 0.1", &sizes(), 15),
            Err(EvalError::InvalidInput(_))
        ));
        assert!(matches!(
            parse_detections("a 4 0.9 0.5 0.5 0.1", &sizes(), 15),
            Err(EvalError::Parse { line: 1, .. })
        ));
        assert!(parse_detections("a 15 0.9 0.5 0.5 0.1 0.1", &sizes(), 15).is_err());
        assert!(parse_detections("a 1 1.9 0.5 0.5 0.1 0.1", &sizes(), 15).is_err());
    }
}
