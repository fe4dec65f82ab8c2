//! PASCAL VOC XML annotations.
//!
//! Corner coordinates are read as continuous 0-based values; no 1-based
//! correction is applied.

use roxmltree::{Document, Node};

use super::{
    clamp_corners, AnnotationError, AnnotationWarning, ClassMap, GroundTruth, ImageRecord,
};
use crate::geometry::ImageSize;

/// Parses a VOC document, logging any clamped boxes.
pub fn parse_voc(xml: &str, class_map: &ClassMap) -> Result<ImageRecord, AnnotationError> {
    let (record, warnings) = parse_voc_with_warnings(xml, class_map)?;
    for w in &warnings {
        log::warn!(
            "{}: object {}: {}",
            record.image_id,
            w.object_index,
            w.message
        );
    }
    Ok(record)
}

pub fn parse_voc_with_warnings(
    xml: &str,
    class_map: &ClassMap,
) -> Result<(ImageRecord, Vec<AnnotationWarning>), AnnotationError> {
    let doc = Document::parse(xml).map_err(|e| AnnotationError::Parse {
        line: e.pos().row as usize,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if !root.has_tag_name("annotation") {
        return Err(parse_err(
            &doc,
            root,
            format!(
                "expected <annotation> root, found <{}>",
                root.tag_name().name()
            ),
        ));
    }

    let image_id = child(root, "filename")
        .or_else(|| child(root, "path"))
        .and_then(|n| n.text())
        .map(|s| s.trim().to_string())
        .unwrap_or_default();

    let size_node =
        child(root, "size").ok_or_else(|| parse_err(&doc, root, "missing <size>".into()))?;
    let width = dimension(&doc, size_node, "width")?;
    let height = dimension(&doc, size_node, "height")?;
    let size = ImageSize::new(width, height)?;

    let mut record = ImageRecord::new(image_id, size);
    let mut warnings = Vec::new();

    for (object_index, object) in root
        .children()
        .filter(|n| n.has_tag_name("object"))
        .enumerate()
    {
        let name = child(object, "name")
            .and_then(|n| n.text())
            .ok_or_else(|| parse_err(&doc, object, "object without <name>".into()))?;
        let class = class_map.resolve(name)?;

        let bndbox = child(object, "bndbox")
            .ok_or_else(|| parse_err(&doc, object, "object without <bndbox>".into()))?;
        let mut corners = [0.0; 4];
        for (slot, tag) in corners.iter_mut().zip(["xmin", "ymin", "xmax", "ymax"]) {
            *slot = number(&doc, bndbox, tag)?;
        }
        if corners[2] < corners[0] || corners[3] < corners[1] {
            return Err(AnnotationError::InvalidAnnotation(format!(
                "object {object_index} ({name}) has inverted corners {corners:?}"
            )));
        }
        let (bbox, clamped) = clamp_corners(corners, size).map_err(|e| match e {
            AnnotationError::InvalidAnnotation(msg) => {
                AnnotationError::InvalidAnnotation(format!("object {object_index} ({name}): {msg}"))
            }
            other => other,
        })?;
        if clamped {
            warnings.push(AnnotationWarning {
                object_index,
                message: format!("box {corners:?} clamped to image bounds"),
            });
        }
        record.annotations.push(GroundTruth { class, bbox });
    }

    Ok((record, warnings))
}

fn child<'a, 'input>(node: Node<'a, 'input>, tag: &str) -> Option<Node<'a, 'input>> {
    node.children().find(|n| n.has_tag_name(tag))
}

fn parse_err(doc: &Document, node: Node, message: String) -> AnnotationError {
    AnnotationError::Parse {
        line: doc.text_pos_at(node.range().start).row as usize,
        message,
    }
}

fn number(doc: &Document, parent: Node, tag: &str) -> Result<f64, AnnotationError> {
    let node =
        child(parent, tag).ok_or_else(|| parse_err(doc, parent, format!("missing <{tag}>")))?;
    let text = node.text().unwrap_or("").trim();
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(
            doc,
            node,
            format!("<{tag}> is not a number: {text:?}"),
        )),
    }
}

// Some exporters write sizes as "640.0".
fn dimension(doc: &Document, parent: Node, tag: &str) -> Result<u32, AnnotationError> {
    let v = number(doc, parent, tag)?;
    if v.fract() != 0.0 || v < 0.0 || v > f64::from(u32::MAX) {
        return Err(parse_err(
            doc,
            child(parent, tag).unwrap_or(parent),
            format!("<{tag}> must be a whole pixel count, got {v}"),
        ));
    }
    Ok(v as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn doc(objects: &[(&str, [f64; 4])], w: u32, h: u32) -> String {
        let mut s = format!(
            "<annotation>\n  <filename>img.jpg</filename>\n  <size><width>{w}</width><height>{h}</height><depth>3</depth></size>\n"
        );
        for (name, [x1, y1, x2, y2]) in objects {
            s.push_str(&format!(
                "  <object><name>{name}</name><bndbox><xmin>{x1}</xmin><ymin>{y1}</ymin><xmax>{x2}</xmax><ymax>{y2}</ymax></bndbox></object>\n"
            ));
        }
        s.push_str("</annotation>\n");
        s
    }

    #[test]
    fn single_bus() {
        let rec = parse_voc(
            &doc(&[("bus", [10.0, 20.0, 110.0, 220.0])], 640, 480),
            &ClassMap::vehicles(),
        )
        .unwrap();
        assert_eq!(rec.image_id, "img.jpg");
        assert_eq!(rec.size, ImageSize::new(640, 480).unwrap());
        assert_eq!(
            rec.annotations,
            vec![GroundTruth {
                class: 3,
                bbox: BoundingBox::new(10.0, 20.0, 100.0, 200.0)
            }]
        );
    }

    #[test]
    fn no_objects_is_a_null_class_image() {
        let rec = parse_voc(&doc(&[], 640, 480), &ClassMap::vehicles()).unwrap();
        assert!(rec.annotations.is_empty());
    }

    #[test]
    fn unknown_class_is_named() {
        let err = parse_voc(
            &doc(&[("lorry", [0.0, 0.0, 5.0, 5.0])], 64, 64),
            &ClassMap::vehicles(),
        )
        .unwrap_err();
        assert!(matches!(err, AnnotationError::UnknownClass(ref n) if n == "lorry"));
    }

    #[test]
    fn small_overshoot_clamps_with_warning() {
        let (rec, warnings) = parse_voc_with_warnings(
            &doc(&[("car", [-10.0, 0.0, 650.0, 100.0])], 640, 480),
            &ClassMap::vehicles(),
        )
        .unwrap();
        assert_eq!(
            rec.annotations[0].bbox,
            BoundingBox::new(0.0, 0.0, 640.0, 100.0)
        );
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn large_overshoot_is_rejected() {
        // 5% of 640 is 32
        let err = parse_voc(
            &doc(&[("car", [0.0, 0.0, 673.0, 100.0])], 640, 480),
            &ClassMap::vehicles(),
        )
        .unwrap_err();
        assert!(matches!(err, AnnotationError::InvalidAnnotation(_)));
    }

    #[test]
    fn malformed_reports_line() {
        let err = parse_voc(
            "<annotation>\n<size>\n<width>3</width>\n</annotation>",
            &ClassMap::vehicles(),
        )
        .unwrap_err();
        match err {
            AnnotationError::Parse { line, .. } => assert!(line >= 3, "line {line}"),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_voc(
            "<annotation>\n<size><width>x</width><height>4</height></size>\n</annotation>",
            &ClassMap::vehicles(),
        )
        .unwrap_err();
        assert!(matches!(err, AnnotationError::Parse { line: 2, .. }));
    }

    #[test]
    fn inverted_corners_rejected() {
        let err = parse_voc(
            &doc(&[("car", [50.0, 0.0, 10.0, 10.0])], 64, 64),
            &ClassMap::vehicles(),
        )
        .unwrap_err();
        assert!(matches!(err, AnnotationError::InvalidAnnotation(_)));
    }
}
