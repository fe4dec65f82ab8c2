//! Detection-event wire format.
//!
//! One event per line, a compact JSON object with fields in this order:
//!
//! ```text
//! {"v":1,"camera":"B","ts":1700000000000,"detections":[[4,0.91,0.5,0.5,0.1,0.1]]}
//! ```
//!
//! * `v`: schema version, currently `1`.
//! * `camera`: camera / graph node id.
//! * `ts`: capture time, milliseconds since the Unix epoch, `> 0`.
//! * `detections`: one `[class, confidence, cx, cy, w, h]` array per detected
//!   vehicle; the box is normalized center/size like a YOLO label.
//!
//! Floats are written in shortest round-trip form, so `decode(encode(e))`
//! reproduces every value bit for bit. Lines end with `\n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("malformed record at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("unsupported schema version {0} (expected {WIRE_VERSION})")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventDetection {
    pub class: usize,
    pub confidence: f64,
    /// `[cx, cy, w, h]`, normalized.
    pub bbox: [f64; 4],
}

/// One camera frame's detections.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub version: u32,
    pub camera: String,
    pub timestamp_ms: i64,
    pub detections: Vec<EventDetection>,
}

impl DetectionEvent {
    pub fn new(
        camera: impl Into<String>,
        timestamp_ms: i64,
        detections: Vec<EventDetection>,
    ) -> Self {
        Self {
            version: WIRE_VERSION,
            camera: camera.into(),
            timestamp_ms,
            detections,
        }
    }

    /// Checks class indices against `num_classes`; the rest is checked by
    /// [`decode_event`].
    pub fn validate_classes(&self, num_classes: usize) -> Result<(), String> {
        match self.detections.iter().find(|d| d.class >= num_classes) {
            Some(d) => Err(format!("class {} >= {num_classes}", d.class)),
            None => Ok(()),
        }
    }
}

#[derive(Serialize)]
struct OutRecord<'a> {
    v: u32,
    camera: &'a str,
    ts: i64,
    detections: Vec<(usize, f64, f64, f64, f64, f64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InRecord {
    v: u32,
    camera: String,
    ts: i64,
    detections: Vec<(usize, f64, f64, f64, f64, f64)>,
}

#[derive(Deserialize)]
struct VersionOnly {
    v: u32,
}

/// Encodes an event as one line, including the trailing newline.
pub fn encode_event(event: &DetectionEvent) -> String {
    let mut line = serde_json::to_string(&OutRecord {
        v: event.version,
        camera: &event.camera,
        ts: event.timestamp_ms,
        detections: event
            .detections
            .iter()
            .map(|d| {
                let [cx, cy, w, h] = d.bbox;
                (d.class, d.confidence, cx, cy, w, h)
            })
            .collect(),
    })
    .expect("event serializes");
    line.push('\n');
    line
}

fn malformed(offset: usize, message: impl Into<String>) -> WireError {
    WireError::Malformed {
        offset,
        message: message.into(),
    }
}

/// Decodes one record. A trailing `\n` (or `\r\n`) is allowed.
pub fn decode_event(line: &str) -> Result<DetectionEvent, WireError> {
    let body = line.strip_suffix('\n').unwrap_or(line);
    let body = body.strip_suffix('\r').unwrap_or(body);
    let rec: InRecord = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => {
            // A newer schema may not fit v1's shape; report the version then.
            if let Ok(VersionOnly { v }) = serde_json::from_str::<VersionOnly>(body) {
                if v != WIRE_VERSION {
                    return Err(WireError::Version(v));
                }
            }
            return Err(malformed(e.column().saturating_sub(1), e.to_string()));
        }
    };
    if rec.v != WIRE_VERSION {
        return Err(WireError::Version(rec.v));
    }
    if rec.ts <= 0 {
        return Err(malformed(
            0,
            format!("timestamp {} must be positive", rec.ts),
        ));
    }
    if rec.camera.is_empty() {
        return Err(malformed(0, "empty camera id"));
    }
    let mut detections = Vec::with_capacity(rec.detections.len());
    for (i, (class, confidence, cx, cy, w, h)) in rec.detections.into_iter().enumerate() {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(malformed(
                0,
                format!("detection {i}: confidence {confidence} outside [0, 1]"),
            ));
        }
        let bbox = [cx, cy, w, h];
        if bbox.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(malformed(
                0,
                format!("detection {i}: box {bbox:?} not normalized"),
            ));
        }
        detections.push(EventDetection {
            class,
            confidence,
            bbox,
        });
    }
    Ok(DetectionEvent {
        version: rec.v,
        camera: rec.camera,
        timestamp_ms: rec.ts,
        detections,
    })
}
