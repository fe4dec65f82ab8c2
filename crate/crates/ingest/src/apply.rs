//! Turning decoded events into graph updates.

use std::sync::atomic::{AtomicU64, Ordering};

use roadsight_core::graph::{GraphError, IngestOutcome, TrafficGraph};
use serde::Serialize;

use crate::wire::DetectionEvent;

/// Detections below this confidence are not counted as vehicles.
pub const DEFAULT_CONFIDENCE_CUTOFF: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    UnknownCamera(String),
    InvalidEvent(String),
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::UnknownCamera(id) => write!(f, "unknown-camera {id}"),
            Rejection::InvalidEvent(msg) => write!(f, "invalid {msg}"),
        }
    }
}

/// Per-class vehicle counts for one event: one vehicle per detection at or
/// above `cutoff`.
pub fn event_counts(
    event: &DetectionEvent,
    num_classes: usize,
    cutoff: f64,
) -> Result<Vec<u64>, Rejection> {
    event
        .validate_classes(num_classes)
        .map_err(Rejection::InvalidEvent)?;
    let mut counts = vec![0u64; num_classes];
    for d in event.detections.iter().filter(|d| d.confidence >= cutoff) {
        counts[d.class] += 1;
    }
    Ok(counts)
}

/// Applies one event to the graph. Returns the outcome and the number of
/// vehicles counted.
pub fn apply_event(
    graph: &TrafficGraph,
    event: &DetectionEvent,
    cutoff: f64,
) -> Result<(IngestOutcome, u64), Rejection> {
    if !graph.contains_node(&event.camera) {
        return Err(Rejection::UnknownCamera(event.camera.clone()));
    }
    let counts = event_counts(event, graph.num_classes(), cutoff)?;
    let vehicles = counts.iter().sum();
    match graph.ingest_counts(&event.camera, event.timestamp_ms, &counts) {
        Ok(outcome) => Ok((outcome, vehicles)),
        Err(GraphError::UnknownNode(id)) => Err(Rejection::UnknownCamera(id)),
        Err(e) => Err(Rejection::InvalidEvent(e.to_string())),
    }
}

/// Running tallies shared between connections.
#[derive(Debug, Default)]
pub struct IngestStats {
    pub connections: AtomicU64,
    pub applied: AtomicU64,
    pub dead_lettered: AtomicU64,
    pub vehicles: AtomicU64,
    pub unknown_camera: AtomicU64,
    pub invalid: AtomicU64,
    pub decode_errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StatsSnapshot {
    pub connections: u64,
    /// Events forwarded to the graph, dead-lettered ones included.
    pub applied: u64,
    pub dead_lettered: u64,
    pub vehicles: u64,
    pub unknown_camera: u64,
    pub invalid: u64,
    pub decode_errors: u64,
}

impl StatsSnapshot {
    pub fn rejects(&self) -> u64 {
        self.unknown_camera + self.invalid + self.decode_errors
    }
}

impl IngestStats {
    pub fn record(&self, result: &Result<(IngestOutcome, u64), Rejection>) {
        match result {
            Ok((outcome, vehicles)) => {
                self.applied.fetch_add(1, Ordering::Relaxed);
                self.vehicles.fetch_add(*vehicles, Ordering::Relaxed);
                if *outcome == IngestOutcome::DeadLettered {
                    self.dead_lettered.fetch_add(1, Ordering::Relaxed);
                }
            }
            Err(Rejection::UnknownCamera(_)) => {
                self.unknown_camera.fetch_add(1, Ordering::Relaxed);
            }
            Err(Rejection::InvalidEvent(_)) => {
                self.invalid.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        StatsSnapshot {
            connections: get(&self.connections),
            applied: get(&self.applied),
            dead_lettered: get(&self.dead_lettered),
            vehicles: get(&self.vehicles),
            unknown_camera: get(&self.unknown_camera),
            invalid: get(&self.invalid),
            decode_errors: get(&self.decode_errors),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::EventDetection;
    use roadsight_core::annotation::ClassMap;
    use roadsight_core::graph::GraphConfig;

    fn det(class: usize, confidence: f64) -> EventDetection {
        EventDetection {
            class,
            confidence,
            bbox: [0.5, 0.5, 0.1, 0.1],
        }
    }

    #[test]
    fn cutoff_and_classes() {
        let e = DetectionEvent::new("B", 10, vec![det(4, 0.9), det(4, 0.25), det(2, 0.2499)]);
        let c = event_counts(&e, 15, DEFAULT_CONFIDENCE_CUTOFF).unwrap();
        assert_eq!(c[4], 2);
        assert_eq!(c[2], 0);
        assert_eq!(event_counts(&e, 15, 0.0).unwrap()[2], 1);
        assert!(event_counts(&e, 3, 0.0).is_err());
    }

    #[test]
    fn unknown_camera_is_rejected() {
        let mut g = TrafficGraph::new(ClassMap::vehicles(), GraphConfig::default()).unwrap();
        g.add_node("B", "B", None).unwrap();
        let stats = IngestStats::default();
        let r = apply_event(&g, &DetectionEvent::new("Z", 10, vec![det(1, 0.9)]), 0.25);
        stats.record(&r);
        assert_eq!(r, Err(Rejection::UnknownCamera("Z".into())));
        let r = apply_event(&g, &DetectionEvent::new("B", 10, vec![det(1, 0.9)]), 0.25);
        stats.record(&r);
        let s = stats.snapshot();
        assert_eq!((s.applied, s.unknown_camera, s.vehicles), (1, 1, 1));
        assert_eq!(g.node_totals("B").unwrap()[1], 1);
    }
}
