//! Feeding a file of wire-format lines into a graph.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::{Duration, Instant};

use roadsight_core::graph::{IngestOutcome, TrafficGraph};
use serde::Serialize;

use crate::apply::{apply_event, Rejection, DEFAULT_CONFIDENCE_CUTOFF};
use crate::wire::{decode_event, DetectionEvent};

/// At most this many error messages are kept in a summary.
const MAX_RECORDED_ERRORS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    /// Simulated-time speed-up; `0` replays as fast as possible, `1` in real
    /// time, `10` ten times faster.
    pub speed: f64,
    pub confidence_cutoff: f64,
    /// Apply in timestamp order (stable sort). When false, file order is kept.
    pub sort: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            speed: 0.0,
            confidence_cutoff: DEFAULT_CONFIDENCE_CUTOFF,
            sort: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ReplaySummary {
    /// Events applied to the graph, dead-lettered ones included.
    pub applied: u64,
    pub dead_lettered: u64,
    pub vehicles: u64,
    pub malformed: u64,
    pub unknown_camera: u64,
    pub invalid: u64,
    #[serde(serialize_with = "as_secs")]
    pub duration: Duration,
    /// First few problems, `line N: message`.
    pub errors: Vec<String>,
}

fn as_secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl ReplaySummary {
    pub fn rejects(&self) -> u64 {
        self.malformed + self.unknown_camera + self.invalid
    }

    fn note(&mut self, line: usize, message: impl std::fmt::Display) {
        if self.errors.len() < MAX_RECORDED_ERRORS {
            self.errors.push(format!("line {line}: {message}"));
        }
    }
}

pub fn replay_file(
    path: impl AsRef<Path>,
    graph: &TrafficGraph,
    options: ReplayOptions,
) -> std::io::Result<ReplaySummary> {
    let file = File::open(path)?;
    replay_reader(BufReader::new(file), graph, options)
}

pub fn replay_reader<R: BufRead>(
    input: R,
    graph: &TrafficGraph,
    options: ReplayOptions,
) -> std::io::Result<ReplaySummary> {
    if !(options.speed >= 0.0 && options.speed.is_finite()) {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("speed must be finite and >= 0, got {}", options.speed),
        ));
    }
    let began = Instant::now();
    let mut summary = ReplaySummary::default();
    let mut events: Vec<(usize, DetectionEvent)> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match decode_event(&line) {
            Ok(e) => events.push((i + 1, e)),
            Err(e) => {
                summary.malformed += 1;
                summary.note(i + 1, e);
            }
        }
    }
    if options.sort {
        events.sort_by_key(|(_, e)| e.timestamp_ms);
    }

    let first_ts = events.first().map(|(_, e)| e.timestamp_ms);
    for (line, event) in &events {
        if options.speed > 0.0 {
            let offset_ms =
                (event.timestamp_ms - first_ts.unwrap_or(0)).max(0) as f64 / options.speed;
            let due = began + Duration::from_secs_f64(offset_ms / 1000.0);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        match apply_event(graph, event, options.confidence_cutoff) {
            Ok((outcome, vehicles)) => {
                summary.applied += 1;
                summary.vehicles += vehicles;
                if outcome == IngestOutcome::DeadLettered {
                    summary.dead_lettered += 1;
                }
            }
            Err(r) => {
                match r {
                    Rejection::UnknownCamera(_) => summary.unknown_camera += 1,
                    Rejection::InvalidEvent(_) => summary.invalid += 1,
                }
                summary.note(*line, r);
            }
        }
    }
    summary.duration = began.elapsed();
    log::info!(
        "replayed {} events ({} rejected) in {:.3}s",
        summary.applied,
        summary.rejects(),
        summary.duration.as_secs_f64()
    );
    Ok(summary)
}
