//! Synthetic camera streams.
//!
//! Every `frame_interval_ms` each camera emits one event. The number of
//! class-`c` detections in it is Poisson with mean
//! `rate[camera][c] * frame_interval_ms / 60_000`, so the expected total over
//! a run is `rate * duration_ms / 60_000`. Output is a pure function of the
//! config.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::wire::{encode_event, DetectionEvent, EventDetection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub cameras: Vec<String>,
    /// Mean arrivals per minute, indexed `[camera][class]`.
    pub rates: Vec<Vec<f64>>,
    pub duration_ms: i64,
    pub frame_interval_ms: i64,
    /// Timestamp of the first frame.
    pub start_ms: i64,
    pub seed: u64,
}

pub const DEFAULT_START_MS: i64 = 1_700_000_000_000;
pub const DEFAULT_FRAME_INTERVAL_MS: i64 = 1_000;

impl SimulatorConfig {
    /// Same per-minute rate for every camera and class.
    pub fn uniform(
        cameras: Vec<String>,
        num_classes: usize,
        rate_per_min: f64,
        duration_ms: i64,
        seed: u64,
    ) -> Self {
        let rates = vec![vec![rate_per_min; num_classes]; cameras.len()];
        Self {
            cameras,
            rates,
            duration_ms,
            frame_interval_ms: DEFAULT_FRAME_INTERVAL_MS,
            start_ms: DEFAULT_START_MS,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.rates.first().map_or(0, Vec::len)
    }

    pub fn frames(&self) -> i64 {
        self.duration_ms / self.frame_interval_ms
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.cameras.is_empty() {
            return Err("no cameras".into());
        }
        if self.rates.len() != self.cameras.len() {
            return Err(format!(
                "{} rate rows for {} cameras",
                self.rates.len(),
                self.cameras.len()
            ));
        }
        let k = self.num_classes();
        if k == 0 || self.rates.iter().any(|r| r.len() != k) {
            return Err("rate rows must share one non-zero class count".into());
        }
        if self
            .rates
            .iter()
            .flatten()
            .any(|r| !r.is_finite() || *r < 0.0)
        {
            return Err("rates must be finite and >= 0".into());
        }
        if self.frame_interval_ms <= 0 {
            return Err("frame interval must be positive".into());
        }
        if self.duration_ms < 0 {
            return Err("duration must be >= 0".into());
        }
        if self.start_ms <= 0 {
            return Err("start timestamp must be positive".into());
        }
        Ok(())
    }
}

/// Iterator over the simulated events, frame by frame, cameras in config
/// order within a frame.
pub struct Simulator {
    rng: ChaCha8Rng,
    cameras: Vec<String>,
    arrivals: Vec<Vec<Option<Poisson<f64>>>>,
    frame: i64,
    frames: i64,
    camera: usize,
    start_ms: i64,
    interval_ms: i64,
}

impl Simulator {
    pub fn new(config: &SimulatorConfig) -> Result<Self, String> {
        config.validate()?;
        let per_frame = config.frame_interval_ms as f64 / 60_000.0;
        let arrivals = config
            .rates
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&r| {
                        let mean = r * per_frame;
                        (mean > 0.0).then(|| Poisson::new(mean).expect("positive finite mean"))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            cameras: config.cameras.clone(),
            arrivals,
            frame: 0,
            frames: config.frames(),
            camera: 0,
            start_ms: config.start_ms,
            interval_ms: config.frame_interval_ms,
        })
    }

    fn random_detection(rng: &mut ChaCha8Rng, class: usize) -> EventDetection {
        let w: f64 = rng.random_range(0.02..=0.3);
        let h: f64 = rng.random_range(0.02..=0.3);
        let cx = rng.random_range(w / 2.0..=1.0 - w / 2.0);
        let cy = rng.random_range(h / 2.0..=1.0 - h / 2.0);
        EventDetection {
            class,
            confidence: rng.random_range(0.5..=1.0),
            bbox: [cx, cy, w, h],
        }
    }
}

impl Iterator for Simulator {
    type Item = DetectionEvent;

    fn next(&mut self) -> Option<DetectionEvent> {
        if self.frame >= self.frames {
            return None;
        }
        let ts = self.start_ms + self.frame * self.interval_ms;
        let mut detections = Vec::new();
        for (class, dist) in self.arrivals[self.camera].iter().enumerate() {
            let Some(dist) = dist else { continue };
            let n = dist.sample(&mut self.rng) as u64;
            for _ in 0..n {
                detections.push(Self::random_detection(&mut self.rng, class));
            }
        }
        let event = DetectionEvent::new(self.cameras[self.camera].clone(), ts, detections);
        self.camera += 1;
        if self.camera == self.cameras.len() {
            self.camera = 0;
            self.frame += 1;
        }
        Some(event)
    }
}

pub fn simulate_cameras(config: &SimulatorConfig) -> Result<Simulator, String> {
    Simulator::new(config)
}

/// What a simulation emitted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SimulationSummary {
    pub events: u64,
    pub vehicles: u64,
    pub per_class: Vec<u64>,
    pub per_camera: BTreeMap<String, Vec<u64>>,
}

impl SimulationSummary {
    pub fn new(num_classes: usize) -> Self {
        Self {
            per_class: vec![0; num_classes],
            ..Self::default()
        }
    }

    pub fn add(&mut self, event: &DetectionEvent) {
        let k = self.per_class.len();
        let cam = self
            .per_camera
            .entry(event.camera.clone())
            .or_insert_with(|| vec![0; k]);
        for d in &event.detections {
            self.per_class[d.class] += 1;
            cam[d.class] += 1;
        }
        self.events += 1;
        self.vehicles += event.detections.len() as u64;
    }
}

/// Runs the simulator and writes wire-format lines to `out`.
pub fn write_simulation<W: Write>(
    config: &SimulatorConfig,
    mut out: W,
) -> std::io::Result<SimulationSummary> {
    let sim = Simulator::new(config)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let mut summary = SimulationSummary::new(config.num_classes());
    for event in sim {
        summary.add(&event);
        out.write_all(encode_event(&event).as_bytes())?;
    }
    out.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cams(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("cam{i}")).collect()
    }

    #[test]
    fn zero_rate_gives_empty_events() {
        let cfg = SimulatorConfig::uniform(cams(2), 15, 0.0, 60_000, 1);
        let events: Vec<_> = simulate_cameras(&cfg).unwrap().collect();
        assert_eq!(events.len(), 120);
        assert!(events.iter().all(|e| e.detections.is_empty()));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SimulatorConfig::uniform(cams(3), 4, 30.0, 120_000, 42);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let sa = write_simulation(&cfg, &mut a).unwrap();
        let sb = write_simulation(&cfg, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        let mut c = Vec::new();
        write_simulation(&SimulatorConfig { seed: 43, ..cfg }, &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn events_are_valid_and_ordered() {
        let cfg = SimulatorConfig::uniform(cams(2), 15, 120.0, 30_000, 7);
        let mut last = 0;
        for e in simulate_cameras(&cfg).unwrap() {
            assert!(e.timestamp_ms >= last);
            last = e.timestamp_ms;
            assert!(e.validate_classes(15).is_ok());
            for d in &e.detections {
                assert!((0.5..=1.0).contains(&d.confidence));
                let [cx, cy, w, h] = d.bbox;
                assert!(cx - w / 2.0 >= -1e-12 && cx + w / 2.0 <= 1.0 + 1e-12);
                assert!(cy - h / 2.0 >= -1e-12 && cy + h / 2.0 <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn bad_configs() {
        let mut cfg = SimulatorConfig::uniform(cams(1), 2, 1.0, 1000, 0);
        cfg.rates[0][1] = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SimulatorConfig::uniform(cams(1), 2, 1.0, 1000, 0);
        cfg.frame_interval_ms = 0;
        assert!(cfg.validate().is_err());
        assert!(SimulatorConfig::uniform(vec![], 2, 1.0, 1000, 0)
            .validate()
            .is_err());
    }
}
