use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roadsight_core::annotation::ClassMap;
use roadsight_core::graph::{GraphConfig, TrafficGraph, DEFAULT_LATENESS_MS};
use roadsight_ingest::{
    decode_event, encode_event, replay_file, replay_reader, simulate_cameras, write_simulation,
    DetectionEvent, EventDetection, ReplayOptions, SimulatorConfig,
};

fn graph_for(cameras: &[String]) -> TrafficGraph {
    let mut g = TrafficGraph::new(ClassMap::vehicles(), GraphConfig::default()).unwrap();
    for c in cameras {
        g.add_node(c, c, None).unwrap();
    }
    g
}

fn cams(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("cam{i}")).collect()
}

#[test]
fn poisson_totals_within_three_sigma() {
    // 60/min for 10 min: mean 600, sigma sqrt(600).
    let sigma = 600f64.sqrt();
    let mut totals = Vec::new();
    for seed in 0..100 {
        let mut cfg = SimulatorConfig::uniform(vec!["B".into()], 1, 60.0, 600_000, seed);
        cfg.frame_interval_ms = 1_000;
        let total: usize = simulate_cameras(&cfg)
            .unwrap()
            .map(|e| e.detections.len())
            .sum();
        totals.push(total as f64);
    }
    let outside = totals
        .iter()
        .filter(|&&t| (t - 600.0).abs() > 3.0 * sigma)
        .count();
    // P(|Z| > 3) is about 0.27%; allow one excursion in 100 runs.
    assert!(outside <= 1, "{outside} runs beyond 3 sigma: {totals:?}");
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    // standard error of the mean is sigma / 10
    assert!((mean - 600.0).abs() < 4.0 * sigma / 10.0, "mean {mean}");
}

fn event_strategy() -> impl Strategy<Value = DetectionEvent> {
    let det = (
        0usize..15,
        0.0f64..=1.0,
        prop::array::uniform4(0.0f64..=1.0),
    )
        .prop_map(|(class, confidence, bbox)| EventDetection {
            class,
            confidence,
            bbox,
        });
    (
        "[a-zA-Z0-9 _\"\\\\-]{1,12}",
        1i64..i64::MAX,
        prop::collection::vec(det, 0..8),
    )
        .prop_map(|(cam, ts, dets)| DetectionEvent::new(cam, ts, dets))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn wire_roundtrip(e in event_strategy()) {
        let line = encode_event(&e);
        prop_assert!(line.ends_with('\n') && line.matches('\n').count() == 1);
        let back = decode_event(&line).unwrap();
        prop_assert_eq!(&back, &e);
        for (a, b) in back.detections.iter().zip(&e.detections) {
            prop_assert_eq!(a.confidence.to_bits(), b.confidence.to_bits());
            for (x, y) in a.bbox.iter().zip(&b.bbox) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        prop_assert_eq!(encode_event(&back), line);
    }
}

/// Shuffles events inside consecutive blocks of `block_ms`, so no event
/// moves by more than one block.
fn shuffle_within(events: &mut [DetectionEvent], block_ms: i64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut i = 0;
    while i < events.len() {
        let block = events[i].timestamp_ms.div_euclid(block_ms);
        let mut j = i;
        while j < events.len() && events[j].timestamp_ms.div_euclid(block_ms) == block {
            j += 1;
        }
        events[i..j].shuffle(&mut rng);
        i = j;
    }
}

#[test]
fn simulate_replay_conserves_and_tolerates_reordering() {
    let cameras = cams(4);
    let mut cfg = SimulatorConfig::uniform(cameras.clone(), 15, 6.0, 30 * 60_000, 2024);
    cfg.frame_interval_ms = 2_000;
    let mut file = Vec::new();
    let emitted = write_simulation(&cfg, &mut file).unwrap();

    let g = graph_for(&cameras);
    let s = replay_reader(file.as_slice(), &g, ReplayOptions::default()).unwrap();
    assert_eq!(s.rejects(), 0);
    assert_eq!(s.dead_lettered, 0);
    assert_eq!(s.applied, emitted.events);
    assert_eq!(g.class_totals(), emitted.per_class);
    for (cam, per_class) in &emitted.per_camera {
        assert_eq!(&g.node_totals(cam).unwrap(), per_class);
    }

    let mut events: Vec<DetectionEvent> = simulate_cameras(&cfg).unwrap().collect();
    shuffle_within(&mut events, DEFAULT_LATENESS_MS - 60_000, 9);
    assert!(events
        .windows(2)
        .any(|w| w[0].timestamp_ms > w[1].timestamp_ms));
    let shuffled: String = events.iter().map(encode_event).collect();
    let unsorted = ReplayOptions {
        sort: false,
        ..ReplayOptions::default()
    };
    let g2 = graph_for(&cameras);
    let s2 = replay_reader(shuffled.as_bytes(), &g2, unsorted).unwrap();
    assert_eq!(s2.dead_lettered, 0);
    assert_eq!(g2, g);
    let (start, end) = (cfg.start_ms, cfg.start_ms + cfg.duration_ms);
    for cam in &cameras {
        assert_eq!(
            g2.query_flow(cam, start, end, None).unwrap(),
            g.query_flow(cam, start, end, None).unwrap()
        );
    }
    assert_eq!(
        g2.top_nodes_by_flow(start, end, None, 10).unwrap(),
        g.top_nodes_by_flow(start, end, None, 10).unwrap()
    );
}

#[test]
fn replay_from_disk_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let cfg = SimulatorConfig::uniform(cams(2), 15, 10.0, 60_000, 5);
    let emitted = write_simulation(&cfg, std::fs::File::create(&path).unwrap()).unwrap();
    let g = graph_for(&cams(2));
    let s = replay_file(&path, &g, ReplayOptions::default()).unwrap();
    assert_eq!(s.applied, emitted.events);
    let per_class: BTreeMap<_, _> = g.class_totals().into_iter().enumerate().collect();
    assert_eq!(per_class.values().sum::<u64>(), emitted.vehicles);
    assert!(replay_file(dir.path().join("nope"), &g, ReplayOptions::default()).is_err());
}
