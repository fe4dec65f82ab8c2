use std::sync::Arc;
use std::time::Duration;

use roadsight_core::annotation::ClassMap;
use roadsight_core::graph::{GraphConfig, TrafficGraph};
use roadsight_ingest::{
    encode_event, send_lines, DetectionEvent, EventDetection, IngestServer, ServerConfig,
};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

const T0: i64 = 1_700_000_000_000;

fn graph() -> Arc<TrafficGraph> {
    let mut g = TrafficGraph::new(ClassMap::vehicles(), GraphConfig::default()).unwrap();
    for id in ["A", "B", "C"] {
        g.add_node(id, id, None).unwrap();
    }
    Arc::new(g)
}

fn config() -> ServerConfig {
    ServerConfig {
        listen: "127.0.0.1:0".into(),
        ..ServerConfig::default()
    }
}

/// Event `i` carries `i % 4 + 1` detections of class `i % 15`.
fn event(cam: &str, i: i64) -> DetectionEvent {
    let n = (i % 4 + 1) as usize;
    let d = EventDetection {
        class: (i % 15) as usize,
        confidence: 0.9,
        bbox: [0.5, 0.5, 0.1, 0.1],
    };
    DetectionEvent::new(cam, T0 + i * 700, vec![d; n])
}

fn graph_total(g: &TrafficGraph) -> u64 {
    g.class_totals().iter().sum()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn two_connections_fifty_events_each() {
    let g = graph();
    let server = IngestServer::start(config(), g.clone()).await.unwrap();
    let addr = server.local_addr();
    let lines = |cam: &'static str| (0..50).map(move |i| encode_event(&event(cam, i)));
    let (a, b) = tokio::join!(send_lines(addr, lines("A")), send_lines(addr, lines("B")));
    let (a, b) = (a.unwrap(), b.unwrap());
    assert_eq!((a.sent, a.ok, b.sent, b.ok), (50, 50, 50, 50));
    let stats = server.shutdown().await;
    let expected: u64 = 2 * (0..50).map(|i| (i % 4 + 1) as u64).sum::<u64>();
    assert_eq!(graph_total(&g), expected);
    assert_eq!(stats.applied, 100);
    assert_eq!(stats.vehicles, expected);
    assert_eq!(stats.connections, 2);
    assert_eq!(g.node_totals("A").unwrap(), g.node_totals("B").unwrap());
}

#[tokio::test]
async fn unknown_camera_is_tallied() {
    let g = graph();
    let server = IngestServer::start(config(), g.clone()).await.unwrap();
    let report = send_lines(
        server.local_addr(),
        vec![encode_event(&event("Z", 1)), encode_event(&event("A", 2))],
    )
    .await
    .unwrap();
    assert_eq!((report.ok, report.rejected), (1, 1));
    // still serving
    let again = send_lines(server.local_addr(), vec![encode_event(&event("C", 3))])
        .await
        .unwrap();
    assert_eq!(again.ok, 1);
    let stats = server.shutdown().await;
    assert_eq!(stats.unknown_camera, 1);
    assert_eq!(stats.applied, 2);
}

#[tokio::test]
async fn decode_error_closes_only_that_connection() {
    let g = graph();
    let server = IngestServer::start(config(), g.clone()).await.unwrap();
    let addr = server.local_addr();

    let mut healthy = TcpStream::connect(addr).await.unwrap();
    healthy
        .write_all(encode_event(&event("A", 0)).as_bytes())
        .await
        .unwrap();

    let bad = vec![
        encode_event(&event("B", 1)),
        "{\"v\":1,\"camera\":\"B\",\"ts\":\n".to_string(),
        encode_event(&event("B", 2)),
    ];
    let report = send_lines(addr, bad).await.unwrap();
    assert_eq!(report.ok, 1);
    assert_eq!(report.errors.len(), 1);
    assert!(
        report.errors[0].starts_with("error "),
        "{:?}",
        report.errors
    );

    // The first connection is unaffected.
    healthy
        .write_all(encode_event(&event("A", 3)).as_bytes())
        .await
        .unwrap();
    let mut answers = BufReader::new(&mut healthy).lines();
    assert_eq!(answers.next_line().await.unwrap().unwrap(), "ok 1");
    assert_eq!(answers.next_line().await.unwrap().unwrap(), "ok 2");

    let stats = server.shutdown().await;
    assert_eq!(stats.decode_errors, 1);
    assert_eq!(stats.applied, 3);
}

#[tokio::test]
async fn version_error_is_reported() {
    let server = IngestServer::start(config(), graph()).await.unwrap();
    let report = send_lines(
        server.local_addr(),
        vec!["{\"v\":7,\"camera\":\"A\",\"ts\":5,\"detections\":[]}\n".to_string()],
    )
    .await
    .unwrap();
    assert!(
        report.errors[0].contains("version 7"),
        "{:?}",
        report.errors
    );
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn shutdown_mid_stream_keeps_acknowledged_events() {
    let g = graph();
    let server = IngestServer::start(config(), g.clone()).await.unwrap();
    let stream = TcpStream::connect(server.local_addr()).await.unwrap();
    let (rd, mut wr) = stream.into_split();

    // Instrumented client: a writer that keeps sending, a reader that counts
    // the answers it receives.
    let writer = tokio::spawn(async move {
        for i in 0..20_000 {
            let line = encode_event(&event("A", i));
            if wr.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
    });
    let (seen_tx, seen_rx) = tokio::sync::oneshot::channel();
    let reader = tokio::spawn(async move {
        let mut acked = 0u64;
        let mut vehicles = 0u64;
        let mut seen_tx = Some(seen_tx);
        let mut answers = BufReader::new(rd).lines();
        while let Ok(Some(answer)) = answers.next_line().await {
            assert!(answer.starts_with("ok "), "{answer}");
            vehicles += (acked as i64 % 4 + 1) as u64;
            acked += 1;
            if acked == 200 {
                seen_tx.take().unwrap().send(()).unwrap();
            }
        }
        (acked, vehicles)
    });

    tokio::time::timeout(Duration::from_secs(10), seen_rx)
        .await
        .unwrap()
        .unwrap();
    let stats = server.shutdown().await;
    let (acked, acked_vehicles) = reader.await.unwrap();
    writer.await.unwrap();

    assert!(acked >= 200);
    // Every answered event is in the graph, and the graph holds exactly what
    // the server applied.
    assert!(stats.applied >= acked);
    assert!(graph_total(&g) >= acked_vehicles);
    assert_eq!(graph_total(&g), stats.vehicles);
}

#[tokio::test]
async fn bind_failure_is_an_error() {
    let first = IngestServer::start(config(), graph()).await.unwrap();
    let taken = ServerConfig {
        listen: first.local_addr().to_string(),
        ..ServerConfig::default()
    };
    assert!(IngestServer::start(taken, graph()).await.is_err());
    first.shutdown().await;
}
