//! Versioned snapshot of a [`TrafficGraph`].
//!
//! The snapshot is newline-delimited JSON. The first line is a header,
//! `{"format":"roadsight-graph-snapshot","version":1}`; every later line is
//! one record:
//!
//! * `{"meta":{"config":{..},"classes":[..]}}` exactly once, before the rest
//! * `{"node":{"id":..,"label":..,"coords":[lat,lon]|null}}`
//! * `{"edge":{"from":..,"to":..,"length_m":..}}` one per directed edge
//! * `{"window":{"node":..,"start_ms":..,"counts":[..]}}`
//! * `{"late":{"node":..,"watermark":..,"dead_letter":[..]}}`
//!
//! Records appear in node-id order so identical graphs give identical bytes.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CameraNode, GraphConfig, GraphError, RoadEdge, TrafficGraph};
use crate::annotation::ClassMap;

pub const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_FORMAT: &str = "roadsight-graph-snapshot";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Record {
    Meta {
        config: GraphConfig,
        classes: Vec<String>,
    },
    Node(CameraNode),
    Edge(RoadEdge),
    Window {
        node: String,
        start_ms: i64,
        counts: Vec<u64>,
    },
    Late {
        node: String,
        watermark: Option<i64>,
        dead_letter: Vec<u64>,
    },
}

fn snap_err(version: Option<u32>, message: impl Into<String>) -> GraphError {
    GraphError::Snapshot {
        version,
        message: message.into(),
    }
}

impl TrafficGraph {
    pub fn snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_line(
            &mut out,
            &Header {
                format: SNAPSHOT_FORMAT.into(),
                version: SNAPSHOT_VERSION,
            },
        )?;
        write_line(
            &mut out,
            &Record::Meta {
                config: self.config,
                classes: self.classes.names().to_vec(),
            },
        )?;
        for e in self.nodes.values() {
            write_line(&mut out, &Record::Node(e.info.clone()))?;
        }
        for edge in self.edges() {
            write_line(&mut out, &Record::Edge(edge))?;
        }
        for (id, e) in &self.nodes {
            let state = e.state.lock().clone();
            for (start_ms, counts) in state.windows {
                write_line(
                    &mut out,
                    &Record::Window {
                        node: id.clone(),
                        start_ms,
                        counts,
                    },
                )?;
            }
            if state.watermark.is_some() || state.dead_letter.iter().any(|&c| c > 0) {
                write_line(
                    &mut out,
                    &Record::Late {
                        node: id.clone(),
                        watermark: state.watermark,
                        dead_letter: state.dead_letter,
                    },
                )?;
            }
        }
        Ok(())
    }

    pub fn snapshot_string(&self) -> String {
        let mut buf = Vec::new();
        self.snapshot(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("snapshot is utf-8")
    }

    pub fn restore<R: BufRead>(input: R) -> Result<Self, GraphError> {
        let mut lines = input.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| snap_err(None, "empty snapshot"))?
            .map_err(|e| snap_err(None, e.to_string()))?;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| snap_err(None, format!("bad header: {e}")))?;
        if header.format != SNAPSHOT_FORMAT {
            return Err(snap_err(
                Some(header.version),
                format!("not a graph snapshot (format {:?})", header.format),
            ));
        }
        if header.version != SNAPSHOT_VERSION {
            return Err(snap_err(
                Some(header.version),
                format!("unsupported version, expected {SNAPSHOT_VERSION}"),
            ));
        }
        let v = Some(header.version);

        let mut graph: Option<TrafficGraph> = None;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| snap_err(v, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|e| snap_err(v, format!("line {line_no}: {e}")))?;
            let at = |e: GraphError| snap_err(v, format!("line {line_no}: {e}"));

            if let Record::Meta { config, classes } = record {
                if graph.is_some() {
                    return Err(snap_err(v, format!("line {line_no}: second meta record")));
                }
                let classes = ClassMap::new(classes)
                    .map_err(|e| snap_err(v, format!("line {line_no}: {e}")))?;
                graph = Some(TrafficGraph::new(classes, config).map_err(at)?);
                continue;
            }
            let g = graph
                .as_mut()
                .ok_or_else(|| snap_err(v, format!("line {line_no}: record before meta")))?;
            let k = g.num_classes();
            match record {
                Record::Meta { .. } => unreachable!(),
                Record::Node(n) => g.add_node(&n.id, &n.label, n.coords).map_err(at)?,
                Record::Edge(e) => g.insert_edge(e).map_err(at)?,
                Record::Window {
                    node,
                    start_ms,
                    counts,
                } => {
                    if counts.len() != k {
                        return Err(at(GraphError::ClassMapMismatch {
                            expected: k,
                            got: counts.len(),
                        }));
                    }
                    if g.config.window_start(start_ms) != start_ms {
                        return Err(snap_err(
                            v,
                            format!("line {line_no}: window start {start_ms} not aligned"),
                        ));
                    }
                    let entry = g
                        .nodes
                        .get(&node)
                        .ok_or_else(|| at(GraphError::UnknownNode(node)))?;
                    entry.state.lock().windows.insert(start_ms, counts);
                }
                Record::Late {
                    node,
                    watermark,
                    dead_letter,
                } => {
                    if dead_letter.len() != k {
                        return Err(at(GraphError::ClassMapMismatch {
                            expected: k,
                            got: dead_letter.len(),
                        }));
                    }
                    let entry = g
                        .nodes
                        .get(&node)
                        .ok_or_else(|| at(GraphError::UnknownNode(node)))?;
                    let mut state = entry.state.lock();
                    state.watermark = watermark;
                    state.dead_letter = dead_letter;
                }
            }
        }
        graph.ok_or_else(|| snap_err(v, "missing meta record"))
    }

    pub fn restore_str(text: &str) -> Result<Self, GraphError> {
        Self::restore(text.as_bytes())
    }

    // Single directed edge, as stored; used when rebuilding from a snapshot.
    fn insert_edge(&mut self, edge: RoadEdge) -> Result<(), GraphError> {
        self.add_road(&edge.from, &edge.to, edge.length_m, true)
    }
}

fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(std::io::Error::other)?;
    out.write_all(b"\n")
}
