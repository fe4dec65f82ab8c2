//! Road network of camera nodes with per-node, per-class vehicle counts in
//! tumbling time windows.
//!
//! Each camera is a node. Roads are directed edges carrying a length in
//! meters; a two-way road is stored as two opposite edges of equal length,
//! a one-way road as a single edge.
//!
//! Window state lives behind a per-node mutex, so ingestion for different
//! nodes proceeds in parallel through `&self` while updates to one node are
//! serialized. Topology changes need `&mut self`.

mod definition;
mod snapshot;

pub use definition::{parse_graph_definition, write_graph_definition, GraphDefinition, RoadSpec};
pub use snapshot::SNAPSHOT_VERSION;

use std::collections::BTreeMap;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::ClassMap;

pub const DEFAULT_WINDOW_MS: i64 = 60_000;
pub const DEFAULT_LATENESS_MS: i64 = 5 * 60_000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("road from {0:?} to itself")]
    SelfLoop(String),
    #[error("road length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("road {0:?} -> {1:?} already exists")]
    DuplicateEdge(String, String),
    #[error("count vector has {got} entries, class map has {expected}")]
    ClassMapMismatch { expected: usize, got: usize },
    #[error("invalid time range [{start}, {end})")]
    InvalidRange { start: i64, end: i64 },
    #[error("invalid graph config: {0}")]
    InvalidConfig(String),
    #[error("graph definition line {line}: {message}")]
    Definition { line: usize, message: String },
    #[error("snapshot (version {version:?}): {message}")]
    Snapshot {
        version: Option<u32>,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Tumbling window width in milliseconds.
    pub window_ms: i64,
    /// Events older than the node's newest timestamp by more than this are
    /// tallied as dead letters instead of reopening old windows. `None`
    /// accepts any lateness.
    pub lateness_ms: Option<i64>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            window_ms: DEFAULT_WINDOW_MS,
            lateness_ms: Some(DEFAULT_LATENESS_MS),
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.window_ms <= 0 {
            return Err(GraphError::InvalidConfig(format!(
                "window width {} ms",
                self.window_ms
            )));
        }
        if matches!(self.lateness_ms, Some(l) if l < 0) {
            return Err(GraphError::InvalidConfig(
                "negative lateness horizon".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn window_start(&self, ts_ms: i64) -> i64 {
        ts_ms.div_euclid(self.window_ms) * self.window_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraNode {
    pub id: String,
    pub label: String,
    /// `(lat, lon)`, stored as given.
    pub coords: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub from: String,
    pub to: String,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowWindow {
    pub node: String,
    pub start_ms: i64,
    pub width_ms: i64,
    /// One entry per class; classes outside a query's filter read zero.
    pub counts: Vec<u64>,
}

impl FlowWindow {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Windowed { window_start_ms: i64 },
    DeadLettered,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct NodeState {
    pub windows: BTreeMap<i64, Vec<u64>>,
    pub watermark: Option<i64>,
    pub dead_letter: Vec<u64>,
}

#[derive(Debug)]
struct NodeEntry {
    info: CameraNode,
    state: Mutex<NodeState>,
}

#[derive(Debug)]
pub struct TrafficGraph {
    config: GraphConfig,
    classes: ClassMap,
    nodes: BTreeMap<String, NodeEntry>,
    edges: BTreeMap<(String, String), f64>,
}

impl TrafficGraph {
    pub fn new(classes: ClassMap, config: GraphConfig) -> Result<Self, GraphError> {
        config.validate()?;
        Ok(Self {
            config,
            classes,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
        })
    }

    pub fn from_definition(
        def: &GraphDefinition,
        classes: ClassMap,
        config: GraphConfig,
    ) -> Result<Self, GraphError> {
        let mut g = Self::new(classes, config)?;
        for n in &def.nodes {
            g.add_node(&n.id, &n.label, n.coords)?;
        }
        for r in &def.roads {
            g.add_road(&r.from, &r.to, r.length_m, r.one_way)?;
        }
        Ok(g)
    }

    pub fn config(&self) -> GraphConfig {
        self.config
    }

    pub fn classes(&self) -> &ClassMap {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn add_node(
        &mut self,
        id: &str,
        label: &str,
        coords: Option<(f64, f64)>,
    ) -> Result<(), GraphError> {
        if self.nodes.contains_key(id) {
            return Err(GraphError::DuplicateNode(id.to_string()));
        }
        let k = self.num_classes();
        self.nodes.insert(
            id.to_string(),
            NodeEntry {
                info: CameraNode {
                    id: id.to_string(),
                    label: label.to_string(),
                    coords,
                },
                state: Mutex::new(NodeState {
                    dead_letter: vec![0; k],
                    ..NodeState::default()
                }),
            },
        );
        Ok(())
    }

    /// Adds a road: one edge `from -> to` when `one_way`, otherwise both
    /// directions with the same length.
    pub fn add_road(
        &mut self,
        from: &str,
        to: &str,
        length_m: f64,
        one_way: bool,
    ) -> Result<(), GraphError> {
        for id in [from, to] {
            if !self.nodes.contains_key(id) {
                return Err(GraphError::UnknownNode(id.to_string()));
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop(from.to_string()));
        }
        if !(length_m.is_finite() && length_m > 0.0) {
            return Err(GraphError::InvalidLength(length_m));
        }
        let forward = (from.to_string(), to.to_string());
        let backward = (to.to_string(), from.to_string());
        if self.edges.contains_key(&forward) {
            return Err(GraphError::DuplicateEdge(forward.0, forward.1));
        }
        if !one_way && self.edges.contains_key(&backward) {
            return Err(GraphError::DuplicateEdge(backward.0, backward.1));
        }
        self.edges.insert(forward, length_m);
        if !one_way {
            self.edges.insert(backward, length_m);
        }
        Ok(())
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Option<&CameraNode> {
        self.nodes.get(id).map(|n| &n.info)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CameraNode> {
        self.nodes.values().map(|n| &n.info)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = RoadEdge> + '_ {
        self.edges.iter().map(|((from, to), &length_m)| RoadEdge {
            from: from.clone(),
            to: to.clone(),
            length_m,
        })
    }

    pub fn edge_length(&self, from: &str, to: &str) -> Option<f64> {
        self.edges.get(&(from.to_string(), to.to_string())).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Adds per-class counts to the window containing `ts_ms`.
    pub fn ingest_counts(
        &self,
        node: &str,
        ts_ms: i64,
        counts: &[u64],
    ) -> Result<IngestOutcome, GraphError> {
        let entry = self
            .nodes
            .get(node)
            .ok_or_else(|| GraphError::UnknownNode(node.to_string()))?;
        let k = self.num_classes();
        if counts.len() != k {
            return Err(GraphError::ClassMapMismatch {
                expected: k,
                got: counts.len(),
            });
        }

        let mut state = entry.state.lock();
        if let (Some(mark), Some(lateness)) = (state.watermark, self.config.lateness_ms) {
            if ts_ms < mark.saturating_sub(lateness) {
                for (slot, c) in state.dead_letter.iter_mut().zip(counts) {
                    *slot += c;
                }
                return Ok(IngestOutcome::DeadLettered);
            }
        }
        state.watermark = Some(state.watermark.map_or(ts_ms, |m| m.max(ts_ms)));
        let start = self.config.window_start(ts_ms);
        let window = state.windows.entry(start).or_insert_with(|| vec![0; k]);
        for (slot, c) in window.iter_mut().zip(counts) {
            *slot += c;
        }
        Ok(IngestOutcome::Windowed {
            window_start_ms: start,
        })
    }

    fn class_mask(&self, classes: Option<&[usize]>) -> Vec<bool> {
        let k = self.num_classes();
        match classes {
            None => vec![true; k],
            Some(list) => {
                let mut mask = vec![false; k];
                for &c in list {
                    if c < k {
                        mask[c] = true;
                    }
                }
                mask
            }
        }
    }

    fn check_range(start_ms: i64, end_ms: i64) -> Result<(), GraphError> {
        if start_ms > end_ms {
            return Err(GraphError::InvalidRange {
                start: start_ms,
                end: end_ms,
            });
        }
        Ok(())
    }

    /// Windows intersecting `[start_ms, end_ms)`, oldest first, with empty
    /// windows zero-filled. With a class filter, other classes read zero.
    pub fn query_flow(
        &self,
        node: &str,
        start_ms: i64,
        end_ms: i64,
        classes: Option<&[usize]>,
    ) -> Result<Vec<FlowWindow>, GraphError> {
        let entry = self
            .nodes
            .get(node)
            .ok_or_else(|| GraphError::UnknownNode(node.to_string()))?;
        Self::check_range(start_ms, end_ms)?;
        if start_ms == end_ms {
            return Ok(Vec::new());
        }
        let mask = self.class_mask(classes);
        let width = self.config.window_ms;
        let first = self.config.window_start(start_ms);
        let last = self.config.window_start(end_ms - 1);

        let state = entry.state.lock();
        let mut out = Vec::with_capacity(((last - first) / width + 1) as usize);
        let mut start = first;
        while start <= last {
            let counts = match state.windows.get(&start) {
                Some(c) => c
                    .iter()
                    .zip(&mask)
                    .map(|(&n, &keep)| if keep { n } else { 0 })
                    .collect(),
                None => vec![0; mask.len()],
            };
            out.push(FlowWindow {
                node: node.to_string(),
                start_ms: start,
                width_ms: width,
                counts,
            });
            start += width;
        }
        Ok(out)
    }

    fn range_total(&self, entry: &NodeEntry, start_ms: i64, end_ms: i64, mask: &[bool]) -> u64 {
        if start_ms == end_ms {
            return 0;
        }
        let first = self.config.window_start(start_ms);
        let last = self.config.window_start(end_ms - 1);
        let state = entry.state.lock();
        state
            .windows
            .range(first..=last)
            .flat_map(|(_, c)| c.iter().zip(mask).filter(|(_, k)| **k).map(|(n, _)| *n))
            .sum()
    }

    /// Nodes ranked by total count over windows intersecting the range,
    /// descending, ties by node id ascending.
    pub fn top_nodes_by_flow(
        &self,
        start_ms: i64,
        end_ms: i64,
        classes: Option<&[usize]>,
        limit: usize,
    ) -> Result<Vec<(String, u64)>, GraphError> {
        Self::check_range(start_ms, end_ms)?;
        let mask = self.class_mask(classes);
        let mut ranked: Vec<(String, u64)> = self
            .nodes
            .iter()
            .map(|(id, e)| (id.clone(), self.range_total(e, start_ms, end_ms, &mask)))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(limit);
        Ok(ranked)
    }

    /// Per-class totals over every window of `node`.
    pub fn node_totals(&self, node: &str) -> Result<Vec<u64>, GraphError> {
        let entry = self
            .nodes
            .get(node)
            .ok_or_else(|| GraphError::UnknownNode(node.to_string()))?;
        let state = entry.state.lock();
        let mut totals = vec![0; self.num_classes()];
        for counts in state.windows.values() {
            for (t, c) in totals.iter_mut().zip(counts) {
                *t += c;
            }
        }
        Ok(totals)
    }

    /// Per-class totals over all nodes and windows.
    pub fn class_totals(&self) -> Vec<u64> {
        let mut totals = vec![0; self.num_classes()];
        for id in self.nodes.keys() {
            for (t, c) in totals
                .iter_mut()
                .zip(self.node_totals(id).unwrap_or_default())
            {
                *t += c;
            }
        }
        totals
    }

    /// Per-class counts that arrived past the lateness horizon.
    pub fn dead_letters(&self, node: &str) -> Result<Vec<u64>, GraphError> {
        self.nodes
            .get(node)
            .map(|e| e.state.lock().dead_letter.clone())
            .ok_or_else(|| GraphError::UnknownNode(node.to_string()))
    }

    pub fn window_count(&self) -> usize {
        self.nodes
            .values()
            .map(|e| e.state.lock().windows.len())
            .sum()
    }

    /// Every stored (non-empty) window, ordered by node then start time.
    pub fn all_windows(&self) -> Vec<FlowWindow> {
        let width = self.config.window_ms;
        let mut out = Vec::new();
        for (id, e) in &self.nodes {
            let state = e.state.lock();
            out.extend(state.windows.iter().map(|(&start_ms, counts)| FlowWindow {
                node: id.clone(),
                start_ms,
                width_ms: width,
                counts: counts.clone(),
            }));
        }
        out
    }
}

impl Clone for TrafficGraph {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            classes: self.classes.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|(id, e)| {
                    (
                        id.clone(),
                        NodeEntry {
                            info: e.info.clone(),
                            state: Mutex::new(e.state.lock().clone()),
                        },
                    )
                })
                .collect(),
            edges: self.edges.clone(),
        }
    }
}

impl PartialEq for TrafficGraph {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.classes == other.classes
            && self.edges == other.edges
            && self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|((a_id, a), (b_id, b))| {
                    a_id == b_id && a.info == b.info && *a.state.lock() == *b.state.lock()
                })
    }
}
