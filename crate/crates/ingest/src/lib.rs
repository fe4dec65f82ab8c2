//! Transport between cameras and the traffic graph: the event wire format,
//! a TCP ingestion server, file replay and a synthetic camera simulator.

pub mod apply;
pub mod replay;
pub mod server;
pub mod simulate;
pub mod wire;

pub use apply::{
    apply_event, event_counts, IngestStats, Rejection, StatsSnapshot, DEFAULT_CONFIDENCE_CUTOFF,
};
pub use replay::{replay_file, replay_reader, ReplayOptions, ReplaySummary};
pub use server::{send_lines, ClientReport, IngestServer, ServerConfig};
pub use simulate::{
    simulate_cameras, write_simulation, SimulationSummary, Simulator, SimulatorConfig,
};
pub use wire::{
    decode_event, encode_event, DetectionEvent, EventDetection, WireError, WIRE_VERSION,
};
