//! Deterministic queue-based traffic simulator.

pub mod builders;
pub mod engine;
pub mod network;
pub mod scenario;

pub use engine::{
    IntervalCounters, Metrics, MetricsSummary, SignalState, Simulation, Vehicle,
    SERVICE_INTERVAL_S, YELLOW_S,
};
pub use network::{
    Endpoint, Intersection, IntersectionId, Lane, LaneId, LaneLink, LinkId, Phase, Point, Road,
    RoadId, RoadNetwork,
};
pub use scenario::{jitter_flow, load_scenario, Demand, FlowSpec, Route, Scenario, ScenarioFile};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("expected {expected} phase commands, got {got}")]
    CommandCount { expected: usize, got: usize },
    #[error("intersection {intersection}: phase {phase} out of range (P = {num_phases})")]
    InvalidPhase {
        intersection: usize,
        phase: usize,
        num_phases: usize,
    },
}
