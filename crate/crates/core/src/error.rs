use std::path::PathBuf;

use thiserror::Error;

use crate::dispatch::ShuttleId;
use crate::network::{EdgeId, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for anything that touches files or runs a scenario.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Energy(#[from] EnergyFault),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("invalid scenario config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True when the run itself failed rather than its inputs.
    pub fn is_scenario_fault(&self) -> bool {
        matches!(self, Error::Energy(_) | Error::Dispatch(_))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node {0} has non-finite coordinates")]
    BadCoordinates(NodeId),
    #[error("edge {edge} references missing node {node}")]
    DanglingEdge { edge: EdgeId, node: NodeId },
    #[error("edge {edge} has non-positive length")]
    NonPositiveLength { edge: EdgeId },
    #[error("edge {edge} has non-positive speed limit")]
    NonPositiveSpeed { edge: EdgeId },
    #[error("edge {edge} profile covers {covered} min, horizon is {horizon} min")]
    ProfileTooShort {
        edge: EdgeId,
        covered: f64,
        horizon: f64,
    },
    #[error("edge {edge} profile interval {interval} is {minutes} min, below free-flow {free_flow} min")]
    ProfileBelowFreeFlow {
        edge: EdgeId,
        interval: usize,
        minutes: f64,
        free_flow: f64,
    },
    #[error("edge {edge} profile violates FIFO between intervals {interval} and {next}", next = interval + 1)]
    NonFifoProfile { edge: EdgeId, interval: usize },
    #[error("shuttle subgraph is not strongly connected: {from} cannot reach {to}")]
    DisconnectedShuttleSubgraph { from: NodeId, to: NodeId },
    #[error("interval length and horizon must be positive")]
    BadTiming,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no {mode} path from {origin} to {dest}")]
    NoPath {
        origin: NodeId,
        dest: NodeId,
        mode: &'static str,
    },
    #[error("departure {depart} min is outside the network horizon {horizon} min")]
    DepartureOutsideHorizon { depart: f64, horizon: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no points to cluster")]
    EmptyPoints,
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("k = {k} exceeds the {distinct} distinct points")]
    TooManyClusters { k: usize, distinct: usize },
    #[error("network has no shuttle-permitted nodes")]
    NoShuttleNodes,
    #[error("empty parameter range")]
    EmptyRange,
    #[error("invalid stop plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemandError {
    #[error("transit share {0} is outside [0, 1]")]
    InvalidShare(f64),
    #[error("no eligible {kind} stop pair at least {min_mi} mi apart")]
    NoEligiblePair { kind: &'static str, min_mi: f64 },
    #[error("request {id}: {reason}")]
    InvalidRequest { id: u32, reason: String },
    #[error("invalid OD matrix: {0}")]
    InvalidOd(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispatchError {
    #[error("shuttle {shuttle}: event {event} is inconsistent with state {state}")]
    InvalidTransition {
        shuttle: ShuttleId,
        event: String,
        state: String,
    },
    #[error("shuttle {shuttle}: occupancy {occupancy} outside [0, {capacity}]")]
    Occupancy {
        shuttle: ShuttleId,
        occupancy: i64,
        capacity: u32,
    },
}

/// Battery would have gone below zero. Always a controller bug.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("energy fault: shuttle {shuttle} at {time_min:.3} min would drop to {level_kwh:.6} kWh")]
pub struct EnergyFault {
    pub shuttle: ShuttleId,
    pub time_min: f64,
    pub level_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no requests: accepted ratio is undefined")]
    NoRequests,
    #[error("GEH undefined when modeled + observed = 0")]
    GehUndefined,
    #[error("inconsistent logs: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("centroid {0} has no network node")]
    MissingCentroidNode(u32),
    #[error("impact series cover different edges or intervals")]
    MismatchedGrid,
}
