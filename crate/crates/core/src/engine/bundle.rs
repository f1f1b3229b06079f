use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InvariantReport, ScenarioConfig, SimulationResult, TrajectoryRecord};
use crate::demand::{read_requests, write_requests, TripRequest};
use crate::dispatch::{read_dispatch_log, write_dispatch_log, DispatchRecord};
use crate::energy::{read_sessions, write_sessions, ChargingSession};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::traffic::write_impact;

pub const DISPATCH_FILE: &str = "dispatch.csv";
pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const CHARGING_FILE: &str = "charging.csv";
pub const REQUESTS_FILE: &str = "requests.csv";
pub const IMPACT_FILE: &str = "impact.csv";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config: ScenarioConfig,
    pub end_min: f64,
    pub metrics: MetricsReport,
    pub invariants: InvariantReport,
}

/// Everything read back from a result directory.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub metrics: MetricsFile,
    pub dispatch: Vec<DispatchRecord>,
    pub charging: Vec<ChargingSession>,
    pub requests: Vec<TripRequest>,
}

pub fn write_trajectories(path: impl AsRef<Path>, rows: &[TrajectoryRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    w.write_record([
        "shuttle_id",
        "start_min",
        "end_min",
        "activity",
        "from_node",
        "to_node",
        "edge",
        "distance_mi",
        "occupancy",
        "battery_kwh",
    ])
    .map_err(|e| Error::parse(path, e))?;
    for r in rows {
        w.serialize((
            r.shuttle_id,
            r.start_min,
            r.end_min,
            r.activity,
            r.from_node,
            r.to_node,
            r.edge,
            r.distance_mi,
            r.occupancy,
            r.battery_kwh,
        ))
        .map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_bundle(dir: impl AsRef<Path>, result: &SimulationResult) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dispatch_log(dir.join(DISPATCH_FILE), &result.dispatch)?;
    write_trajectories(dir.join(TRAJECTORY_FILE), &result.trajectories)?;
    write_sessions(dir.join(CHARGING_FILE), &result.charging)?;
    write_requests(dir.join(REQUESTS_FILE), &result.requests)?;
    if let Some(rows) = &result.impact {
        write_impact(dir.join(IMPACT_FILE), rows)?;
    }
    let file = MetricsFile {
        config: result.config.clone(),
        end_min: result.end_min,
        metrics: result.metrics.clone(),
        invariants: result.invariants.clone(),
    };
    let path = dir.join(METRICS_FILE);
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::parse(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let path = dir.join(METRICS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let metrics: MetricsFile = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
    Ok(Bundle {
        metrics,
        dispatch: read_dispatch_log(dir.join(DISPATCH_FILE))?,
        charging: read_sessions(dir.join(CHARGING_FILE))?,
        requests: read_requests(dir.join(REQUESTS_FILE))?,
    })
}
