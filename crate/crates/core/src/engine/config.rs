use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::demand::{self, OdMatrix, TripRequest};
use crate::error::{Error, Result};
use crate::network::{load_network, NodeId, RoadNetwork};
use crate::planner::StopPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandProfile {
    Present,
    Futuristic,
}

impl DemandProfile {
    /// Fraction of boundary-crossing trips that use transit.
    pub fn transit_share(self) -> f64 {
        match self {
            DemandProfile::Present => 0.01,
            DemandProfile::Futuristic => 0.02,
        }
    }
}

impl fmt::Display for DemandProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandProfile::Present => "present",
            DemandProfile::Futuristic => "futuristic",
        })
    }
}

fn default_horizon() -> f64 {
    780.0
}
fn default_dwell() -> f64 {
    0.5
}
fn default_speed() -> f64 {
    15.0
}
fn default_capacity() -> u32 {
    8
}
fn default_scale() -> f64 {
    1.0
}

/// One scenario. Clock minute 0 is 06:00.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub fleet_size: u32,
    pub max_wait_min: f64,
    pub detour_threshold: f64,
    pub charging_points: u32,
    pub demand: DemandProfile,
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon_min: f64,
    #[serde(default = "default_dwell")]
    pub dwell_min: f64,
    #[serde(default = "default_speed")]
    pub shuttle_speed_mph: f64,
    #[serde(default = "default_capacity")]
    pub capacity: u32,
    pub network: PathBuf,
    pub stops: PathBuf,
    /// Requests are generated from this OD matrix unless `requests` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub od: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depot_override: Option<NodeId>,
    /// Simulate background cars and report the shuttles' effect on them.
    #[serde(default)]
    pub background_traffic: bool,
    /// Multiplier on OD counts for background cars.
    #[serde(default = "default_scale")]
    pub background_scale: f64,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes relative input paths relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.network);
        fix(&mut self.stops);
        if let Some(p) = self.od.as_mut() {
            fix(p);
        }
        if let Some(p) = self.requests.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.fleet_size == 0 {
            return bad("fleet_size must be at least 1");
        }
        if !(self.max_wait_min >= 0.0 && self.max_wait_min.is_finite()) {
            return bad("max_wait_min must be a non-negative number");
        }
        if !(self.detour_threshold >= 0.0 && self.detour_threshold.is_finite()) {
            return bad("detour_threshold must be a non-negative number");
        }
        if self.charging_points == 0 {
            return bad("charging_points must be at least 1");
        }
        if !(self.horizon_min > 0.0 && self.horizon_min.is_finite()) {
            return bad("horizon_min must be positive");
        }
        if !(self.dwell_min >= 0.0 && self.dwell_min.is_finite()) {
            return bad("dwell_min must be non-negative");
        }
        if !(self.shuttle_speed_mph > 0.0 && self.shuttle_speed_mph.is_finite()) {
            return bad("shuttle_speed_mph must be positive");
        }
        if self.capacity == 0 {
            return bad("capacity must be at least 1");
        }
        if !(self.background_scale >= 0.0 && self.background_scale.is_finite()) {
            return bad("background_scale must be non-negative");
        }
        if self.od.is_none() && self.requests.is_none() {
            return bad("either od or requests must be given");
        }
        if self.background_traffic && self.od.is_none() {
            return bad("background_traffic needs an od matrix");
        }
        Ok(())
    }

    /// True when every axis lies in the studied grid: fleet 2–6, wait
    /// 6/8/10 min, detour 0.5/1.0, one or two charging points.
    pub fn in_study_grid(&self) -> bool {
        (2..=6).contains(&self.fleet_size)
            && [6.0, 8.0, 10.0].contains(&self.max_wait_min)
            && [0.5, 1.0].contains(&self.detour_threshold)
            && (1..=2).contains(&self.charging_points)
    }
}

/// Loaded inputs shared by scenarios that use the same files.
#[derive(Clone, Debug)]
pub struct ScenarioInputs {
    pub network: Arc<RoadNetwork>,
    pub plan: Arc<StopPlan>,
    pub od: Option<Arc<OdMatrix>>,
    /// Fixed request list, when the scenario names one.
    pub requests: Option<Arc<Vec<TripRequest>>>,
}

impl ScenarioInputs {
    pub fn load(cfg: &ScenarioConfig) -> Result<Self> {
        let mut net = load_network(&cfg.network)?;
        net.set_shuttle_speed_cap(cfg.shuttle_speed_mph);
        if net.horizon_min() + 1e-9 < cfg.horizon_min {
            return Err(Error::Config(format!(
                "network horizon {} min is shorter than the scenario horizon {} min",
                net.horizon_min(),
                cfg.horizon_min
            )));
        }
        let plan = StopPlan::load(&cfg.stops)?;
        plan.validate(&net)?;
        let od = cfg.od.as_ref().map(OdMatrix::load).transpose()?;
        let requests = match &cfg.requests {
            Some(p) => Some(Arc::new(demand::load_requests(p, &plan, &net, cfg.horizon_min)?)),
            None => None,
        };
        Ok(Self {
            network: Arc::new(net),
            plan: Arc::new(plan),
            od: od.map(Arc::new),
            requests,
        })
    }

    /// Request list for `cfg`: the fixed list, or one generated from the OD
    /// matrix with the scenario's share and seed.
    pub fn requests_for(&self, cfg: &ScenarioConfig) -> Result<Vec<TripRequest>> {
        if let Some(r) = &self.requests {
            return Ok(r.as_ref().clone());
        }
        let od = self
            .od
            .as_ref()
            .ok_or_else(|| Error::Config("no od matrix or request file".into()))?;
        let reqs = demand::generate_requests(
            od,
            &self.plan,
            &self.network,
            cfg.demand.transit_share(),
            cfg.seed,
        )?;
        demand::validate_requests(&reqs, &self.plan, &self.network, cfg.horizon_min)?;
        Ok(reqs)
    }

    pub fn depot(&self, cfg: &ScenarioConfig) -> Result<NodeId> {
        let depot = cfg.depot_override.unwrap_or(self.plan.depot);
        if !self.network.is_shuttle_node(depot) {
            return Err(Error::Config(format!("depot {depot} is not on the shuttle route")));
        }
        Ok(depot)
    }
}
