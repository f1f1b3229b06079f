use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_with_inputs, write_bundle, DemandProfile, InvariantReport, ScenarioConfig, ScenarioInputs};
use crate::demand::TripRequest;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

/// Axis values; the grid is their cross product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub fleet_size: Vec<u32>,
    pub max_wait_min: Vec<f64>,
    pub detour_threshold: Vec<f64>,
    pub charging_points: Vec<u32>,
    pub demand: Vec<DemandProfile>,
    /// Used when the caller does not pass a seed count.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub network: PathBuf,
    pub stops: PathBuf,
    pub od_present: PathBuf,
    pub od_futuristic: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell_min: Option<f64>,
}

impl GridSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut g: GridSpec = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if let Some(dir) = path.parent() {
            for p in [&mut g.network, &mut g.stops, &mut g.od_present, &mut g.od_futuristic] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(g)
    }
}

/// Cross product in the order demand, fleet, wait, detour, points, seed.
pub fn expand_grid(grid: &GridSpec, seeds: &[u64]) -> Result<Vec<ScenarioConfig>> {
    let seeds = if seeds.is_empty() { &grid.seeds[..] } else { seeds };
    if seeds.is_empty()
        || grid.fleet_size.is_empty()
        || grid.max_wait_min.is_empty()
        || grid.detour_threshold.is_empty()
        || grid.charging_points.is_empty()
        || grid.demand.is_empty()
    {
        return Err(Error::Config("grid has an empty axis".into()));
    }
    let mut out = Vec::new();
    for &demand in &grid.demand {
        let od = match demand {
            DemandProfile::Present => &grid.od_present,
            DemandProfile::Futuristic => &grid.od_futuristic,
        };
        for &fleet_size in &grid.fleet_size {
            for &max_wait_min in &grid.max_wait_min {
                for &detour_threshold in &grid.detour_threshold {
                    for &charging_points in &grid.charging_points {
                        for &seed in seeds {
                            let cfg = ScenarioConfig {
                                fleet_size,
                                max_wait_min,
                                detour_threshold,
                                charging_points,
                                demand,
                                seed,
                                horizon_min: grid.horizon_min.unwrap_or(780.0),
                                dwell_min: grid.dwell_min.unwrap_or(0.5),
                                shuttle_speed_mph: 15.0,
                                capacity: 8,
                                network: grid.network.clone(),
                                stops: grid.stops.clone(),
                                od: Some(od.clone()),
                                requests: None,
                                depot_override: None,
                                background_traffic: false,
                                background_scale: 1.0,
                            };
                            cfg.validate()?;
                            out.push(cfg);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    pub jobs: usize,
    /// Write one result directory per run here.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub name: String,
    pub config: ScenarioConfig,
    pub metrics: Option<MetricsReport>,
    pub invariants: Option<InvariantReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub runs: Vec<RunSummary>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn run_name(index: usize, cfg: &ScenarioConfig) -> String {
    format!(
        "run{:04}_f{}_w{}_d{}_c{}_{}_s{}",
        index,
        cfg.fleet_size,
        cfg.max_wait_min,
        cfg.detour_threshold,
        cfg.charging_points,
        cfg.demand,
        cfg.seed
    )
}

type InputKey = (PathBuf, PathBuf, Option<PathBuf>, Option<PathBuf>);

fn input_key(cfg: &ScenarioConfig) -> InputKey {
    (cfg.network.clone(), cfg.stops.clone(), cfg.od.clone(), cfg.requests.clone())
}

/// Runs every configuration. A failing run is reported in its summary and
/// does not stop the others. Results do not depend on `jobs`.
pub fn run_sweep(configs: &[ScenarioConfig], opts: &SweepOptions) -> Result<SweepOutcome> {
    if configs.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    let mut inputs: HashMap<InputKey, Arc<ScenarioInputs>> = HashMap::new();
    for cfg in configs {
        if let std::collections::hash_map::Entry::Vacant(e) = inputs.entry(input_key(cfg)) {
            e.insert(Arc::new(ScenarioInputs::load(cfg)?));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    // requests depend only on inputs, demand and seed
    type ReqKey = (InputKey, DemandProfile, u64);
    let mut req_keys: Vec<ReqKey> = configs
        .iter()
        .map(|c| (input_key(c), c.demand, c.seed))
        .collect();
    req_keys.sort();
    req_keys.dedup();
    let generated: Vec<(ReqKey, std::result::Result<Arc<Vec<TripRequest>>, String>)> = pool.install(|| {
        req_keys
            .into_par_iter()
            .map(|key| {
                let cfg = configs
                    .iter()
                    .find(|c| input_key(c) == key.0 && c.demand == key.1 && c.seed == key.2)
                    .expect("key comes from a config");
                let r = inputs[&key.0].requests_for(cfg).map(Arc::new).map_err(|e| e.to_string());
                (key, r)
            })
            .collect()
    });
    let requests: HashMap<ReqKey, _> = generated.into_iter().collect();

    let runs: Vec<RunSummary> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(index, cfg)| {
                let name = run_name(index, cfg);
                let key = input_key(cfg);
                let outcome = requests[&(key.clone(), cfg.demand, cfg.seed)]
                    .clone()
                    .map_err(Error::Config)
                    .and_then(|reqs| run_with_inputs(cfg, &inputs[&key], reqs.as_ref().clone()))
                    .and_then(|res| {
                        if let Some(out) = &opts.out {
                            write_bundle(out.join(&name), &res)?;
                        }
                        Ok(res)
                    });
                match outcome {
                    Ok(res) => RunSummary {
                        index,
                        name,
                        config: cfg.clone(),
                        metrics: Some(res.metrics),
                        invariants: Some(res.invariants),
                        error: None,
                    },
                    Err(e) => RunSummary {
                        index,
                        name,
                        config: cfg.clone(),
                        metrics: None,
                        invariants: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    let aggregate = aggregate(&runs);
    if let Some(out) = &opts.out {
        write_runs(out.join("runs.csv"), &runs)?;
        write_aggregate(out.join("aggregate.csv"), &aggregate)?;
    }
    Ok(SweepOutcome { runs, aggregate })
}

/// Metric columns carried into the sweep tables.
pub const METRIC_COLUMNS: [&str; 11] = [
    "accepted_ratio",
    "median_wait_min",
    "median_trip_walk_ratio",
    "total_distance_mi",
    "empty_ratio",
    "idle_ratio",
    "capacity_utilization",
    "total_consumption_kwh",
    "charger_utilization",
    "inactive_wait_ratio",
    "charging_sessions",
];

pub fn metric_values(m: &MetricsReport) -> [Option<f64>; 11] {
    [
        Some(m.rider.accepted_ratio),
        m.rider.median_wait_min,
        m.rider.median_trip_walk_ratio,
        Some(m.vehicle.total_distance_mi),
        m.vehicle.empty_ratio,
        m.vehicle.idle_ratio,
        m.vehicle.capacity_utilization,
        Some(m.energy.total_consumption_kwh),
        Some(m.energy.charger_utilization),
        m.energy.inactive_wait_ratio,
        Some(m.energy.sessions as f64),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub fleet_size: u32,
    pub max_wait_min: f64,
    pub demand: DemandProfile,
    pub runs: usize,
    pub failed: usize,
    /// (mean, sample standard deviation) per metric column; None when no
    /// run reported the metric.
    pub stats: Vec<Option<(f64, f64)>>,
}

impl AggregateRow {
    pub fn mean(&self, column: &str) -> Option<f64> {
        let k = METRIC_COLUMNS.iter().position(|&c| c == column)?;
        self.stats[k].map(|s| s.0)
    }

    pub fn std(&self, column: &str) -> Option<f64> {
        let k = METRIC_COLUMNS.iter().position(|&c| c == column)?;
        self.stats[k].map(|s| s.1)
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// Groups runs by (fleet, max wait, demand), pooling seeds, detour
/// thresholds and charging points.
pub fn aggregate(runs: &[RunSummary]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(DemandProfile, u32, u64), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        let c = &r.config;
        groups
            .entry((c.demand, c.fleet_size, c.max_wait_min.to_bits()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((demand, fleet_size, wait_bits), group)| {
            let ok: Vec<&MetricsReport> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let stats = (0..METRIC_COLUMNS.len())
                .map(|k| {
                    let vals: Vec<f64> = ok.iter().filter_map(|m| metric_values(m)[k]).collect();
                    mean_std(&vals)
                })
                .collect();
            AggregateRow {
                fleet_size,
                max_wait_min: f64::from_bits(wait_bits),
                demand,
                runs: ok.len(),
                failed: group.len() - ok.len(),
                stats,
            }
        })
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_aggregate(path: impl AsRef<Path>, rows: &[AggregateRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut header = vec![
        "fleet_size".to_string(),
        "max_wait_min".to_string(),
        "demand".to_string(),
        "runs".to_string(),
        "failed".to_string(),
    ];
    for c in METRIC_COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
    }
    w.write_record(&header).map_err(|e| Error::parse(path, e))?;
    for r in rows {
        let mut rec = vec![
            r.fleet_size.to_string(),
            r.max_wait_min.to_string(),
            r.demand.to_string(),
            r.runs.to_string(),
            r.failed.to_string(),
        ];
        for s in &r.stats {
            rec.push(fmt_opt(s.map(|s| s.0)));
            rec.push(fmt_opt(s.map(|s| s.1)));
        }
        w.write_record(&rec).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_runs(path: impl AsRef<Path>, runs: &[RunSummary]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut header: Vec<String> = [
        "run",
        "fleet_size",
        "max_wait_min",
        "detour_threshold",
        "charging_points",
        "demand",
        "seed",
        "invariant_violations",
        "error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| Error::parse(path, e))?;
    for r in runs {
        let c = &r.config;
        let mut rec = vec![
            r.name.clone(),
            c.fleet_size.to_string(),
            c.max_wait_min.to_string(),
            c.detour_threshold.to_string(),
            c.charging_points.to_string(),
            c.demand.to_string(),
            c.seed.to_string(),
            r.invariants.as_ref().map_or(String::new(), |i| i.violations.len().to_string()),
            r.error.clone().unwrap_or_default(),
        ];
        match &r.metrics {
            Some(m) => rec.extend(metric_values(m).iter().map(|v| fmt_opt(*v))),
            None => rec.extend(METRIC_COLUMNS.iter().map(|_| String::new())),
        }
        w.write_record(&rec).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
