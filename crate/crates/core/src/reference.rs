//! Synthetic suburban reference scenario.
//!
//! A half-mile street grid of about 3.75 square miles with two transit
//! stations a block apart near its middle. A spur off the east edge brings
//! the two-way shuttle road to 21.2 mi. Fifteen residential neighborhoods sit on
//! grid corners, each with short dead-end local streets. An arterial ring
//! with four gateways carries through traffic. Everything is generated from
//! fixed constants and a fixed seed, so the files are reproducible.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::demand::{apportion, Centroid, OdInterval, OdMatrix, OdTrip};
use crate::engine::{DemandProfile, GridSpec, ScenarioConfig};
use crate::error::{Error, Result};
use crate::network::{EdgeRecord, Node, NodeId, NetworkFile, RoadNetwork, DEFAULT_INTERVAL_MIN};
use crate::planner::{plan_stops, write_parcels, Parcel, StopPlan};
use crate::rng;

pub const SEED: u64 = 20_240_601;
pub const HORIZON_MIN: f64 = 780.0;
pub const ROUTE_LENGTH_MI: f64 = 21.2;
pub const STOP_COUNT: usize = 15;
pub const MAX_WALK_MIN: f64 = 6.0;

/// Hourly internal-to-external trips, present day.
pub const PRESENT_OUTGOING: [u32; 13] = [
    1300, 1350, 1100, 900, 800, 750, 750, 800, 850, 950, 1050, 1000, 880,
];
/// Hourly external-to-internal trips, present day.
pub const PRESENT_INCOMING: [u32; 13] = [
    700, 750, 800, 850, 850, 850, 900, 950, 1000, 1150, 1250, 1200, 1060,
];
pub const FUTURISTIC_OUTGOING_TOTAL: u32 = 11_290;
pub const FUTURISTIC_INCOMING_TOTAL: u32 = 11_160;
/// Hourly trips between neighborhoods; they never cross the boundary.
const INTERNAL_PER_HOUR: f64 = 300.0;

const ROUTE_STEP_MI: f64 = 0.1;
const ROUTE_MPH: f64 = 25.0;
const LOCAL_MPH: f64 = 25.0;
const CONNECTOR_MPH: f64 = 35.0;
const ARTERIAL_MPH: f64 = 45.0;
const SPOKE_MI: f64 = 0.1;
const NEIGHBORHOOD_RADIUS_MI: f64 = 0.18;
const SCATTERED_PARCELS: usize = 120;
const NEIGHBORHOOD_PARCELS: [usize; 15] = [
    240, 220, 200, 180, 160, 240, 200, 180, 160, 220, 200, 180, 160, 200, 140,
];
const GATEWAY_WEIGHTS: [f64; 4] = [0.35, 0.2, 0.3, 0.15];

/// Street spacing of the shuttle grid.
const BLOCK_MI: f64 = 0.5;
/// Grid extent in blocks: x in 0..=GRID_X, y in 0..=GRID_Y.
const GRID_X: i32 = 5;
const GRID_Y: i32 = 3;

/// Station positions in grid units.
const STATIONS: [[i32; 2]; 2] = [[2, 1], [3, 1]];

/// Shuttle road leaving the grid at its east edge; its length brings the
/// route to the nominal total.
const SPUR_FROM: [i32; 2] = [5, 2];

/// Neighborhood centers in grid units.
const CENTERS: [[i32; 2]; 15] = [
    [0, 0],
    [0, 1],
    [1, 0],
    [1, 1],
    [1, 2],
    [2, 0],
    [2, 2],
    [2, 3],
    [3, 0],
    [3, 2],
    [3, 3],
    [4, 0],
    [4, 1],
    [4, 2],
    [5, 1],
];

fn lattice(p: [i32; 2]) -> [f64; 2] {
    [p[0] as f64 * BLOCK_MI, p[1] as f64 * BLOCK_MI]
}

fn grid_edges() -> Vec<([i32; 2], [i32; 2])> {
    let mut edges = Vec::new();
    for x in 0..=GRID_X {
        for y in 0..=GRID_Y {
            if x < GRID_X {
                edges.push(([x, y], [x + 1, y]));
            }
            if y < GRID_Y {
                edges.push(([x, y], [x, y + 1]));
            }
        }
    }
    edges
}

const RING: [[f64; 2]; 4] = [[-1.0, -1.0], [5.5, -1.0], [5.5, 2.5], [-1.0, 2.5]];

/// Route edge to ring connectors.
const CONNECTORS: [([f64; 2], [f64; 2]); 4] = [
    ([0.0, 1.0], [-1.0, 1.0]),
    ([1.0, 1.5], [1.0, 2.5]),
    ([1.5, 0.0], [1.5, -1.0]),
    ([4.7, 1.0], [5.5, 1.0]),
];

/// Gateway position and the ring point it attaches to.
const GATEWAYS: [([f64; 2], [f64; 2]); 4] = [
    ([-2.0, 1.0], [-1.0, 1.0]),
    ([1.0, 3.5], [1.0, 2.5]),
    ([6.5, 1.0], [5.5, 1.0]),
    ([1.5, -2.0], [1.5, -1.0]),
];

#[derive(Clone, Copy)]
enum RoadClass {
    Route { overtake: bool },
    Local,
    Connector,
    Arterial,
}

impl RoadClass {
    fn mph(self) -> f64 {
        match self {
            RoadClass::Route { .. } => ROUTE_MPH,
            RoadClass::Local => LOCAL_MPH,
            RoadClass::Connector => CONNECTOR_MPH,
            RoadClass::Arterial => ARTERIAL_MPH,
        }
    }

    /// Peak slowdown on top of free flow. Shuttle roads stay below the
    /// shuttle's own speed cap even at the peak.
    fn peak_factor(self) -> f64 {
        match self {
            RoadClass::Route { .. } | RoadClass::Local => 0.3,
            RoadClass::Connector => 0.45,
            RoadClass::Arterial => 0.6,
        }
    }
}

/// Congestion level in [0, 1] at clock minute `t` (0 = 06:00).
fn peak_shape(t: f64) -> f64 {
    let bump = |center: f64, width: f64| (-((t - center) / width).powi(2)).exp();
    bump(120.0, 55.0).max(bump(675.0, 70.0))
}

#[derive(Default)]
struct Builder {
    nodes: Vec<Node>,
    index: HashMap<(i64, i64), NodeId>,
    edges: Vec<EdgeRecord>,
}

impl Builder {
    fn node(&mut self, p: [f64; 2]) -> NodeId {
        let key = ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32 + 1);
        self.nodes.push(Node {
            id,
            x_mi: p[0],
            y_mi: p[1],
        });
        self.index.insert(key, id);
        id
    }

    fn road(&mut self, a: [f64; 2], b: [f64; 2], class: RoadClass) {
        let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let (u, v) = (self.node(a), self.node(b));
        let free = 60.0 * len / class.mph();
        let intervals = (HORIZON_MIN / DEFAULT_INTERVAL_MIN).ceil() as usize;
        let profile: Vec<f64> = (0..intervals)
            .map(|i| {
                let mid = (i as f64 + 0.5) * DEFAULT_INTERVAL_MIN;
                free * (1.0 + class.peak_factor() * peak_shape(mid))
            })
            .collect();
        let (shuttle_ok, overtake_ok) = match class {
            RoadClass::Route { overtake } => (true, overtake),
            _ => (false, true),
        };
        for (from, to) in [(u, v), (v, u)] {
            self.edges.push(EdgeRecord {
                from,
                to,
                length_mi: len,
                speed_mph: class.mph(),
                shuttle_ok,
                overtake_ok,
                profile: Some(profile.clone()),
            });
        }
    }

    /// Straight road split into equal pieces of at most `step` miles.
    fn straight(&mut self, a: [f64; 2], b: [f64; 2], step: f64, class: RoadClass) {
        let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let n = (len / step - 1e-9).ceil().max(1.0) as usize;
        let at = |k: usize| {
            let f = k as f64 / n as f64;
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
        };
        for k in 0..n {
            self.road(at(k), at(k + 1), class);
        }
    }
}

/// Neighborhood centers in miles.
pub fn neighborhood_centers() -> Vec<[f64; 2]> {
    CENTERS.iter().map(|&c| lattice(c)).collect()
}

pub fn build_network() -> Result<RoadNetwork> {
    let mut b = Builder::default();
    let mut length = 0.0;
    for (u, v) in grid_edges() {
        let overtake = STATIONS.contains(&u) || STATIONS.contains(&v);
        b.straight(lattice(u), lattice(v), ROUTE_STEP_MI, RoadClass::Route { overtake });
        length += BLOCK_MI;
    }
    let spur_start = lattice(SPUR_FROM);
    let spur_end = [spur_start[0] + ROUTE_LENGTH_MI - length, spur_start[1]];
    b.straight(spur_start, spur_end, ROUTE_STEP_MI, RoadClass::Route { overtake: false });
    // diagonal local streets keep clear of the lattice
    for c in neighborhood_centers() {
        for (dx, dy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let d = SPOKE_MI / std::f64::consts::SQRT_2;
            let p1 = [c[0] + dx * d, c[1] + dy * d];
            let p2 = [c[0] + 2.0 * dx * d, c[1] + 2.0 * dy * d];
            b.road(c, p1, RoadClass::Local);
            b.road(p1, p2, RoadClass::Local);
        }
    }
    // ring vertices include every connector and gateway attachment point
    let mut stations: Vec<[f64; 2]> = RING.to_vec();
    stations.extend(CONNECTORS.iter().map(|c| c.1));
    stations.extend(GATEWAYS.iter().map(|g| g.1));
    for side in 0..4 {
        let (a, z) = (RING[side], RING[(side + 1) % 4]);
        let horizontal = a[1] == z[1];
        let mut pts: Vec<[f64; 2]> = stations
            .iter()
            .copied()
            .filter(|p| if horizontal { p[1] == a[1] } else { p[0] == a[0] })
            .filter(|p| {
                let (lo, hi, v) = if horizontal {
                    (a[0].min(z[0]), a[0].max(z[0]), p[0])
                } else {
                    (a[1].min(z[1]), a[1].max(z[1]), p[1])
                };
                v >= lo && v <= hi
            })
            .collect();
        let key = |p: &[f64; 2]| if horizontal { (p[0] - a[0]).abs() } else { (p[1] - a[1]).abs() };
        pts.sort_by(|p, q| key(p).total_cmp(&key(q)));
        pts.dedup();
        for w in pts.windows(2) {
            b.straight(w[0], w[1], 1.0, RoadClass::Arterial);
        }
    }
    for (tip, ring) in CONNECTORS {
        b.straight(tip, ring, 1.0, RoadClass::Connector);
    }
    for (gate, ring) in GATEWAYS {
        b.road(gate, ring, RoadClass::Arterial);
    }
    let file = NetworkFile {
        interval_minutes: DEFAULT_INTERVAL_MIN,
        horizon_minutes: HORIZON_MIN,
        nodes: b.nodes,
        edges: b.edges,
    };
    Ok(RoadNetwork::from_file_data(file)?)
}

fn node_at(net: &RoadNetwork, p: [f64; 2]) -> NodeId {
    net.nodes()
        .iter()
        .find(|n| (n.x_mi - p[0]).abs() < 1e-6 && (n.y_mi - p[1]).abs() < 1e-6)
        .map(|n| n.id)
        .expect("reference point is a node")
}

pub fn transit_stops(net: &RoadNetwork) -> Vec<NodeId> {
    STATIONS.iter().map(|&p| node_at(net, lattice(p))).collect()
}

/// Parcels clustered around the neighborhood centers plus a thin scatter.
pub fn build_parcels() -> Vec<Parcel> {
    let mut rng = rng::stream(SEED, "parcels");
    let mut parcels = Vec::new();
    for (c, &n) in neighborhood_centers().iter().zip(&NEIGHBORHOOD_PARCELS) {
        for _ in 0..n {
            let r = NEIGHBORHOOD_RADIUS_MI * rng.gen::<f64>();
            let a = std::f64::consts::TAU * rng.gen::<f64>();
            parcels.push([c[0] + r * a.cos(), c[1] + r * a.sin()]);
        }
    }
    for _ in 0..SCATTERED_PARCELS {
        parcels.push([rng.gen_range(0.0..2.5), rng.gen_range(0.0..1.5)]);
    }
    parcels
        .into_iter()
        .enumerate()
        .map(|(i, p)| Parcel {
            id: i as u32 + 1,
            x_mi: p[0],
            y_mi: p[1],
        })
        .collect()
}

pub fn build_plan(net: &RoadNetwork, parcels: &[Parcel]) -> Result<StopPlan> {
    plan_stops(net, parcels, STOP_COUNT, transit_stops(net), MAX_WALK_MIN, SEED)
}

fn scale_hours(hours: &[u32], total: u32) -> Vec<f64> {
    let sum: u32 = hours.iter().sum();
    let quotas: Vec<f64> = hours.iter().map(|&h| h as f64 * total as f64 / sum as f64).collect();
    apportion(&quotas).into_iter().map(|c| c as f64).collect()
}

/// Hourly OD matrix whose boundary totals equal the given hourly counts.
/// Neighborhood weights follow parcel counts.
pub fn build_od(net: &RoadNetwork, outgoing: &[f64], incoming: &[f64]) -> OdMatrix {
    let centers = neighborhood_centers();
    let mut centroids: Vec<Centroid> = centers
        .iter()
        .enumerate()
        .map(|(i, &c)| Centroid {
            id: i as u32 + 1,
            internal: true,
            node: Some(node_at(net, c)),
        })
        .collect();
    for (g, (p, _)) in GATEWAYS.iter().enumerate() {
        centroids.push(Centroid {
            id: 101 + g as u32,
            internal: false,
            node: Some(node_at(net, *p)),
        });
    }
    let total_parcels: usize = NEIGHBORHOOD_PARCELS.iter().sum();
    let hood_w: Vec<f64> = NEIGHBORHOOD_PARCELS
        .iter()
        .map(|&n| n as f64 / total_parcels as f64)
        .collect();
    let mut pairs = Vec::new();
    for h in 0..centers.len() {
        for g in 0..GATEWAYS.len() {
            pairs.push((h, g, hood_w[h] * GATEWAY_WEIGHTS[g]));
        }
    }
    let mut inner = Vec::new();
    for a in 0..centers.len() {
        for b in 0..centers.len() {
            if a != b {
                inner.push((a, b, hood_w[a] * hood_w[b]));
            }
        }
    }
    let inner_sum: f64 = inner.iter().map(|p| p.2).sum();
    let intervals = outgoing
        .iter()
        .zip(incoming)
        .enumerate()
        .map(|(hour, (&out, &inc))| {
            let split = |total: f64, w: &[(usize, usize, f64)]| apportion(&w.iter().map(|p| p.2 * total).collect::<Vec<_>>());
            let mut trips = Vec::new();
            for (&(h, g, _), n) in pairs.iter().zip(split(out, &pairs)) {
                trips.push(OdTrip {
                    from: h as u32 + 1,
                    to: 101 + g as u32,
                    count: n as f64,
                });
            }
            for (&(h, g, _), n) in pairs.iter().zip(split(inc, &pairs)) {
                trips.push(OdTrip {
                    from: 101 + g as u32,
                    to: h as u32 + 1,
                    count: n as f64,
                });
            }
            let inner_norm: Vec<(usize, usize, f64)> = inner.iter().map(|&(a, b, w)| (a, b, w / inner_sum)).collect();
            for (&(a, b, _), n) in inner.iter().zip(split(INTERNAL_PER_HOUR, &inner_norm)) {
                if n > 0 {
                    trips.push(OdTrip {
                        from: a as u32 + 1,
                        to: b as u32 + 1,
                        count: n as f64,
                    });
                }
            }
            trips.retain(|t| t.count > 0.0);
            OdInterval {
                start_min: hour as f64 * 60.0,
                end_min: (hour + 1) as f64 * 60.0,
                trips,
            }
        })
        .collect();
    OdMatrix { intervals, centroids }
}

pub fn present_od(net: &RoadNetwork) -> OdMatrix {
    let f = |h: &[u32]| h.iter().map(|&c| c as f64).collect::<Vec<_>>();
    build_od(net, &f(&PRESENT_OUTGOING), &f(&PRESENT_INCOMING))
}

pub fn futuristic_od(net: &RoadNetwork) -> OdMatrix {
    build_od(
        net,
        &scale_hours(&PRESENT_OUTGOING, FUTURISTIC_OUTGOING_TOTAL),
        &scale_hours(&PRESENT_INCOMING, FUTURISTIC_INCOMING_TOTAL),
    )
}

pub const NETWORK_FILE: &str = "network.json";
pub const PARCELS_FILE: &str = "parcels.csv";
pub const STOPS_FILE: &str = "stops.json";
pub const OD_PRESENT_FILE: &str = "od_present.json";
pub const OD_FUTURISTIC_FILE: &str = "od_futuristic.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const TRAFFIC_SCENARIO_FILE: &str = "scenario_traffic.json";
pub const GRID_FILE: &str = "grid.json";

/// Background volume used for the traffic-impact scenario.
pub const LIGHT_BACKGROUND_SCALE: f64 = 0.25;

/// Scenario with paths relative to the directory holding the data files.
pub fn scenario(fleet_size: u32, max_wait_min: f64, charging_points: u32, demand: DemandProfile, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        fleet_size,
        max_wait_min,
        detour_threshold: 1.0,
        charging_points,
        demand,
        seed,
        horizon_min: HORIZON_MIN,
        dwell_min: 0.5,
        shuttle_speed_mph: 15.0,
        capacity: 8,
        network: PathBuf::from(NETWORK_FILE),
        stops: PathBuf::from(STOPS_FILE),
        od: Some(PathBuf::from(match demand {
            DemandProfile::Present => OD_PRESENT_FILE,
            DemandProfile::Futuristic => OD_FUTURISTIC_FILE,
        })),
        requests: None,
        depot_override: None,
        background_traffic: false,
        background_scale: 1.0,
    }
}

pub fn grid() -> GridSpec {
    GridSpec {
        fleet_size: vec![2, 3, 4, 5, 6],
        max_wait_min: vec![6.0, 8.0, 10.0],
        detour_threshold: vec![0.5, 1.0],
        charging_points: vec![1, 2],
        demand: vec![DemandProfile::Present, DemandProfile::Futuristic],
        seeds: vec![1, 2, 3, 4],
        network: PathBuf::from(NETWORK_FILE),
        stops: PathBuf::from(STOPS_FILE),
        od_present: PathBuf::from(OD_PRESENT_FILE),
        od_futuristic: PathBuf::from(OD_FUTURISTIC_FILE),
        horizon_min: None,
        dwell_min: None,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes the complete reference data set into `dir`.
pub fn write_reference(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let net = build_network()?;
    let parcels = build_parcels();
    let plan = build_plan(&net, &parcels)?;
    net.save(dir.join(NETWORK_FILE))?;
    write_parcels(dir.join(PARCELS_FILE), &parcels)?;
    plan.save(dir.join(STOPS_FILE))?;
    present_od(&net).save(dir.join(OD_PRESENT_FILE))?;
    futuristic_od(&net).save(dir.join(OD_FUTURISTIC_FILE))?;
    write_json(
        &dir.join(SCENARIO_FILE),
        &scenario(3, 8.0, 1, DemandProfile::Present, 1),
    )?;
    let mut traffic = scenario(6, 8.0, 2, DemandProfile::Present, 1);
    traffic.background_traffic = true;
    traffic.background_scale = LIGHT_BACKGROUND_SCALE;
    write_json(&dir.join(TRAFFIC_SCENARIO_FILE), &traffic)?;
    write_json(&dir.join(GRID_FILE), &grid())
}

