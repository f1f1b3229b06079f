//! Background cars and the shuttles' effect on them.
//!
//! Cars are drawn from the OD matrix, routed once at departure, and driven
//! edge by edge on the travel-time profiles. They do not interact with each
//! other. On an edge where overtaking is not allowed, a car that enters
//! behind a shuttle which is still on the edge cannot leave before it.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{apportion, OdMatrix};
use crate::dispatch::ShuttleId;
use crate::error::{Error, Result, TrafficError};
use crate::network::{Edge, EdgeId, NodeId, RoadNetwork, TravelMode};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShuttleTraversal {
    pub shuttle: ShuttleId,
    pub edge: EdgeId,
    pub entry_min: f64,
    pub exit_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedTrip {
    pub id: u32,
    pub origin: NodeId,
    pub dest: NodeId,
    pub departure_min: f64,
    pub edges: Vec<EdgeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundVehicle {
    pub id: u32,
    pub departure_min: f64,
    pub edges: Vec<EdgeId>,
    pub entries: Vec<f64>,
    pub exits: Vec<f64>,
    pub free_flow_min: f64,
}

impl BackgroundVehicle {
    pub fn travel_min(&self) -> f64 {
        self.exits.last().map_or(0.0, |x| x - self.departure_min)
    }

    pub fn delay_min(&self) -> f64 {
        self.travel_min() - self.free_flow_min
    }
}

/// Exit time of a car that would leave at `free_exit` after entering at
/// `entry`, given the shuttles' `[entry, exit)` windows on the same edge.
pub fn moving_bottleneck_adjust(edge: &Edge, entry: f64, free_exit: f64, windows: &[(f64, f64)]) -> f64 {
    if edge.overtake_ok {
        return free_exit;
    }
    windows
        .iter()
        .filter(|&&(s_in, s_out)| s_in <= entry && entry < s_out)
        .fold(free_exit, |x, &(_, s_out)| x.max(s_out))
}

/// Car trips for the OD matrix scaled by `scale`: integer counts per interval
/// by largest remainder over OD pairs, uniform departures within the
/// interval, each routed at its departure time.
pub fn plan_background(net: &RoadNetwork, od: &OdMatrix, scale: f64, seed: u64) -> Result<Vec<PlannedTrip>> {
    let nodes: HashMap<u32, Option<NodeId>> = od.centroids.iter().map(|c| (c.id, c.node)).collect();
    let node_of = |c: u32| -> Result<NodeId> {
        nodes
            .get(&c)
            .copied()
            .flatten()
            .filter(|n| net.contains(*n))
            .ok_or_else(|| TrafficError::MissingCentroidNode(c).into())
    };
    let mut rng = rng::stream(seed, rng::BACKGROUND_STREAM);
    let mut draws = Vec::new();
    for iv in &od.intervals {
        let quotas: Vec<f64> = iv.trips.iter().map(|t| t.count * scale).collect();
        for (t, n) in iv.trips.iter().zip(apportion(&quotas)) {
            if n == 0 {
                continue;
            }
            let (o, d) = (node_of(t.from)?, node_of(t.to)?);
            for _ in 0..n {
                draws.push((rng.gen_range(iv.start_min..iv.end_min), o, d));
            }
        }
    }
    draws.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    draws
        .into_par_iter()
        .enumerate()
        .map(|(k, (t, o, d))| {
            let depart = t.min(net.horizon_min());
            let path = net.shortest_path(o, d, depart, TravelMode::Background)?;
            Ok(PlannedTrip {
                id: k as u32,
                origin: o,
                dest: d,
                departure_min: t,
                edges: path.edges,
            })
        })
        .collect()
}

fn windows_by_edge(traversals: &[ShuttleTraversal]) -> HashMap<EdgeId, Vec<(f64, f64)>> {
    let mut map: HashMap<EdgeId, Vec<(f64, f64)>> = HashMap::new();
    for t in traversals {
        map.entry(t.edge).or_default().push((t.entry_min, t.exit_min));
    }
    map
}

/// Drives each planned trip, with shuttles acting as moving bottlenecks
/// when `traversals` is given.
pub fn drive(net: &RoadNetwork, trips: &[PlannedTrip], traversals: Option<&[ShuttleTraversal]>) -> Vec<BackgroundVehicle> {
    let windows = traversals.map(windows_by_edge).unwrap_or_default();
    trips
        .iter()
        .map(|trip| {
            let mut t = trip.departure_min;
            let mut entries = Vec::with_capacity(trip.edges.len());
            let mut exits = Vec::with_capacity(trip.edges.len());
            let mut free_flow = 0.0;
            for &e in &trip.edges {
                let edge = net.edge(e);
                let free_exit = net.edge_exit_time(e, t, TravelMode::Background);
                let exit = match windows.get(&e) {
                    Some(w) => moving_bottleneck_adjust(edge, t, free_exit, w),
                    None => free_exit,
                };
                entries.push(t);
                exits.push(exit);
                free_flow += edge.free_flow_min();
                t = exit;
            }
            BackgroundVehicle {
                id: trip.id,
                departure_min: trip.departure_min,
                edges: trip.edges.clone(),
                entries,
                exits,
                free_flow_min: free_flow,
            }
        })
        .collect()
}

pub fn simulate_background(
    net: &RoadNetwork,
    od: &OdMatrix,
    traversals: Option<&[ShuttleTraversal]>,
    scale: f64,
    seed: u64,
) -> Result<Vec<BackgroundVehicle>> {
    let trips = plan_background(net, od, scale, seed)?;
    Ok(drive(net, &trips, traversals))
}

/// Background traversal totals on shuttle-operating edges, per interval of
/// edge entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkIntervalStats {
    pub interval_min: f64,
    /// Per (edge, interval index): count, Σ travel minutes, Σ delay minutes,
    /// Σ speed (mph).
    pub cells: Vec<LinkCell>,
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkCell {
    pub edge: EdgeId,
    pub interval: usize,
    pub count: usize,
    pub travel_min: f64,
    pub delay_min: f64,
    pub speed_sum_mph: f64,
}

impl LinkCell {
    pub fn mean_speed_mph(&self) -> f64 {
        self.speed_sum_mph / self.count as f64
    }

    pub fn delay_ratio(&self) -> f64 {
        self.delay_min / self.travel_min
    }
}

pub fn link_stats(net: &RoadNetwork, vehicles: &[BackgroundVehicle], horizon_min: f64) -> LinkIntervalStats {
    let dt = net.interval_min();
    let intervals = (horizon_min / dt).ceil() as usize;
    let mut cells: HashMap<(EdgeId, usize), LinkCell> = HashMap::new();
    for v in vehicles {
        for ((&e, &entry), &exit) in v.edges.iter().zip(&v.entries).zip(&v.exits) {
            let edge = net.edge(e);
            if !edge.shuttle_ok || entry >= horizon_min {
                continue;
            }
            let k = ((entry / dt).floor() as usize).min(intervals - 1);
            let tt = exit - entry;
            let c = cells.entry((e, k)).or_insert(LinkCell {
                edge: e,
                interval: k,
                count: 0,
                travel_min: 0.0,
                delay_min: 0.0,
                speed_sum_mph: 0.0,
            });
            c.count += 1;
            c.travel_min += tt;
            c.delay_min += tt - edge.free_flow_min();
            c.speed_sum_mph += 60.0 * edge.length_mi / tt;
        }
    }
    let mut cells: Vec<LinkCell> = cells.into_values().collect();
    cells.sort_by_key(|c| (c.interval, c.edge));
    LinkIntervalStats {
        interval_min: dt,
        cells,
        intervals,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Totals {
    count: usize,
    travel: f64,
    delay: f64,
    speed: f64,
}

impl Totals {
    fn add(&mut self, c: &LinkCell) {
        self.count += c.count;
        self.travel += c.travel_min;
        self.delay += c.delay_min;
        self.speed += c.speed_sum_mph;
    }
    fn speed(&self) -> Option<f64> {
        (self.count > 0).then(|| self.speed / self.count as f64)
    }
    fn ratio(&self) -> Option<f64> {
        (self.travel > 0.0).then(|| self.delay / self.travel)
    }
}

fn per_interval(stats: &LinkIntervalStats) -> Vec<Totals> {
    let mut out = vec![Totals::default(); stats.intervals];
    for c in &stats.cells {
        out[c.interval].add(c);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub interval_start_min: f64,
    pub mean_speed_with: Option<f64>,
    pub mean_speed_without: Option<f64>,
    pub delay_ratio_with: Option<f64>,
    pub delay_ratio_without: Option<f64>,
    pub traversals_with: usize,
    pub traversals_without: usize,
    pub speed_sum_with: f64,
    pub speed_sum_without: f64,
    pub travel_min_with: f64,
    pub travel_min_without: f64,
    pub delay_min_with: f64,
    pub delay_min_without: f64,
}

pub fn impact_report(with: &LinkIntervalStats, without: &LinkIntervalStats) -> Result<Vec<ImpactRow>, TrafficError> {
    if with.intervals != without.intervals || with.interval_min != without.interval_min {
        return Err(TrafficError::MismatchedGrid);
    }
    let a = per_interval(with);
    let b = per_interval(without);
    Ok(a.iter()
        .zip(&b)
        .enumerate()
        .map(|(k, (w, wo))| ImpactRow {
            interval_start_min: k as f64 * with.interval_min,
            mean_speed_with: w.speed(),
            mean_speed_without: wo.speed(),
            delay_ratio_with: w.ratio(),
            delay_ratio_without: wo.ratio(),
            traversals_with: w.count,
            traversals_without: wo.count,
            speed_sum_with: w.speed,
            speed_sum_without: wo.speed,
            travel_min_with: w.travel,
            travel_min_without: wo.travel,
            delay_min_with: w.delay,
            delay_min_without: wo.delay,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub mean_speed_with: f64,
    pub mean_speed_without: f64,
    pub speed_reduction_mph: f64,
    pub delay_ratio_with: f64,
    pub delay_ratio_without: f64,
    pub delay_ratio_increase: f64,
}

/// Whole-horizon means over all measured traversals.
pub fn summarize(rows: &[ImpactRow]) -> ImpactSummary {
    let mut w = Totals::default();
    let mut wo = Totals::default();
    for r in rows {
        w.count += r.traversals_with;
        w.speed += r.speed_sum_with;
        w.travel += r.travel_min_with;
        w.delay += r.delay_min_with;
        wo.count += r.traversals_without;
        wo.speed += r.speed_sum_without;
        wo.travel += r.travel_min_without;
        wo.delay += r.delay_min_without;
    }
    let sw = w.speed().unwrap_or(0.0);
    let swo = wo.speed().unwrap_or(0.0);
    let rw = w.ratio().unwrap_or(0.0);
    let rwo = wo.ratio().unwrap_or(0.0);
    ImpactSummary {
        mean_speed_with: sw,
        mean_speed_without: swo,
        speed_reduction_mph: swo - sw,
        delay_ratio_with: rw,
        delay_ratio_without: rwo,
        delay_ratio_increase: rw - rwo,
    }
}

/// Background traffic with and without the given shuttle traversals.
pub fn impact_for(
    net: &RoadNetwork,
    od: &OdMatrix,
    traversals: &[ShuttleTraversal],
    scale: f64,
    seed: u64,
    horizon_min: f64,
) -> Result<Vec<ImpactRow>> {
    let trips = plan_background(net, od, scale, seed)?;
    let without = link_stats(net, &drive(net, &trips, None), horizon_min);
    let with = link_stats(net, &drive(net, &trips, Some(traversals)), horizon_min);
    Ok(impact_report(&with, &without)?)
}

pub fn write_impact(path: impl AsRef<Path>, rows: &[ImpactRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    w.write_record([
        "interval_start_min",
        "mean_speed_with_mph",
        "mean_speed_without_mph",
        "delay_ratio_with",
        "delay_ratio_without",
        "traversals_with",
        "traversals_without",
    ])
    .map_err(|e| Error::parse(path, e))?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.interval_start_min.to_string(),
            opt(r.mean_speed_with),
            opt(r.mean_speed_without),
            opt(r.delay_ratio_with),
            opt(r.delay_ratio_without),
            r.traversals_with.to_string(),
            r.traversals_without.to_string(),
        ])
        .map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::test_util::NetBuilder;

    fn one_mile(overtake: bool) -> RoadNetwork {
        let mut b = NetBuilder::new(60.0)
            .node(1, 0.0, 0.0)
            .node(2, 1.0, 0.0)
            .road(1, 2, 1.0, 25.0, true);
        b.file.edges[0].overtake_ok = overtake;
        b.build()
    }

    fn trip(t: f64) -> PlannedTrip {
        PlannedTrip {
            id: 0,
            origin: NodeId(1),
            dest: NodeId(2),
            departure_min: t,
            edges: vec![EdgeId(0)],
        }
    }

    fn shuttle_at(t: f64) -> ShuttleTraversal {
        ShuttleTraversal {
            shuttle: ShuttleId(0),
            edge: EdgeId(0),
            entry_min: t,
            exit_min: t + 4.0,
        }
    }

    #[test]
    fn simultaneous_entry_follows_shuttle() {
        let net = one_mile(false);
        let v = drive(&net, &[trip(10.0)], Some(&[shuttle_at(10.0)]));
        assert!((v[0].travel_min() - 4.0).abs() < 1e-12);
        assert!((v[0].delay_min() - 1.6).abs() < 1e-12);
        assert!((v[0].delay_min() / v[0].travel_min() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn overtaking_or_disjoint_is_unchanged() {
        let net = one_mile(true);
        let v = drive(&net, &[trip(10.0)], Some(&[shuttle_at(10.0)]));
        assert!((v[0].travel_min() - 2.4).abs() < 1e-12);
        let net = one_mile(false);
        let v = drive(&net, &[trip(14.0)], Some(&[shuttle_at(10.0)]));
        assert!((v[0].travel_min() - 2.4).abs() < 1e-12);
        // car already ahead of the shuttle
        let v = drive(&net, &[trip(9.0)], Some(&[shuttle_at(10.0)]));
        assert!((v[0].travel_min() - 2.4).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_no_difference() {
        let net = one_mile(false);
        let v = drive(&net, &[trip(1.0), trip(20.0)], None);
        let s = link_stats(&net, &v, 60.0);
        let rows = impact_report(&s, &s).unwrap();
        let sum = summarize(&rows);
        assert_eq!(sum.speed_reduction_mph, 0.0);
        assert_eq!(sum.delay_ratio_increase, 0.0);
    }

    #[test]
    fn impact_of_single_follow() {
        let net = one_mile(false);
        let trips = [trip(10.0)];
        let without = link_stats(&net, &drive(&net, &trips, None), 60.0);
        let with = link_stats(&net, &drive(&net, &trips, Some(&[shuttle_at(10.0)])), 60.0);
        let rows = impact_report(&with, &without).unwrap();
        let r = &rows[0];
        assert!((r.travel_min_with - r.travel_min_without - 1.6).abs() < 1e-12);
        assert!((r.mean_speed_without.unwrap() - 25.0).abs() < 1e-9);
        assert!((r.mean_speed_with.unwrap() - 15.0).abs() < 1e-9);
    }
}
