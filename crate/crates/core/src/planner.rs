//! Stop placement: k-means over parcel coordinates, snapping to the shuttle
//! route, walk-time coverage and depot siting.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, PlanError};
use crate::network::{walk_minutes, NodeId, RoadNetwork};
use crate::rng;

/// Restarts per clustering; the lowest-SSE run is kept.
pub const KMEANS_RESTARTS: usize = 16;
pub const KMEANS_MAX_ITERS: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parcel {
    pub id: u32,
    pub x_mi: f64,
    pub y_mi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    pub sse: f64,
    pub iterations: usize,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn nearest_centroid(p: [f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_count(points: &[[f64; 2]]) -> usize {
    points
        .iter()
        .map(|p| (p[0].to_bits(), p[1].to_bits()))
        .collect::<BTreeSet<_>>()
        .len()
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
pub fn seed_centroids<R: Rng>(points: &[[f64; 2]], k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[pick];
        centroids.push(c);
        for (w, &p) in d2.iter_mut().zip(points) {
            *w = w.min(dist2(p, c));
        }
    }
    centroids
}

/// Lloyd iterations from the given centres. Returns the clustering and the
/// SSE observed after each assignment step.
pub fn lloyd(points: &[[f64; 2]], mut centroids: Vec<[f64; 2]>, max_iters: usize) -> (Clustering, Vec<f64>) {
    let k = centroids.len();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut sse = 0.0;
        for (a, &p) in assignment.iter_mut().zip(points) {
            let (c, d) = nearest_centroid(p, &centroids);
            sse += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        trace.push(sse);
        if !changed || iterations >= max_iters {
            return (
                Clustering {
                    centroids,
                    assignment,
                    sse,
                    iterations,
                },
                trace,
            );
        }
        iterations += 1;
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (&a, &p) in assignment.iter().zip(points) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        for i in 0..k {
            // an empty cluster keeps its centre
            if counts[i] > 0 {
                centroids[i] = [sums[i][0] / counts[i] as f64, sums[i][1] / counts[i] as f64];
            }
        }
    }
}

/// Hartigan single-point moves from a Lloyd result: a point changes cluster
/// whenever that lowers the SSE, with centres kept at the cluster means.
pub fn refine(points: &[[f64; 2]], mut c: Clustering) -> Clustering {
    let k = c.centroids.len();
    let mut sums = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (&a, &p) in c.assignment.iter().zip(points) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    let mean = |s: [f64; 2], n: usize| [s[0] / n as f64, s[1] / n as f64];
    for i in 0..k {
        if counts[i] > 0 {
            c.centroids[i] = mean(sums[i], counts[i]);
        }
    }
    loop {
        let mut moved = false;
        for (a, &p) in c.assignment.iter_mut().zip(points) {
            let from = *a;
            let n_from = counts[from];
            if n_from <= 1 {
                continue;
            }
            let remove = n_from as f64 / (n_from - 1) as f64 * dist2(p, c.centroids[from]);
            let mut best = (from, remove);
            for to in (0..k).filter(|&t| t != from) {
                let n_to = counts[to];
                let add = n_to as f64 / (n_to + 1) as f64 * dist2(p, c.centroids[to]);
                if add < best.1 {
                    best = (to, add);
                }
            }
            let (to, add) = best;
            if to == from || add >= remove * (1.0 - 1e-12) {
                continue;
            }
            sums[from][0] -= p[0];
            sums[from][1] -= p[1];
            counts[from] -= 1;
            sums[to][0] += p[0];
            sums[to][1] += p[1];
            counts[to] += 1;
            c.centroids[from] = mean(sums[from], counts[from]);
            c.centroids[to] = mean(sums[to], counts[to]);
            *a = to;
            moved = true;
        }
        if !moved {
            break;
        }
    }
    c.sse = c
        .assignment
        .iter()
        .zip(points)
        .map(|(&a, &p)| dist2(p, c.centroids[a]))
        .sum();
    c
}

pub fn kmeans_cluster(
    points: &[[f64; 2]],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Clustering, PlanError> {
    if points.is_empty() {
        return Err(PlanError::EmptyPoints);
    }
    if k == 0 {
        return Err(PlanError::ZeroClusters);
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(PlanError::TooManyClusters { k, distinct });
    }
    let mut rng = rng::stream(seed, rng::KMEANS_STREAM);
    let mut best: Option<Clustering> = None;
    for _ in 0..KMEANS_RESTARTS {
        let init = seed_centroids(points, k, &mut rng);
        let (run, _) = lloyd(points, init, max_iters);
        let run = refine(points, run);
        if best.as_ref().map_or(true, |b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn nearest_among(net: &RoadNetwork, candidates: &[NodeId], p: [f64; 2]) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for &id in candidates {
        let n = net.node(id).expect("candidate comes from the network");
        let d = dist2(p, [n.x_mi, n.y_mi]);
        // candidates are ascending by id, so strict < keeps the lower id on ties
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Nearest endpoint of a shuttle-permitted edge; ties go to the lower id.
pub fn snap_to_node(net: &RoadNetwork, point: [f64; 2]) -> Result<NodeId, PlanError> {
    nearest_among(net, &net.shuttle_nodes(), point).ok_or(PlanError::NoShuttleNodes)
}

/// Nearest node of any kind; ties go to the lower id.
pub fn nearest_node(net: &RoadNetwork, point: [f64; 2]) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for n in net.nodes() {
        let d = dist2(point, [n.x_mi, n.y_mi]);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, n.id));
        }
    }
    best.map(|(_, id)| id)
}

/// Snapped mean of all stop coordinates.
pub fn place_depot(net: &RoadNetwork, stops: &[NodeId]) -> Result<NodeId, PlanError> {
    if stops.is_empty() {
        return Err(PlanError::EmptyPoints);
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    for &s in stops {
        let n = net
            .node(s)
            .ok_or_else(|| PlanError::InvalidPlan(format!("stop {s} is not a network node")))?;
        sx += n.x_mi;
        sy += n.y_mi;
    }
    let m = stops.len() as f64;
    snap_to_node(net, [sx / m, sy / m])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopPlan {
    pub shuttle_stops: Vec<NodeId>,
    pub transit_stops: Vec<NodeId>,
    pub depot: NodeId,
    pub max_walk_min: f64,
}

impl StopPlan {
    pub fn validate(&self, net: &RoadNetwork) -> Result<(), PlanError> {
        if self.shuttle_stops.is_empty() || self.transit_stops.is_empty() {
            return Err(PlanError::InvalidPlan("stop lists must be non-empty".into()));
        }
        let distinct: BTreeSet<_> = self.shuttle_stops.iter().collect();
        if distinct.len() != self.shuttle_stops.len() {
            return Err(PlanError::InvalidPlan("shuttle stops must be distinct".into()));
        }
        let on_route: BTreeSet<_> = net.shuttle_nodes().into_iter().collect();
        let all = self
            .shuttle_stops
            .iter()
            .chain(&self.transit_stops)
            .chain(std::iter::once(&self.depot));
        for id in all {
            if !on_route.contains(id) {
                return Err(PlanError::InvalidPlan(format!(
                    "node {id} is not on the shuttle route"
                )));
            }
        }
        if !(self.max_walk_min > 0.0) {
            return Err(PlanError::InvalidPlan("max_walk_min must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn load_parcels(path: impl AsRef<Path>) -> Result<Vec<Parcel>, Error> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let p: Parcel = row.map_err(|e| Error::parse(path, e))?;
        if !p.x_mi.is_finite() || !p.y_mi.is_finite() {
            return Err(Error::parse(path, format!("parcel {} has non-finite coordinates", p.id)));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn write_parcels(path: impl AsRef<Path>, parcels: &[Parcel]) -> Result<(), Error> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    for p in parcels {
        w.serialize(p).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parcel_points(parcels: &[Parcel]) -> Vec<[f64; 2]> {
    parcels.iter().map(|p| [p.x_mi, p.y_mi]).collect()
}

/// Shuttle stops for `k` clusters: snapped centroids, duplicates dropped,
/// ascending by node id.
pub fn cluster_stops(
    net: &RoadNetwork,
    parcels: &[Parcel],
    k: usize,
    seed: u64,
) -> Result<Vec<NodeId>, PlanError> {
    let clustering = kmeans_cluster(&parcel_points(parcels), k, seed, KMEANS_MAX_ITERS)?;
    let mut stops = BTreeSet::new();
    for c in clustering.centroids {
        stops.insert(snap_to_node(net, c)?);
    }
    Ok(stops.into_iter().collect())
}

/// Walk minutes from each parcel (snapped to its nearest node) to the
/// closest stop.
pub fn parcel_walk_minutes(
    net: &RoadNetwork,
    parcel_nodes: &[NodeId],
    stops: &[NodeId],
) -> Result<Vec<f64>, Error> {
    let dist = net.walking_distances_from(stops)?;
    Ok(parcel_nodes
        .iter()
        .map(|&n| {
            let i = net.node_position(n).expect("snapped node exists");
            walk_minutes(dist[i])
        })
        .collect())
}

fn snap_parcels(net: &RoadNetwork, parcels: &[Parcel]) -> Result<Vec<NodeId>, PlanError> {
    parcels
        .iter()
        .map(|p| nearest_node(net, [p.x_mi, p.y_mi]).ok_or(PlanError::NoShuttleNodes))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub ks: Vec<usize>,
    pub walk_min: Vec<f64>,
    /// `ratios[i][j]` is the covered fraction for `ks[i]` stops within
    /// `walk_min[j]` minutes.
    pub ratios: Vec<Vec<f64>>,
}

impl CoverageMatrix {
    pub fn get(&self, k: usize, walk: f64) -> Option<f64> {
        let i = self.ks.iter().position(|&x| x == k)?;
        let j = self.walk_min.iter().position(|&w| w == walk)?;
        Some(self.ratios[i][j])
    }

    /// Smallest k whose coverage at `walk` reaches `target`.
    pub fn select_k(&self, walk: f64, target: f64) -> Option<usize> {
        let j = self.walk_min.iter().position(|&w| w == walk)?;
        self.ks
            .iter()
            .zip(&self.ratios)
            .filter(|(_, row)| row[j] >= target)
            .map(|(&k, _)| k)
            .min()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn coverage_matrix(
    net: &RoadNetwork,
    parcels: &[Parcel],
    ks: &[usize],
    walk_min: &[f64],
    seed: u64,
) -> Result<CoverageMatrix, Error> {
    if ks.is_empty() || walk_min.is_empty() {
        return Err(PlanError::EmptyRange.into());
    }
    if parcels.is_empty() {
        return Err(PlanError::EmptyPoints.into());
    }
    let parcel_nodes = snap_parcels(net, parcels)?;
    let rows: Result<Vec<Vec<f64>>, Error> = ks
        .par_iter()
        .map(|&k| {
            let stops = cluster_stops(net, parcels, k, seed)?;
            let walks = parcel_walk_minutes(net, &parcel_nodes, &stops)?;
            Ok(walk_min
                .iter()
                .map(|&w| {
                    let covered = walks.iter().filter(|&&t| t <= w + 1e-9).count();
                    covered as f64 / walks.len() as f64
                })
                .collect())
        })
        .collect();
    Ok(CoverageMatrix {
        ks: ks.to_vec(),
        walk_min: walk_min.to_vec(),
        ratios: rows?,
    })
}

/// Full operating plan for `k` clustered stops plus the given transit stops.
pub fn plan_stops(
    net: &RoadNetwork,
    parcels: &[Parcel],
    k: usize,
    transit_stops: Vec<NodeId>,
    max_walk_min: f64,
    seed: u64,
) -> Result<StopPlan, Error> {
    let shuttle_stops = cluster_stops(net, parcels, k, seed)?;
    let mut all = shuttle_stops.clone();
    all.extend(&transit_stops);
    let depot = place_depot(net, &all)?;
    let plan = StopPlan {
        shuttle_stops,
        transit_stops,
        depot,
        max_walk_min,
    };
    plan.validate(net)?;
    Ok(plan)
}
