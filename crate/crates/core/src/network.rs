//! Road network with per-interval edge travel times.
//!
//! Edges carry a [`TravelTimeProfile`]: one traversal time per fixed-length
//! interval. A vehicle entering an edge uses the time of the interval that
//! contains its entry instant, but never exits later than it would have by
//! waiting for the next interval boundary. That cap keeps arrival times
//! monotone in departure time (FIFO) even where a profile drops between
//! intervals.
//!
//! Shuttles only use `shuttle_ok` edges and never exceed the shuttle speed
//! cap, so their per-interval times are `max(profile, length / cap)`.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::path::Path as FsPath;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, NetworkError};

pub const DEFAULT_INTERVAL_MIN: f64 = 15.0;
pub const WALK_SPEED_MPH: f64 = 3.0;
pub const SHUTTLE_SPEED_CAP_MPH: f64 = 15.0;

const TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Position of an edge in the network file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TravelMode {
    Shuttle,
    Background,
}

impl TravelMode {
    fn name(self) -> &'static str {
        match self {
            TravelMode::Shuttle => "shuttle",
            TravelMode::Background => "background",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x_mi: f64,
    pub y_mi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TravelTimeProfile {
    minutes: Vec<f64>,
}

impl TravelTimeProfile {
    pub fn new(minutes: Vec<f64>) -> Self {
        Self { minutes }
    }

    pub fn flat(minutes: f64, intervals: usize) -> Self {
        Self {
            minutes: vec![minutes; intervals.max(1)],
        }
    }

    pub fn minutes(&self) -> &[f64] {
        &self.minutes
    }

    pub fn len(&self) -> usize {
        self.minutes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutes.is_empty()
    }

    fn interval_of(&self, interval_min: f64, t: f64) -> usize {
        let n = self.minutes.len();
        if t <= 0.0 {
            return 0;
        }
        let mut idx = ((t / interval_min).floor() as usize).min(n - 1);
        // guard against rounding right at a boundary
        while idx > 0 && t < idx as f64 * interval_min {
            idx -= 1;
        }
        while idx + 1 < n && t >= (idx + 1) as f64 * interval_min {
            idx += 1;
        }
        idx
    }

    /// Raw profile time for the interval containing `t`.
    pub fn time_at(&self, interval_min: f64, t: f64) -> f64 {
        self.minutes[self.interval_of(interval_min, t)]
    }

    /// Exit instant for a vehicle entering at `entry`, with every interval
    /// time raised to at least `floor` minutes.
    pub fn exit_time(&self, interval_min: f64, entry: f64, floor: f64) -> f64 {
        let idx = self.interval_of(interval_min, entry);
        let exit = entry + self.minutes[idx].max(floor);
        match self.minutes.get(idx + 1) {
            Some(next) => {
                let boundary = (idx + 1) as f64 * interval_min;
                exit.min(boundary + next.max(floor))
            }
            None => exit,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_mi: f64,
    pub speed_mph: f64,
    pub shuttle_ok: bool,
    pub overtake_ok: bool,
    pub profile: TravelTimeProfile,
}

impl Edge {
    pub fn free_flow_min(&self) -> f64 {
        60.0 * self.length_mi / self.speed_mph
    }
}

/// An edge sequence with its timing. `arrival_min` is the exit time of the
/// last edge when traversed from `departure_min`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub origin: NodeId,
    pub dest: NodeId,
    pub edges: Vec<EdgeId>,
    pub departure_min: f64,
    pub arrival_min: f64,
    pub distance_mi: f64,
}

impl Path {
    pub fn duration_min(&self) -> f64 {
        self.arrival_min - self.departure_min
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

// On-disk layout.

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default = "default_interval")]
    pub interval_minutes: f64,
    pub horizon_minutes: f64,
    pub nodes: Vec<Node>,
    pub edges: Vec<EdgeRecord>,
}

fn default_interval() -> f64 {
    DEFAULT_INTERVAL_MIN
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: NodeId,
    pub to: NodeId,
    pub length_mi: f64,
    pub speed_mph: f64,
    pub shuttle_ok: bool,
    pub overtake_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct RoadNetwork {
    interval_min: f64,
    horizon_min: f64,
    shuttle_cap_mph: f64,
    /// Sorted by id, so index order is id order.
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    edge_ends: Vec<(usize, usize)>,
    /// Outgoing edges per node, ordered by head node then edge position.
    out_edges: Vec<Vec<usize>>,
    /// Undirected adjacency by length, for walking.
    walk_adj: Vec<Vec<(usize, f64)>>,
}

/// Min-heap entry ordered by (time, node index).
#[derive(Clone, Copy, Debug)]
struct HeapItem {
    key: f64,
    node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl RoadNetwork {
    pub fn from_file_data(file: NetworkFile) -> Result<Self, NetworkError> {
        let NetworkFile {
            interval_minutes,
            horizon_minutes,
            mut nodes,
            edges: records,
        } = file;
        if !(interval_minutes > 0.0 && horizon_minutes > 0.0)
            || !interval_minutes.is_finite()
            || !horizon_minutes.is_finite()
        {
            return Err(NetworkError::BadTiming);
        }
        nodes.sort_by_key(|n| n.id);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !n.x_mi.is_finite() || !n.y_mi.is_finite() {
                return Err(NetworkError::BadCoordinates(n.id));
            }
            if index.insert(n.id, i).is_some() {
                return Err(NetworkError::DuplicateNode(n.id));
            }
        }
        let default_len = (horizon_minutes / interval_minutes).ceil().max(1.0) as usize;

        let mut edges = Vec::with_capacity(records.len());
        let mut edge_ends = Vec::with_capacity(records.len());
        for (i, rec) in records.into_iter().enumerate() {
            let id = EdgeId(i as u32);
            let from = *index.get(&rec.from).ok_or(NetworkError::DanglingEdge {
                edge: id,
                node: rec.from,
            })?;
            let to = *index.get(&rec.to).ok_or(NetworkError::DanglingEdge {
                edge: id,
                node: rec.to,
            })?;
            if !(rec.length_mi > 0.0 && rec.length_mi.is_finite()) {
                return Err(NetworkError::NonPositiveLength { edge: id });
            }
            if !(rec.speed_mph > 0.0 && rec.speed_mph.is_finite()) {
                return Err(NetworkError::NonPositiveSpeed { edge: id });
            }
            let free_flow = 60.0 * rec.length_mi / rec.speed_mph;
            let profile = match rec.profile {
                None => TravelTimeProfile::flat(free_flow, default_len),
                Some(minutes) => {
                    validate_profile(id, &minutes, free_flow, interval_minutes, horizon_minutes)?;
                    TravelTimeProfile::new(minutes)
                }
            };
            edges.push(Edge {
                id,
                from: rec.from,
                to: rec.to,
                length_mi: rec.length_mi,
                speed_mph: rec.speed_mph,
                shuttle_ok: rec.shuttle_ok,
                overtake_ok: rec.overtake_ok,
                profile,
            });
            edge_ends.push((from, to));
        }

        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut walk_adj = vec![Vec::new(); nodes.len()];
        for (e, &(u, v)) in edge_ends.iter().enumerate() {
            out_edges[u].push(e);
            walk_adj[u].push((v, edges[e].length_mi));
            walk_adj[v].push((u, edges[e].length_mi));
        }
        for list in &mut out_edges {
            list.sort_by_key(|&e| (edge_ends[e].1, e));
        }
        for list in &mut walk_adj {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        }

        let net = Self {
            interval_min: interval_minutes,
            horizon_min: horizon_minutes,
            shuttle_cap_mph: SHUTTLE_SPEED_CAP_MPH,
            nodes,
            index,
            edges,
            edge_ends,
            out_edges,
            walk_adj,
        };
        net.check_shuttle_connectivity()?;
        Ok(net)
    }

    pub fn to_file_data(&self) -> NetworkFile {
        NetworkFile {
            interval_minutes: self.interval_min,
            horizon_minutes: self.horizon_min,
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    from: e.from,
                    to: e.to,
                    length_mi: e.length_mi,
                    speed_mph: e.speed_mph,
                    shuttle_ok: e.shuttle_ok,
                    overtake_ok: e.overtake_ok,
                    profile: Some(e.profile.minutes().to_vec()),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<(), Error> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_file_data())
            .map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn check_shuttle_connectivity(&self) -> Result<(), NetworkError> {
        let n = self.nodes.len();
        let mut on_route = vec![false; n];
        let mut fwd = vec![Vec::new(); n];
        let mut rev = vec![Vec::new(); n];
        for (e, &(u, v)) in self.edge_ends.iter().enumerate() {
            if self.edges[e].shuttle_ok {
                on_route[u] = true;
                on_route[v] = true;
                fwd[u].push(v);
                rev[v].push(u);
            }
        }
        let Some(root) = on_route.iter().position(|&b| b) else {
            return Ok(());
        };
        for (adj, forward) in [(&fwd, true), (&rev, false)] {
            let mut seen = vec![false; n];
            let mut stack = vec![root];
            seen[root] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            if let Some(miss) = (0..n).find(|&i| on_route[i] && !seen[i]) {
                let (a, b) = (self.nodes[root].id, self.nodes[miss].id);
                let (from, to) = if forward { (a, b) } else { (b, a) };
                return Err(NetworkError::DisconnectedShuttleSubgraph { from, to });
            }
        }
        Ok(())
    }

    pub fn interval_min(&self) -> f64 {
        self.interval_min
    }

    pub fn horizon_min(&self) -> f64 {
        self.horizon_min
    }

    pub fn shuttle_speed_cap_mph(&self) -> f64 {
        self.shuttle_cap_mph
    }

    pub fn set_shuttle_speed_cap(&mut self, mph: f64) {
        assert!(mph > 0.0, "speed cap must be positive");
        self.shuttle_cap_mph = mph;
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0 as usize]
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    fn idx(&self, id: NodeId) -> Result<usize, NetworkError> {
        self.index
            .get(&id)
            .copied()
            .ok_or(NetworkError::UnknownNode(id))
    }

    /// Endpoints of shuttle-permitted edges, ascending by id.
    pub fn shuttle_nodes(&self) -> Vec<NodeId> {
        let mut on = vec![false; self.nodes.len()];
        for (e, &(u, v)) in self.edge_ends.iter().enumerate() {
            if self.edges[e].shuttle_ok {
                on[u] = true;
                on[v] = true;
            }
        }
        (0..self.nodes.len())
            .filter(|&i| on[i])
            .map(|i| self.nodes[i].id)
            .collect()
    }

    pub fn is_shuttle_node(&self, id: NodeId) -> bool {
        let Ok(i) = self.idx(id) else { return false };
        self.edge_ends
            .iter()
            .enumerate()
            .any(|(e, &(u, v))| self.edges[e].shuttle_ok && (u == i || v == i))
    }

    /// Length of the shuttle route, counting a two-way street once.
    pub fn shuttle_route_length_mi(&self) -> f64 {
        let mut seen = std::collections::HashSet::new();
        let mut total = 0.0;
        for (e, &(u, v)) in self.edge_ends.iter().enumerate() {
            if self.edges[e].shuttle_ok && seen.insert((u.min(v), u.max(v))) {
                total += self.edges[e].length_mi;
            }
        }
        total
    }

    fn floor_min(&self, e: usize, mode: TravelMode) -> f64 {
        match mode {
            TravelMode::Shuttle => 60.0 * self.edges[e].length_mi / self.shuttle_cap_mph,
            TravelMode::Background => 0.0,
        }
    }

    fn allowed(&self, e: usize, mode: TravelMode) -> bool {
        match mode {
            TravelMode::Shuttle => self.edges[e].shuttle_ok,
            TravelMode::Background => true,
        }
    }

    /// Exit time of `edge` for a vehicle of `mode` entering at `entry`.
    pub fn edge_exit_time(&self, edge: EdgeId, entry: f64, mode: TravelMode) -> f64 {
        let e = edge.0 as usize;
        self.edges[e]
            .profile
            .exit_time(self.interval_min, entry, self.floor_min(e, mode))
    }

    /// Node times along `edges` starting at `depart`; one more entry than edges.
    pub fn traverse(&self, edges: &[EdgeId], depart: f64, mode: TravelMode) -> Vec<f64> {
        let mut times = Vec::with_capacity(edges.len() + 1);
        let mut t = depart;
        times.push(t);
        for &e in edges {
            t = self.edge_exit_time(e, t, mode);
            times.push(t);
        }
        times
    }

    fn arrival_along(&self, edges: &[EdgeId], depart: f64, mode: TravelMode) -> f64 {
        edges
            .iter()
            .fold(depart, |t, &e| self.edge_exit_time(e, t, mode))
    }

    /// True when every permitted edge has the same traversal time in every
    /// interval, so least-time paths do not depend on departure time.
    pub fn is_time_invariant(&self, mode: TravelMode) -> bool {
        self.edges.iter().enumerate().all(|(e, edge)| {
            if !self.allowed(e, mode) {
                return true;
            }
            let floor = self.floor_min(e, mode);
            let first = edge.profile.minutes()[0].max(floor);
            edge.profile.minutes().iter().all(|m| m.max(floor) == first)
        })
    }

    /// Earliest-arrival path under the time-dependent profiles.
    ///
    /// Ties on arrival are broken toward the lower node id, both in the
    /// settle order and in the choice of predecessor.
    pub fn shortest_path(
        &self,
        origin: NodeId,
        dest: NodeId,
        depart: f64,
        mode: TravelMode,
    ) -> Result<Path, NetworkError> {
        let s = self.idx(origin)?;
        let d = self.idx(dest)?;
        if !(0.0..=self.horizon_min).contains(&depart) {
            return Err(NetworkError::DepartureOutsideHorizon {
                depart,
                horizon: self.horizon_min,
            });
        }
        if s == d {
            return Ok(Path {
                origin,
                dest,
                edges: Vec::new(),
                departure_min: depart,
                arrival_min: depart,
                distance_mi: 0.0,
            });
        }
        let n = self.nodes.len();
        let mut best = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[s] = depart;
        heap.push(HeapItem { key: depart, node: s });
        while let Some(HeapItem { key, node: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u == d {
                break;
            }
            for &e in &self.out_edges[u] {
                if !self.allowed(e, mode) {
                    continue;
                }
                let v = self.edge_ends[e].1;
                if done[v] {
                    continue;
                }
                let t = self.edges[e]
                    .profile
                    .exit_time(self.interval_min, key, self.floor_min(e, mode));
                let better = match t.total_cmp(&best[v]) {
                    Ordering::Less => true,
                    Ordering::Equal => pred
                        .get(v)
                        .copied()
                        .flatten()
                        .is_some_and(|p| u < self.edge_ends[p].0),
                    Ordering::Greater => false,
                };
                if better {
                    best[v] = t;
                    pred[v] = Some(e);
                    heap.push(HeapItem { key: t, node: v });
                }
            }
        }
        if !done[d] {
            return Err(NetworkError::NoPath {
                origin,
                dest,
                mode: mode.name(),
            });
        }
        let mut edges = Vec::new();
        let mut cur = d;
        while cur != s {
            let e = pred[cur].expect("settled node has a predecessor");
            edges.push(EdgeId(e as u32));
            cur = self.edge_ends[e].0;
        }
        edges.reverse();
        let distance_mi = edges.iter().map(|&e| self.edge(e).length_mi).sum();
        Ok(Path {
            origin,
            dest,
            edges,
            departure_min: depart,
            arrival_min: best[d],
            distance_mi,
        })
    }

    /// Undirected network distances (miles) from the nearest of `sources`
    /// to every node, indexed like [`RoadNetwork::nodes`].
    pub fn walking_distances_from(&self, sources: &[NodeId]) -> Result<Vec<f64>, NetworkError> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        for &src in sources {
            let i = self.idx(src)?;
            dist[i] = 0.0;
            heap.push(HeapItem { key: 0.0, node: i });
        }
        while let Some(HeapItem { key, node: u }) = heap.pop() {
            if key > dist[u] {
                continue;
            }
            for &(v, len) in &self.walk_adj[u] {
                let nd = key + len;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem { key: nd, node: v });
                }
            }
        }
        Ok(dist)
    }

    /// Undirected network distance in miles.
    pub fn walking_distance(&self, origin: NodeId, dest: NodeId) -> Result<f64, NetworkError> {
        let d = self.idx(dest)?;
        let dist = self.walking_distances_from(&[origin])?;
        if dist[d].is_finite() {
            Ok(dist[d])
        } else {
            Err(NetworkError::NoPath {
                origin,
                dest,
                mode: "walking",
            })
        }
    }

    /// Walking time in minutes at 3 mph over the undirected network.
    pub fn walking_time(&self, origin: NodeId, dest: NodeId) -> Result<f64, NetworkError> {
        Ok(walk_minutes(self.walking_distance(origin, dest)?))
    }

    pub(crate) fn node_position(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }
}

pub fn walk_minutes(miles: f64) -> f64 {
    60.0 * miles / WALK_SPEED_MPH
}

fn validate_profile(
    edge: EdgeId,
    minutes: &[f64],
    free_flow: f64,
    interval: f64,
    horizon: f64,
) -> Result<(), NetworkError> {
    let covered = minutes.len() as f64 * interval;
    if covered + TOL < horizon {
        return Err(NetworkError::ProfileTooShort {
            edge,
            covered,
            horizon,
        });
    }
    for (i, &m) in minutes.iter().enumerate() {
        if !m.is_finite() || m + TOL < free_flow {
            return Err(NetworkError::ProfileBelowFreeFlow {
                edge,
                interval: i,
                minutes: m,
                free_flow,
            });
        }
    }
    for (i, w) in minutes.windows(2).enumerate() {
        if w[1] + interval + TOL < w[0] {
            return Err(NetworkError::NonFifoProfile { edge, interval: i });
        }
    }
    Ok(())
}

pub fn load_network(path: impl AsRef<FsPath>) -> Result<RoadNetwork, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: NetworkFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    Ok(RoadNetwork::from_file_data(file)?)
}

/// A routed leg: edges plus timing from a given departure.
#[derive(Clone, Debug)]
pub struct Leg {
    pub edges: Rc<[EdgeId]>,
    pub departure_min: f64,
    pub arrival_min: f64,
    pub distance_mi: f64,
}

/// Per-scenario route cache on top of [`RoadNetwork::shortest_path`].
///
/// When the network is time-invariant for the mode, the edge sequence of an
/// OD pair is computed once and re-timed for each departure. Otherwise each
/// query runs the time-dependent search, memoized on the exact departure
/// until [`Router::clear_memo`]. Departures past the network horizon are
/// routed as of the horizon.
pub struct Router<'a> {
    net: &'a RoadNetwork,
    mode: TravelMode,
    invariant: bool,
    paths: RefCell<HashMap<(NodeId, NodeId), (Rc<[EdgeId]>, f64)>>,
    memo: RefCell<HashMap<(NodeId, NodeId, u64), Leg>>,
}

impl<'a> Router<'a> {
    pub fn new(net: &'a RoadNetwork, mode: TravelMode) -> Self {
        Self {
            net,
            mode,
            invariant: net.is_time_invariant(mode),
            paths: RefCell::new(HashMap::new()),
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn network(&self) -> &'a RoadNetwork {
        self.net
    }

    pub fn mode(&self) -> TravelMode {
        self.mode
    }

    pub fn clear_memo(&self) {
        self.memo.borrow_mut().clear();
    }

    pub fn route(&self, from: NodeId, to: NodeId, depart: f64) -> Result<Leg, NetworkError> {
        if self.invariant {
            let cached = self.paths.borrow().get(&(from, to)).cloned();
            let (edges, distance_mi) = match cached {
                Some(hit) => hit,
                None => {
                    let q = depart.min(self.net.horizon_min);
                    let path = self.net.shortest_path(from, to, q, self.mode)?;
                    let entry: (Rc<[EdgeId]>, f64) = (path.edges.into(), path.distance_mi);
                    self.paths.borrow_mut().insert((from, to), entry.clone());
                    entry
                }
            };
            let arrival_min = self.net.arrival_along(&edges, depart, self.mode);
            return Ok(Leg {
                edges,
                departure_min: depart,
                arrival_min,
                distance_mi,
            });
        }
        let key = (from, to, depart.to_bits());
        if let Some(leg) = self.memo.borrow().get(&key) {
            return Ok(leg.clone());
        }
        // past the network horizon the last interval applies; route as of
        // the horizon and re-time
        let q = depart.min(self.net.horizon_min);
        let path = self.net.shortest_path(from, to, q, self.mode)?;
        let arrival_min = if q == depart {
            path.arrival_min
        } else {
            self.net.arrival_along(&path.edges, depart, self.mode)
        };
        let leg = Leg {
            edges: path.edges.into(),
            departure_min: depart,
            arrival_min,
            distance_mi: path.distance_mi,
        };
        self.memo.borrow_mut().insert(key, leg.clone());
        Ok(leg)
    }
}


#[cfg(test)]
mod tests {
    use super::test_util::NetBuilder;
    use super::*;

    fn one_edge(profile: Option<Vec<f64>>, shuttle: bool) -> NetworkFile {
        let mut b = NetBuilder::new(60.0)
            .node(1, 0.0, 0.0)
            .node(2, 1.0, 0.0)
            .edge(1, 2, 1.0, 25.0, shuttle);
        b.file.edges[0].profile = profile;
        b.file
    }

    #[test]
    fn single_edge_free_flow() {
        let net = RoadNetwork::from_file_data(one_edge(None, false)).unwrap();
        assert_eq!(net.edges().len(), 1);
        assert!((net.edges()[0].free_flow_min() - 2.4).abs() < 1e-12);
        let p = net
            .shortest_path(NodeId(1), NodeId(2), 0.0, TravelMode::Background)
            .unwrap();
        assert!((p.duration_min() - 2.4).abs() < 1e-12);
        assert_eq!(p.distance_mi, 1.0);
    }

    #[test]
    fn shuttle_is_capped_at_fifteen_mph() {
        let net = NetBuilder::new(60.0)
            .node(1, 0.0, 0.0)
            .node(2, 1.0, 0.0)
            .road(1, 2, 1.0, 25.0, true)
            .build();
        let p = net
            .shortest_path(NodeId(1), NodeId(2), 3.0, TravelMode::Shuttle)
            .unwrap();
        assert!((p.duration_min() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn origin_equals_dest_is_empty() {
        let net = RoadNetwork::from_file_data(one_edge(None, false)).unwrap();
        let p = net
            .shortest_path(NodeId(2), NodeId(2), 7.0, TravelMode::Background)
            .unwrap();
        assert!(p.is_empty());
        assert_eq!(p.duration_min(), 0.0);
        assert_eq!(p.distance_mi, 0.0);
    }

    #[test]
    fn non_fifo_profile_names_the_edge() {
        // 30 min then 10 min: leaving at 14.9 arrives at 44.9, leaving at 15 arrives at 25
        let err = RoadNetwork::from_file_data(one_edge(Some(vec![30.0, 10.0, 10.0, 10.0]), false))
            .unwrap_err();
        assert_eq!(
            err,
            NetworkError::NonFifoProfile {
                edge: EdgeId(0),
                interval: 0
            }
        );
        assert!(err.to_string().contains("#0"));
    }

    #[test]
    fn profile_below_free_flow_rejected() {
        let err = RoadNetwork::from_file_data(one_edge(Some(vec![2.0; 4]), false)).unwrap_err();
        assert!(matches!(err, NetworkError::ProfileBelowFreeFlow { .. }));
    }

    #[test]
    fn short_profile_rejected() {
        let err = RoadNetwork::from_file_data(one_edge(Some(vec![3.0; 3]), false)).unwrap_err();
        assert!(matches!(err, NetworkError::ProfileTooShort { .. }));
    }

    #[test]
    fn dangling_edge_rejected() {
        let mut f = one_edge(None, false);
        f.edges[0].to = NodeId(9);
        assert_eq!(
            RoadNetwork::from_file_data(f).unwrap_err(),
            NetworkError::DanglingEdge {
                edge: EdgeId(0),
                node: NodeId(9)
            }
        );
    }

    #[test]
    fn one_way_shuttle_edge_is_disconnected() {
        let err = RoadNetwork::from_file_data(one_edge(None, true)).unwrap_err();
        assert!(matches!(
            err,
            NetworkError::DisconnectedShuttleSubgraph { .. }
        ));
    }

    #[test]
    fn departure_outside_horizon() {
        let net = RoadNetwork::from_file_data(one_edge(None, false)).unwrap();
        assert!(matches!(
            net.shortest_path(NodeId(1), NodeId(2), 61.0, TravelMode::Background),
            Err(NetworkError::DepartureOutsideHorizon { .. })
        ));
    }

    #[test]
    fn no_path_for_mode() {
        let net = NetBuilder::new(60.0)
            .node(1, 0.0, 0.0)
            .node(2, 1.0, 0.0)
            .node(3, 2.0, 0.0)
            .road(1, 2, 1.0, 25.0, true)
            .road(2, 3, 1.0, 25.0, false)
            .build();
        assert!(net
            .shortest_path(NodeId(1), NodeId(3), 0.0, TravelMode::Background)
            .is_ok());
        assert!(matches!(
            net.shortest_path(NodeId(1), NodeId(3), 0.0, TravelMode::Shuttle),
            Err(NetworkError::NoPath { .. })
        ));
    }

    #[test]
    fn exit_time_caps_at_next_boundary() {
        let p = TravelTimeProfile::new(vec![10.0, 1.0]);
        // entering at 14 would take 10 min, but waiting for the boundary gives 16
        assert_eq!(p.exit_time(15.0, 14.0, 0.0), 16.0);
        assert_eq!(p.exit_time(15.0, 2.0, 0.0), 12.0);
        assert_eq!(p.exit_time(15.0, 15.0, 0.0), 16.0);
        // beyond the last interval the last time applies
        assert_eq!(p.exit_time(15.0, 100.0, 0.0), 101.0);
    }

    #[test]
    fn walking_ignores_direction() {
        let net = NetBuilder::new(60.0)
            .node(1, 0.0, 0.0)
            .node(2, 0.3, 0.0)
            .edge(1, 2, 0.3, 25.0, false)
            .build();
        assert!((net.walking_time(NodeId(2), NodeId(1)).unwrap() - 6.0).abs() < 1e-9);
        assert_eq!(net.walking_time(NodeId(1), NodeId(1)).unwrap(), 0.0);
    }

    #[test]
    fn route_length_counts_two_way_once() {
        let net = NetBuilder::new(60.0)
            .node(1, 0.0, 0.0)
            .node(2, 1.0, 0.0)
            .node(3, 1.0, 1.0)
            .road(1, 2, 1.0, 25.0, true)
            .road(2, 3, 0.5, 25.0, true)
            .road(1, 3, 2.0, 25.0, false)
            .build();
        assert!((net.shuttle_route_length_mi() - 1.5).abs() < 1e-12);
        assert_eq!(net.shuttle_nodes(), vec![NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn router_matches_direct_query() {
        let net = NetBuilder::new(120.0)
            .node(1, 0.0, 0.0)
            .node(2, 1.0, 0.0)
            .node(3, 2.0, 0.0)
            .road(1, 2, 1.0, 25.0, true)
            .road(2, 3, 1.0, 25.0, true)
            .build();
        assert!(net.is_time_invariant(TravelMode::Shuttle));
        let router = Router::new(&net, TravelMode::Shuttle);
        for depart in [0.0, 13.3, 44.0] {
            let leg = router.route(NodeId(1), NodeId(3), depart).unwrap();
            let p = net
                .shortest_path(NodeId(1), NodeId(3), depart, TravelMode::Shuttle)
                .unwrap();
            assert_eq!(leg.arrival_min, p.arrival_min);
            assert_eq!(&*leg.edges, &p.edges[..]);
        }
    }
}
