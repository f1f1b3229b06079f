//! Trip requests from hourly OD totals.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DemandError, Error};
use crate::network::{NodeId, RoadNetwork};
use crate::planner::StopPlan;
use crate::rng;

/// Minimum walking distance between a request's two stops, in miles.
pub const MIN_TRIP_MI: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TripKind {
    /// Shuttle stop to transit stop.
    FM,
    /// Transit stop to shuttle stop.
    LM,
}

impl fmt::Display for TripKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripKind::FM => "FM",
            TripKind::LM => "LM",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripRequest {
    pub id: u32,
    pub request_min: f64,
    pub kind: TripKind,
    #[serde(rename = "origin_node")]
    pub origin: NodeId,
    #[serde(rename = "dest_node")]
    pub dest: NodeId,
    pub party_size: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdTrip {
    pub from: u32,
    pub to: u32,
    pub count: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdInterval {
    pub start_min: f64,
    pub end_min: f64,
    pub trips: Vec<OdTrip>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub id: u32,
    pub internal: bool,
    /// Network node where background vehicles for this centroid start and end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdMatrix {
    pub intervals: Vec<OdInterval>,
    pub centroids: Vec<Centroid>,
}

impl OdMatrix {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let od: OdMatrix = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        od.validate()?;
        Ok(od)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        let mut ids = BTreeSet::new();
        for c in &self.centroids {
            if !ids.insert(c.id) {
                return Err(DemandError::InvalidOd(format!("duplicate centroid {}", c.id)));
            }
        }
        let mut expected_start = 0.0;
        for (i, iv) in self.intervals.iter().enumerate() {
            if (iv.start_min - expected_start).abs() > 1e-9 || !(iv.end_min > iv.start_min) {
                return Err(DemandError::InvalidOd(format!(
                    "interval {i} does not continue the tiling at {expected_start} min"
                )));
            }
            expected_start = iv.end_min;
            for t in &iv.trips {
                if !(t.count >= 0.0 && t.count.is_finite()) {
                    return Err(DemandError::InvalidOd(format!(
                        "interval {i}: negative or non-finite count {}",
                        t.count
                    )));
                }
                for c in [t.from, t.to] {
                    if !ids.contains(&c) {
                        return Err(DemandError::InvalidOd(format!("unknown centroid {c}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// End of the last interval.
    pub fn horizon_min(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end_min)
    }

    fn is_internal(&self) -> HashMap<u32, bool> {
        self.centroids.iter().map(|c| (c.id, c.internal)).collect()
    }

    /// Per-interval totals of internal-to-external (outgoing) and
    /// external-to-internal (incoming) trips.
    pub fn boundary_totals(&self) -> Vec<(f64, f64)> {
        let internal = self.is_internal();
        self.intervals
            .iter()
            .map(|iv| {
                let mut out = 0.0;
                let mut inc = 0.0;
                for t in &iv.trips {
                    match (internal[&t.from], internal[&t.to]) {
                        (true, false) => out += t.count,
                        (false, true) => inc += t.count,
                        _ => {}
                    }
                }
                (out, inc)
            })
            .collect()
    }
}

/// Integer counts whose sum is `round(Σ quotas)`, handing the remainder to
/// the largest fractional parts (earlier index first on ties).
pub fn apportion(quotas: &[f64]) -> Vec<u64> {
    let total = quotas.iter().sum::<f64>().round() as u64;
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Eligible (origin, destination) stop pairs for one trip kind.
pub fn eligible_pairs(
    net: &RoadNetwork,
    plan: &StopPlan,
    kind: TripKind,
) -> Result<Vec<(NodeId, NodeId)>, Error> {
    let mut pairs = Vec::new();
    for &s in &plan.shuttle_stops {
        let dist = net.walking_distances_from(&[s])?;
        for &t in &plan.transit_stops {
            let i = net.node_position(t).expect("validated plan");
            if s != t && dist[i] + 1e-9 >= MIN_TRIP_MI {
                pairs.push(match kind {
                    TripKind::FM => (s, t),
                    TripKind::LM => (t, s),
                });
            }
        }
    }
    pairs.sort();
    Ok(pairs)
}

/// FM and LM request counts per OD interval for the given transit share.
pub fn request_counts(od: &OdMatrix, share: f64) -> Result<(Vec<u64>, Vec<u64>), DemandError> {
    if !(0.0..=1.0).contains(&share) {
        return Err(DemandError::InvalidShare(share));
    }
    let totals = od.boundary_totals();
    let fm: Vec<f64> = totals.iter().map(|t| share * t.0).collect();
    let lm: Vec<f64> = totals.iter().map(|t| share * t.1).collect();
    Ok((apportion(&fm), apportion(&lm)))
}

pub fn generate_requests(
    od: &OdMatrix,
    plan: &StopPlan,
    net: &RoadNetwork,
    share: f64,
    seed: u64,
) -> Result<Vec<TripRequest>, Error> {
    od.validate()?;
    let (fm_counts, lm_counts) = request_counts(od, share)?;
    let mut times = rng::stream(seed, rng::DEMAND_STREAM);
    let mut picks = rng::stream(seed, rng::ASSIGNMENT_STREAM);
    let mut out = Vec::new();
    for (kind, counts) in [(TripKind::FM, &fm_counts), (TripKind::LM, &lm_counts)] {
        if counts.iter().all(|&c| c == 0) {
            continue;
        }
        let pairs = eligible_pairs(net, plan, kind)?;
        if pairs.is_empty() {
            return Err(DemandError::NoEligiblePair {
                kind: match kind {
                    TripKind::FM => "FM",
                    TripKind::LM => "LM",
                },
                min_mi: MIN_TRIP_MI,
            }
            .into());
        }
        for (iv, &n) in od.intervals.iter().zip(counts) {
            for _ in 0..n {
                let t = times.gen_range(iv.start_min..iv.end_min);
                let (origin, dest) = pairs[picks.gen_range(0..pairs.len())];
                out.push(TripRequest {
                    id: 0,
                    request_min: t,
                    kind,
                    origin,
                    dest,
                    party_size: 1,
                });
            }
        }
    }
    out.sort_by(|a, b| a.request_min.total_cmp(&b.request_min).then(a.kind.cmp(&b.kind)));
    for (i, r) in out.iter_mut().enumerate() {
        r.id = i as u32 + 1;
    }
    Ok(out)
}

pub fn write_requests(path: impl AsRef<Path>, requests: &[TripRequest]) -> Result<(), Error> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    if requests.is_empty() {
        w.write_record(["id", "request_min", "kind", "origin_node", "dest_node", "party_size"])
            .map_err(|e| Error::parse(path, e))?;
    }
    for r in requests {
        w.serialize(r).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a requests CSV without checking it against a stop plan.
pub fn read_requests(path: impl AsRef<Path>) -> Result<Vec<TripRequest>, Error> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    rdr.deserialize()
        .map(|row| row.map_err(|e| Error::parse(path, e)))
        .collect()
}

pub fn validate_requests(
    requests: &[TripRequest],
    plan: &StopPlan,
    net: &RoadNetwork,
    horizon_min: f64,
) -> Result<(), Error> {
    let shuttle: BTreeSet<_> = plan.shuttle_stops.iter().copied().collect();
    let transit: BTreeSet<_> = plan.transit_stops.iter().copied().collect();
    let mut ids = BTreeSet::new();
    let bad = |id: u32, reason: String| -> Error { DemandError::InvalidRequest { id, reason }.into() };
    for r in requests {
        if !ids.insert(r.id) {
            return Err(bad(r.id, "duplicate id".into()));
        }
        if r.origin == r.dest {
            return Err(bad(r.id, "origin equals destination".into()));
        }
        if !(0.0..horizon_min).contains(&r.request_min) {
            return Err(bad(r.id, format!("request time {} outside the horizon", r.request_min)));
        }
        if r.party_size == 0 {
            return Err(bad(r.id, "party size must be at least 1".into()));
        }
        let (from_set, to_set) = match r.kind {
            TripKind::FM => (&shuttle, &transit),
            TripKind::LM => (&transit, &shuttle),
        };
        if !from_set.contains(&r.origin) || !to_set.contains(&r.dest) {
            return Err(bad(r.id, format!("{} trip between {} and {} does not match the stop plan", r.kind, r.origin, r.dest)));
        }
        let d = net.walking_distance(r.origin, r.dest)?;
        if d + 1e-9 < MIN_TRIP_MI {
            return Err(bad(r.id, format!("stops are only {d:.3} mi apart")));
        }
    }
    Ok(())
}

pub fn load_requests(
    path: impl AsRef<Path>,
    plan: &StopPlan,
    net: &RoadNetwork,
    horizon_min: f64,
) -> Result<Vec<TripRequest>, Error> {
    let requests = read_requests(path)?;
    validate_requests(&requests, plan, net, horizon_min)?;
    Ok(requests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn apportion_matches_rounded_total() {
        assert_eq!(apportion(&[0.4, 0.4, 0.4]), vec![1, 0, 0]);
        assert_eq!(apportion(&[1.5, 2.5]), vec![2, 2]);
        assert_eq!(apportion(&[]), Vec::<u64>::new());
        assert_eq!(apportion(&[0.0, 0.0]), vec![0, 0]);
    }

    proptest! {
        #[test]
        fn apportion_total_and_bounds(qs in prop::collection::vec(0.0f64..50.0, 0..20)) {
            let c = apportion(&qs);
            let total: u64 = c.iter().sum();
            prop_assert_eq!(total, qs.iter().sum::<f64>().round() as u64);
            for (q, n) in qs.iter().zip(&c) {
                prop_assert!(*n as f64 >= q.floor() && *n as f64 <= q.floor() + 1.0);
            }
        }
    }
}
