//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use shuttlesim_core::dispatch::{handle_request, DispatchParams, RequestCtx};
use shuttlesim_core::network::Router;
use shuttlesim_core::{
    load_network, reference, Battery, BatterySpec, DemandProfile, NodeId, RoadNetwork, ScenarioConfig, Shuttle,
    ShuttleId, StopPlan, TravelMode, TripRequest,
};
use shuttlesim_core::demand::generate_requests;
use shuttlesim_core::OdMatrix;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/reference")
}

pub struct Reference {
    pub net: RoadNetwork,
    pub plan: StopPlan,
    pub requests: Vec<TripRequest>,
}

/// Shipped reference network and stops with seed-1 present demand.
pub fn reference_data() -> Reference {
    let dir = data_dir();
    let net = load_network(dir.join(reference::NETWORK_FILE)).expect("reference network");
    let plan = StopPlan::load(dir.join(reference::STOPS_FILE)).expect("reference stops");
    let od = OdMatrix::load(dir.join(reference::OD_PRESENT_FILE)).expect("reference od");
    let requests = generate_requests(&od, &plan, &net, 0.01, 1).expect("requests");
    Reference { net, plan, requests }
}

/// Reference scenario with paths pointing at the shipped data.
pub fn scenario(fleet: u32, demand: DemandProfile) -> ScenarioConfig {
    let mut cfg = reference::scenario(fleet, 8.0, 1, demand, 1);
    cfg.resolve_paths(&data_dir());
    cfg
}

/// Every ordered pair of distinct stops.
pub fn stop_pairs(plan: &StopPlan) -> Vec<(NodeId, NodeId)> {
    let stops: Vec<NodeId> = plan.shuttle_stops.iter().chain(&plan.transit_stops).copied().collect();
    let mut out = Vec::new();
    for &a in &stops {
        for &b in &stops {
            if a != b {
                out.push((a, b));
            }
        }
    }
    out
}

pub fn params(plan: &StopPlan) -> DispatchParams {
    DispatchParams {
        max_wait_min: 10.0,
        detour_threshold: 1.0,
        dwell_min: 0.5,
        battery: BatterySpec::default(),
        charger: plan.depot,
    }
}

/// A fleet parked at the depot that has accepted up to `preload` of the
/// first requests, plus the next request to price against it.
pub fn loaded_fleet(
    r: &Reference,
    router: &Router<'_>,
    size: u32,
    preload: usize,
) -> (Vec<Shuttle>, RequestCtx) {
    let params = params(&r.plan);
    let spec = BatterySpec::default();
    let mut fleet: Vec<Shuttle> = (0..size)
        .map(|k| Shuttle::new(ShuttleId(k), r.plan.depot, 8, Battery::full(&spec)))
        .collect();
    let mut sorted = r.requests.clone();
    sorted.sort_by(|a, b| a.request_min.total_cmp(&b.request_min));
    for req in sorted.iter().take(preload) {
        let ctx = RequestCtx::new(req, router).expect("routable request");
        handle_request(&mut fleet, &ctx, req.request_min, &params, router).expect("dispatch");
    }
    let probe = RequestCtx::new(&sorted[preload], router).expect("routable request");
    (fleet, probe)
}

pub fn shuttle_router(net: &RoadNetwork) -> Router<'_> {
    Router::new(net, TravelMode::Shuttle)
}
