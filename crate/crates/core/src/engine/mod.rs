//! Discrete-event loop for one scenario, plus sweeps over many.
//!
//! Events are processed in (time, sequence) order, where the sequence number
//! is assigned when the event is created. Requests arrive until the horizon;
//! trips in progress and charging sessions are then allowed to finish.

pub mod bundle;
pub mod config;
pub mod figures;
pub mod sweep;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

pub use bundle::{read_bundle, write_bundle, write_trajectories, Bundle};
pub use config::{DemandProfile, ScenarioConfig, ScenarioInputs};
pub use sweep::{
    aggregate, expand_grid, run_sweep, write_aggregate, write_runs, AggregateRow, GridSpec,
    RunSummary, SweepOptions, SweepOutcome,
};

use crate::demand::TripRequest;
use crate::dispatch::{
    handle_request, ActionKind, DispatchParams, DispatchRecord, Disposition, DispositionKind,
    Motion, RequestCtx, Shuttle, ShuttleId, ShuttleState, TripEvent,
};
use crate::energy::{charging_check, Battery, LEVEL_TOL_KWH, BatterySpec, ChargeAction, ChargingSession, ChargingStation};
use crate::error::{DispatchError, EnergyFault, Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::network::{EdgeId, NodeId, RoadNetwork, Router, TravelMode};
use crate::traffic::{self, ImpactRow, ShuttleTraversal};

/// Offset after a threshold crossing at which the battery timer fires, so
/// the level is strictly below the threshold.
const TIMER_EPS_MIN: f64 = 1e-6;
const RECHECK_MIN: f64 = 1.0;
const TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Idle,
    Travel,
    Reposition,
    Dwell,
    Waitlist,
    Charging,
}

impl Activity {
    fn draws_idle(self) -> bool {
        matches!(self, Activity::Idle | Activity::Dwell | Activity::Waitlist)
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activity::Idle => "idle",
            Activity::Travel => "travel",
            Activity::Reposition => "reposition",
            Activity::Dwell => "dwell",
            Activity::Waitlist => "waitlist",
            Activity::Charging => "charging",
        })
    }
}

/// One contiguous stretch of a shuttle's day. Moving stretches are one edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub shuttle_id: ShuttleId,
    pub start_min: f64,
    pub end_min: f64,
    pub activity: Activity,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub edge: Option<EdgeId>,
    pub distance_mi: f64,
    pub occupancy: u32,
    pub battery_kwh: f64,
}

impl TrajectoryRecord {
    pub fn duration_min(&self) -> f64 {
        self.end_min - self.start_min
    }
}

/// Result of the end-of-run consistency checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub max_energy_residual_kwh: f64,
    pub min_battery_kwh: f64,
    pub max_battery_kwh: f64,
    pub max_occupancy: u32,
    pub max_wait_excess_min: f64,
    pub max_charging_overlap: usize,
    pub violations: Vec<String>,
}

impl InvariantReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub config: ScenarioConfig,
    pub requests: Vec<TripRequest>,
    pub dispatch: Vec<DispatchRecord>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub charging: Vec<ChargingSession>,
    pub impact: Option<Vec<ImpactRow>>,
    pub metrics: MetricsReport,
    pub invariants: InvariantReport,
    /// Final shuttle batteries, by shuttle id.
    pub batteries: Vec<Battery>,
    pub end_min: f64,
}

impl SimulationResult {
    pub fn traversals(&self) -> Vec<ShuttleTraversal> {
        shuttle_traversals(&self.trajectories)
    }
}

pub fn shuttle_traversals(trajectories: &[TrajectoryRecord]) -> Vec<ShuttleTraversal> {
    trajectories
        .iter()
        .filter_map(|t| {
            t.edge.map(|edge| ShuttleTraversal {
                shuttle: t.shuttle_id,
                edge,
                entry_min: t.start_min,
                exit_min: t.end_min,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EventKind {
    Request(usize),
    EdgeExit(usize),
    ServiceDone(usize),
    ChargeDone(usize),
    BatteryTimer { shuttle: usize, token: u64 },
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Engine-side bookkeeping for one shuttle.
struct Agent {
    leg: Option<LegProgress>,
    activity: Activity,
    seg_start: f64,
    seg_from: NodeId,
    last_accrual: f64,
    token: u64,
    join_min: Option<f64>,
    reposition_mi: f64,
    point: Option<usize>,
    charge_start: f64,
    level_before: f64,
}

struct LegProgress {
    edges: Rc<[EdgeId]>,
    next: usize,
    target: NodeId,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    net: &'a RoadNetwork,
    router: Router<'a>,
    params: DispatchParams,
    spec: BatterySpec,
    requests: &'a [TripRequest],
    fleet: Vec<Shuttle>,
    agents: Vec<Agent>,
    station: ChargingStation,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    records: Vec<DispatchRecord>,
    record_of: BTreeMap<u32, usize>,
    trajectories: Vec<TrajectoryRecord>,
    sessions: Vec<ChargingSession>,
    notes: Vec<String>,
}

fn fault(e: EnergyFault) -> Error {
    Error::Energy(e)
}

impl<'a> Sim<'a> {
    fn push(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time >= self.now - TOL, "event scheduled in the past");
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    /// Draws idle energy for the time since the last accrual.
    fn accrue(&mut self, i: usize, now: f64) -> Result<()> {
        let agent = &mut self.agents[i];
        if agent.activity.draws_idle() && now > agent.last_accrual {
            let mut dt = now - agent.last_accrual;
            if matches!(agent.activity, Activity::Waitlist) {
                // a waiting shuttle powers down at the critical level
                let level = self.fleet[i].battery.level_kwh;
                dt = dt.min(((level - self.spec.critical_kwh) / self.spec.idle_kwh_per_min).max(0.0));
            }
            let id = self.fleet[i].id;
            self.fleet[i]
                .battery
                .consume_idle(&self.spec, dt, id, now)
                .map_err(fault)?;
        }
        agent.last_accrual = now;
        Ok(())
    }

    fn close_segment(&mut self, i: usize, now: f64) {
        let a = &self.agents[i];
        let s = &self.fleet[i];
        if now > a.seg_start || matches!(a.activity, Activity::Charging) {
            self.trajectories.push(TrajectoryRecord {
                shuttle_id: s.id,
                start_min: a.seg_start,
                end_min: now,
                activity: a.activity,
                from_node: a.seg_from,
                to_node: s.node,
                edge: None,
                distance_mi: 0.0,
                occupancy: s.occupancy,
                battery_kwh: s.battery.level_kwh,
            });
        }
    }

    /// Ends the current stretch at `now` and starts `activity`.
    fn set_activity(&mut self, i: usize, activity: Activity, now: f64) -> Result<()> {
        self.accrue(i, now)?;
        let a = &self.agents[i];
        if !matches!(a.activity, Activity::Travel | Activity::Reposition) {
            self.close_segment(i, now);
        }
        let node = self.fleet[i].node;
        let a = &mut self.agents[i];
        a.activity = activity;
        a.seg_start = now;
        a.seg_from = node;
        a.last_accrual = now;
        Ok(())
    }

    fn new_token(&mut self, i: usize) -> u64 {
        self.agents[i].token += 1;
        self.agents[i].token
    }

    fn enter_edge(&mut self, i: usize, edge: EdgeId, now: f64) {
        let e = self.net.edge(edge);
        let exit = self.net.edge_exit_time(edge, now, TravelMode::Shuttle);
        self.fleet[i].motion = Motion::Driving {
            edge,
            to: e.to,
            entry_min: now,
            exit_min: exit,
            length_mi: e.length_mi,
        };
        self.push(exit, EventKind::EdgeExit(i));
    }

    /// Continues along the current leg, routing a new one toward `target`
    /// when needed. Returns false if already at `target`.
    fn step_toward(&mut self, i: usize, target: NodeId, now: f64) -> Result<bool> {
        let node = self.fleet[i].node;
        if node == target {
            self.agents[i].leg = None;
            return Ok(false);
        }
        let stale = match &self.agents[i].leg {
            Some(l) => l.target != target || l.next >= l.edges.len(),
            None => true,
        };
        if stale {
            let leg = self.router.route(node, target, now)?;
            self.agents[i].leg = Some(LegProgress {
                edges: leg.edges,
                next: 0,
                target,
            });
        }
        let leg = self.agents[i].leg.as_mut().expect("leg set above");
        let edge = leg.edges[leg.next];
        leg.next += 1;
        debug_assert_eq!(self.net.edge(edge).from, node);
        self.enter_edge(i, edge, now);
        Ok(true)
    }

    /// Shuttle is at a node with pending work: serve or drive on.
    fn proceed(&mut self, i: usize, now: f64) -> Result<()> {
        let head = *self.fleet[i].schedule.head().expect("pending work");
        if self.fleet[i].state != ShuttleState::TravelingToOrigin
            && self.fleet[i].state != ShuttleState::TravelingToDestination
        {
            self.fleet[i].advance_trip_state(TripEvent::Depart, now)?;
        } else {
            // a new offer may have changed the head's kind
            let want = match head.kind {
                ActionKind::Pickup => ShuttleState::TravelingToOrigin,
                ActionKind::Dropoff => ShuttleState::TravelingToDestination,
            };
            if self.fleet[i].state != want {
                self.fleet[i].set_state(want);
            }
        }
        if self.agents[i].activity != Activity::Travel {
            self.set_activity(i, Activity::Travel, now)?;
        }
        if !self.step_toward(i, head.stop, now)? {
            self.arrive(i, now)?;
        }
        Ok(())
    }

    fn arrive(&mut self, i: usize, now: f64) -> Result<()> {
        self.fleet[i].motion = Motion::Parked;
        let t = self.fleet[i].advance_trip_state(TripEvent::Arrival, now)?;
        let action = t.action.expect("arrival concerns an action");
        if let Some(&r) = self.record_of.get(&action.request) {
            let rec = &mut self.records[r];
            match action.kind {
                ActionKind::Pickup => {
                    rec.pickup_min = Some(now);
                    let wait = now - rec.request_min;
                    rec.wait_min = Some(wait);
                    if wait > self.cfg.max_wait_min + 1e-6 {
                        self.notes.push(format!(
                            "request {} waited {wait:.6} min, limit {}",
                            rec.request_id, self.cfg.max_wait_min
                        ));
                    }
                }
                ActionKind::Dropoff => {
                    rec.dropoff_min = Some(now);
                    let picked = rec.pickup_min.expect("dropoff after pickup");
                    rec.invehicle_min = Some(now - (picked + self.cfg.dwell_min));
                }
            }
        }
        self.set_activity(i, Activity::Dwell, now)?;
        let until = now + self.cfg.dwell_min;
        self.fleet[i].motion = Motion::Dwelling { until };
        self.push(until, EventKind::ServiceDone(i));
        Ok(())
    }

    fn on_service_done(&mut self, i: usize, now: f64) -> Result<()> {
        self.accrue(i, now)?;
        let ev = match self.fleet[i].state {
            ShuttleState::AtPickup => TripEvent::PickupComplete,
            ShuttleState::AtDropoff => TripEvent::DropoffComplete,
            s => {
                return Err(DispatchError::InvalidTransition {
                    shuttle: self.fleet[i].id,
                    event: "service-done".into(),
                    state: s.to_string(),
                }
                .into())
            }
        };
        // the dwell stretch carries the occupancy before boarding/alighting
        self.set_activity(i, Activity::Travel, now)?;
        self.fleet[i].advance_trip_state(ev, now)?;
        self.fleet[i].motion = Motion::Parked;
        if self.fleet[i].schedule.is_empty() {
            self.fleet[i].advance_trip_state(TripEvent::Settle, now)?;
            self.set_activity(i, Activity::Idle, now)?;
            self.charging_hook(i, now)?;
        } else {
            self.charging_hook(i, now)?;
            self.proceed(i, now)?;
        }
        Ok(())
    }

    fn on_edge_exit(&mut self, i: usize, now: f64) -> Result<()> {
        let Motion::Driving {
            edge,
            to,
            entry_min,
            length_mi,
            ..
        } = self.fleet[i].motion.clone()
        else {
            unreachable!("edge exit while not driving");
        };
        let id = self.fleet[i].id;
        self.fleet[i]
            .battery
            .consume_moving(&self.spec, length_mi, id, now)
            .map_err(fault)?;
        let from = self.fleet[i].node;
        self.trajectories.push(TrajectoryRecord {
            shuttle_id: id,
            start_min: entry_min,
            end_min: now,
            activity: self.agents[i].activity,
            from_node: from,
            to_node: to,
            edge: Some(edge),
            distance_mi: length_mi,
            occupancy: self.fleet[i].occupancy,
            battery_kwh: self.fleet[i].battery.level_kwh,
        });
        self.fleet[i].node = to;
        self.fleet[i].motion = Motion::Parked;
        let a = &mut self.agents[i];
        a.seg_start = now;
        a.seg_from = to;
        a.last_accrual = now;

        if self.fleet[i].state == ShuttleState::Repositioning {
            self.agents[i].reposition_mi += length_mi;
            if !self.step_toward(i, self.station.node, now)? {
                self.start_charging(i, now)?;
            }
            return Ok(());
        }
        self.proceed(i, now)
    }

    fn on_request(&mut self, k: usize, now: f64) -> Result<()> {
        for i in 0..self.fleet.len() {
            self.accrue(i, now)?;
        }
        self.router.clear_memo();
        let req = &self.requests[k];
        let ctx = RequestCtx::new(req, &self.router)?;
        let disposition = handle_request(&mut self.fleet, &ctx, now, &self.params, &self.router)?;
        let mut rec = DispatchRecord {
            request_id: req.id,
            disposition: DispositionKind::Rejected,
            reason: None,
            shuttle_id: None,
            request_min: req.request_min,
            pickup_min: None,
            dropoff_min: None,
            wait_min: None,
            invehicle_min: None,
            direct_min: ctx.direct_min,
            kind: req.kind,
            origin_node: req.origin,
            dest_node: req.dest,
            party_size: req.party_size,
            offered_wait_min: None,
        };
        match disposition {
            Disposition::Rejected(reason) => {
                rec.reason = Some(reason);
                self.records.push(rec);
            }
            Disposition::Offer(offer) => {
                rec.disposition = DispositionKind::Accepted;
                rec.shuttle_id = Some(offer.shuttle);
                rec.offered_wait_min = Some(offer.wait_min());
                self.record_of.insert(req.id, self.records.len());
                self.records.push(rec);
                let i = offer.shuttle_index;
                match self.fleet[i].motion {
                    Motion::Parked => {
                        // invalidate a pending seek timer; it is re-armed when idle again
                        self.new_token(i);
                        self.proceed(i, now)?;
                    }
                    Motion::Driving { .. } => {
                        // re-plan from the next node
                        self.agents[i].leg = None;
                    }
                    Motion::Dwelling { .. } => {}
                    Motion::Charging { .. } => unreachable!("charging shuttles get no offers"),
                }
            }
        }
        Ok(())
    }

    /// Runs the charging rule for shuttle `i` until it settles.
    fn charging_hook(&mut self, i: usize, now: f64) -> Result<()> {
        loop {
            let s = &self.fleet[i];
            if matches!(s.state, ShuttleState::Repositioning | ShuttleState::Charging) {
                return Ok(());
            }
            let id = s.id;
            let busy = !s.schedule.is_empty();
            let action = charging_check(&self.station, id, s.battery.level_kwh, busy, &self.spec);
            match action {
                ChargeAction::None => {
                    if !busy {
                        self.arm_timer(i, self.spec.seek_kwh, now, true);
                    }
                    return Ok(());
                }
                ChargeAction::JoinWaitlist => {
                    self.station.join(id);
                    self.fleet[i].active = false;
                    self.agents[i].join_min = Some(now);
                    self.agents[i].reposition_mi = 0.0;
                    self.set_activity(i, Activity::Waitlist, now)?;
                }
                ChargeAction::RepositionToCharger { point } => {
                    self.new_token(i);
                    self.station.assign(id, point);
                    self.fleet[i].set_state(ShuttleState::Repositioning);
                    self.fleet[i].active = false;
                    self.set_activity(i, Activity::Reposition, now)?;
                    self.agents[i].leg = None;
                    let target = self.station.node;
                    self.agents[i].point = Some(point);
                    if !self.step_toward(i, target, now)? {
                        self.start_charging(i, now)?;
                    }
                    return Ok(());
                }
                ChargeAction::DeactivateAndRecheck => {
                    self.fleet[i].active = false;
                    let token = self.new_token(i);
                    self.push(now + RECHECK_MIN, EventKind::BatteryTimer { shuttle: i, token });
                    return Ok(());
                }
                ChargeAction::Wait => {
                    if self.fleet[i].battery.level_kwh > self.spec.critical_kwh + LEVEL_TOL_KWH {
                        self.arm_timer(i, self.spec.critical_kwh, now, false);
                    } else {
                        // powered down at the critical level
                        let token = self.new_token(i);
                        self.push(now + RECHECK_MIN, EventKind::BatteryTimer { shuttle: i, token });
                    }
                    return Ok(());
                }
            }
        }
    }

    /// Schedules a check for when idle draw takes the level below `threshold`.
    fn arm_timer(&mut self, i: usize, threshold: f64, now: f64, within_horizon: bool) {
        let token = self.new_token(i);
        if let Some(dt) = self.fleet[i].battery.idle_minutes_until(&self.spec, threshold) {
            let at = now + dt + TIMER_EPS_MIN;
            if !within_horizon || at <= self.cfg.horizon_min {
                self.push(at, EventKind::BatteryTimer { shuttle: i, token });
            }
        }
    }

    fn start_charging(&mut self, i: usize, now: f64) -> Result<()> {
        self.fleet[i].motion = Motion::Parked;
        self.set_activity(i, Activity::Charging, now)?;
        self.fleet[i].set_state(ShuttleState::Charging);
        let level = self.fleet[i].battery.level_kwh;
        let until = now + self.spec.minutes_to_full(level);
        let point = self.agents[i].point.expect("point reserved before repositioning");
        self.fleet[i].motion = Motion::Charging { until, point };
        self.agents[i].charge_start = now;
        self.agents[i].level_before = level;
        self.push(until, EventKind::ChargeDone(i));
        Ok(())
    }

    fn on_charge_done(&mut self, i: usize, now: f64) -> Result<()> {
        let Motion::Charging { point, .. } = self.fleet[i].motion else {
            unreachable!("charge done while not charging");
        };
        self.fleet[i].battery.charge_full(&self.spec);
        let a = &self.agents[i];
        self.sessions.push(ChargingSession {
            shuttle_id: self.fleet[i].id,
            waitlist_join_min: a.join_min.expect("joined before charging"),
            charge_start_min: a.charge_start,
            charge_end_min: now,
            level_before_kwh: a.level_before,
            reposition_mi: a.reposition_mi,
        });
        self.station.release(point);
        self.agents[i].point = None;
        self.agents[i].join_min = None;
        self.fleet[i].motion = Motion::Parked;
        self.fleet[i].set_state(ShuttleState::Idle);
        self.fleet[i].active = true;
        self.set_activity(i, Activity::Idle, now)?;
        // hand the point to the next in line
        if let Some(&next) = self.station.waitlist().front() {
            let j = next.0 as usize;
            self.accrue(j, now)?;
            self.charging_hook(j, now)?;
        }
        self.charging_hook(i, now)
    }

    fn on_timer(&mut self, i: usize, token: u64, now: f64) -> Result<()> {
        if self.agents[i].token != token {
            return Ok(());
        }
        self.accrue(i, now)?;
        self.charging_hook(i, now)
    }
}

/// Runs one scenario after loading its input files.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    let inputs = ScenarioInputs::load(cfg)?;
    let requests = inputs.requests_for(cfg)?;
    run_with_inputs(cfg, &inputs, requests)
}

/// Runs one scenario over already-loaded inputs and a request list.
pub fn run_with_inputs(
    cfg: &ScenarioConfig,
    inputs: &ScenarioInputs,
    requests: Vec<TripRequest>,
) -> Result<SimulationResult> {
    cfg.validate()?;
    let net = inputs.network.as_ref();
    if (net.shuttle_speed_cap_mph() - cfg.shuttle_speed_mph).abs() > 0.0 {
        return Err(Error::Config(format!(
            "network was loaded with a {} mph shuttle cap, scenario asks for {} mph",
            net.shuttle_speed_cap_mph(),
            cfg.shuttle_speed_mph
        )));
    }
    let depot = inputs.depot(cfg)?;
    let spec = BatterySpec::default();
    let params = DispatchParams {
        max_wait_min: cfg.max_wait_min,
        detour_threshold: cfg.detour_threshold,
        dwell_min: cfg.dwell_min,
        battery: spec,
        charger: depot,
    };
    let fleet: Vec<Shuttle> = (0..cfg.fleet_size)
        .map(|k| Shuttle::new(ShuttleId(k), depot, cfg.capacity, Battery::full(&spec)))
        .collect();
    let agents = (0..cfg.fleet_size)
        .map(|_| Agent {
            leg: None,
            activity: Activity::Idle,
            seg_start: 0.0,
            seg_from: depot,
            last_accrual: 0.0,
            token: 0,
            join_min: None,
            reposition_mi: 0.0,
            point: None,
            charge_start: 0.0,
            level_before: 0.0,
        })
        .collect();
    let mut sim = Sim {
        cfg,
        net,
        router: Router::new(net, TravelMode::Shuttle),
        params,
        spec,
        requests: &requests,
        fleet,
        agents,
        station: ChargingStation::new(depot, cfg.charging_points as usize),
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0.0,
        records: Vec::with_capacity(requests.len()),
        record_of: BTreeMap::new(),
        trajectories: Vec::new(),
        sessions: Vec::new(),
        notes: Vec::new(),
    };
    for (k, r) in requests.iter().enumerate() {
        if r.request_min > cfg.horizon_min {
            return Err(Error::Config(format!(
                "request {} at {} min is past the horizon",
                r.id, r.request_min
            )));
        }
        sim.push(r.request_min, EventKind::Request(k));
    }
    for i in 0..sim.fleet.len() {
        sim.charging_hook(i, 0.0)?;
    }
    while let Some(ev) = sim.queue.pop() {
        if ev.time < sim.now {
            sim.notes.push(format!("event at {} min processed after {} min", ev.time, sim.now));
        }
        sim.now = ev.time;
        let now = ev.time;
        match ev.kind {
            EventKind::Request(k) => sim.on_request(k, now)?,
            EventKind::EdgeExit(i) => sim.on_edge_exit(i, now)?,
            EventKind::ServiceDone(i) => sim.on_service_done(i, now)?,
            EventKind::ChargeDone(i) => sim.on_charge_done(i, now)?,
            EventKind::BatteryTimer { shuttle, token } => sim.on_timer(shuttle, token, now)?,
        }
    }
    let end_min = sim.now.max(cfg.horizon_min);
    for i in 0..sim.fleet.len() {
        if !matches!(sim.fleet[i].motion, Motion::Parked) {
            sim.notes.push(format!("shuttle {} still moving at the end", sim.fleet[i].id));
        }
        sim.accrue(i, end_min)?;
        sim.close_segment(i, end_min);
    }
    sim.trajectories.sort_by(|a, b| {
        a.shuttle_id
            .cmp(&b.shuttle_id)
            .then(a.start_min.total_cmp(&b.start_min))
            .then(a.end_min.total_cmp(&b.end_min))
    });

    let Sim {
        records,
        trajectories,
        sessions,
        fleet,
        notes,
        ..
    } = sim;
    let batteries: Vec<Battery> = fleet.iter().map(|s| s.battery.clone()).collect();
    let mut invariants = check_invariants(cfg, &spec, &records, &trajectories, &sessions, &batteries, end_min);
    invariants.violations.extend(notes);

    let impact = if cfg.background_traffic {
        let od = inputs.od.as_ref().expect("validated: background traffic needs an od");
        let traversals = shuttle_traversals(&trajectories);
        Some(traffic::impact_for(net, od, &traversals, cfg.background_scale, cfg.seed, cfg.horizon_min)?)
    } else {
        None
    };
    let metrics = metrics::report(cfg, net, &records, &trajectories, &sessions, &batteries, impact.as_deref())?;
    Ok(SimulationResult {
        config: cfg.clone(),
        requests,
        dispatch: records,
        trajectories,
        charging: sessions,
        impact,
        metrics,
        invariants,
        batteries,
        end_min,
    })
}

/// End-of-run consistency checks over the logs.
pub fn check_invariants(
    cfg: &ScenarioConfig,
    spec: &BatterySpec,
    records: &[DispatchRecord],
    trajectories: &[TrajectoryRecord],
    sessions: &[ChargingSession],
    batteries: &[Battery],
    end_min: f64,
) -> InvariantReport {
    let mut rep = InvariantReport {
        min_battery_kwh: f64::INFINITY,
        max_battery_kwh: f64::NEG_INFINITY,
        ..Default::default()
    };
    let v = &mut rep.violations;
    for (k, b) in batteries.iter().enumerate() {
        let residual = b.ledger_residual().abs();
        rep.max_energy_residual_kwh = rep.max_energy_residual_kwh.max(residual);
        if residual > 1e-9 {
            v.push(format!("shuttle {k}: energy ledger off by {residual:e} kWh"));
        }
        rep.min_battery_kwh = rep.min_battery_kwh.min(b.min_level_kwh);
        rep.max_battery_kwh = rep.max_battery_kwh.max(b.level_kwh).max(b.initial_kwh);
    }
    for t in trajectories {
        rep.min_battery_kwh = rep.min_battery_kwh.min(t.battery_kwh);
        rep.max_battery_kwh = rep.max_battery_kwh.max(t.battery_kwh);
        rep.max_occupancy = rep.max_occupancy.max(t.occupancy);
    }
    if rep.min_battery_kwh < -crate::energy::LEVEL_TOL_KWH || rep.max_battery_kwh > spec.capacity_kwh + 1e-9 {
        v.push(format!(
            "battery left [0, {}] kWh: min {}, max {}",
            spec.capacity_kwh, rep.min_battery_kwh, rep.max_battery_kwh
        ));
    }
    if rep.max_occupancy > cfg.capacity {
        v.push(format!("occupancy reached {}", rep.max_occupancy));
    }
    // charging sessions: points never oversubscribed
    let mut edges: Vec<(f64, i32)> = Vec::new();
    for s in sessions {
        edges.push((s.charge_start_min, 1));
        edges.push((s.charge_end_min, -1));
        if s.charge_end_min < s.charge_start_min || s.waitlist_join_min > s.charge_start_min + 1e-12 {
            v.push(format!("charging session of shuttle {} is out of order", s.shuttle_id));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut live = 0i32;
    for (_, d) in edges {
        live += d;
        rep.max_charging_overlap = rep.max_charging_overlap.max(live.max(0) as usize);
    }
    if rep.max_charging_overlap > cfg.charging_points as usize {
        v.push(format!(
            "{} shuttles charging at once on {} points",
            rep.max_charging_overlap, cfg.charging_points
        ));
    }
    for r in records {
        if !r.accepted() {
            continue;
        }
        match (r.pickup_min, r.dropoff_min) {
            (Some(p), Some(_)) => {
                let excess = p - r.request_min - cfg.max_wait_min;
                rep.max_wait_excess_min = rep.max_wait_excess_min.max(excess);
            }
            _ => v.push(format!("accepted request {} was not completed", r.request_id)),
        }
    }
    // time accounting: stretches tile [0, end] per shuttle
    let mut by_shuttle: BTreeMap<ShuttleId, Vec<&TrajectoryRecord>> = BTreeMap::new();
    for t in trajectories {
        by_shuttle.entry(t.shuttle_id).or_default().push(t);
    }
    for (id, segs) in by_shuttle {
        let mut t = 0.0;
        for s in segs {
            if (s.start_min - t).abs() > 1e-9 {
                v.push(format!("shuttle {id}: gap or overlap at {t} min"));
                break;
            }
            t = s.end_min;
        }
        if (t - end_min).abs() > 1e-9 {
            v.push(format!("shuttle {id}: trajectory ends at {t}, run ends at {end_min}"));
        }
    }
    rep
}
