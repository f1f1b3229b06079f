//! Shuttle controller: offer handling by greedy insertion, and the per-trip
//! state machine.
//!
//! A request is offered to every eligible shuttle. For each one, the
//! request's pickup and dropoff are inserted at every order-preserving pair
//! of positions in the remaining schedule, and each candidate is timed from
//! the shuttle's next free point. A candidate is feasible when the new rider's
//! wait and detour are within limits, every rider already aboard keeps their
//! detour within the limit, every booked rider keeps both their wait and
//! detour within limits, seats never run out and the battery can finish the
//! schedule and still reach the charger above the critical level.
//! The feasible candidate that finishes earliest wins.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demand::{TripKind, TripRequest};
use crate::energy::{Battery, BatterySpec};
use crate::error::{DispatchError, Error, NetworkError};
use crate::network::{EdgeId, NodeId, Router};

/// Feasibility comparisons allow this much float slack (minutes or ratio).
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShuttleId(pub u32);

impl fmt::Display for ShuttleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShuttleState {
    Idle,
    TravelingToOrigin,
    AtPickup,
    PickupDone,
    TravelingToDestination,
    AtDropoff,
    DropoffDone,
    Repositioning,
    Charging,
}

impl fmt::Display for ShuttleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Pickup,
    Dropoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub request: u32,
    pub stop: NodeId,
    pub party: u32,
    /// Predicted arrival at the stop, which is when service starts.
    pub predicted_min: f64,
}

/// Executed actions followed by pending ones; `position` is the first
/// pending action. An action stops being pending once its service starts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schedule {
    pub actions: Vec<Action>,
    pub position: usize,
}

impl Schedule {
    pub fn pending(&self) -> &[Action] {
        &self.actions[self.position..]
    }

    pub fn head(&self) -> Option<&Action> {
        self.actions.get(self.position)
    }

    pub fn is_empty(&self) -> bool {
        self.position >= self.actions.len()
    }

    fn replace_pending(&mut self, pending: Vec<Action>) {
        self.actions.truncate(self.position);
        self.actions.extend(pending);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiderStatus {
    Booked,
    /// Pickup service has started.
    Onboard,
    /// Dropoff service has started.
    Alighting,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rider {
    pub request: u32,
    pub request_min: f64,
    pub party: u32,
    pub direct_min: f64,
    pub status: RiderStatus,
    /// Arrival at the pickup stop.
    pub pickup_min: Option<f64>,
}

/// Where a shuttle is physically.
#[derive(Clone, Debug, PartialEq)]
pub enum Motion {
    Parked,
    Driving {
        edge: EdgeId,
        to: NodeId,
        entry_min: f64,
        exit_min: f64,
        length_mi: f64,
    },
    Dwelling {
        until: f64,
    },
    Charging {
        until: f64,
        point: usize,
    },
}

/// First point in time and space from which a shuttle can be re-planned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub node: NodeId,
    pub time: f64,
    /// Committed distance not yet drawn from the battery.
    pub pending_mi: f64,
    /// Committed idle minutes not yet drawn from the battery.
    pub pending_idle_min: f64,
}

#[derive(Clone, Debug)]
pub struct Shuttle {
    pub id: ShuttleId,
    pub state: ShuttleState,
    pub active: bool,
    /// Last node reached.
    pub node: NodeId,
    pub motion: Motion,
    pub occupancy: u32,
    pub capacity: u32,
    pub battery: Battery,
    pub schedule: Schedule,
    pub riders: BTreeMap<u32, Rider>,
}

impl Shuttle {
    pub fn new(id: ShuttleId, node: NodeId, capacity: u32, battery: Battery) -> Self {
        Self {
            id,
            state: ShuttleState::Idle,
            active: true,
            node,
            motion: Motion::Parked,
            occupancy: 0,
            capacity,
            battery,
            schedule: Schedule::default(),
            riders: BTreeMap::new(),
        }
    }

    pub fn anchor(&self, now: f64) -> Anchor {
        match self.motion {
            Motion::Parked => Anchor {
                node: self.node,
                time: now,
                pending_mi: 0.0,
                pending_idle_min: 0.0,
            },
            Motion::Driving {
                to,
                exit_min,
                length_mi,
                ..
            } => Anchor {
                node: to,
                time: exit_min,
                pending_mi: length_mi,
                pending_idle_min: 0.0,
            },
            Motion::Dwelling { until } | Motion::Charging { until, .. } => Anchor {
                node: self.node,
                time: until,
                pending_mi: 0.0,
                pending_idle_min: (until - now).max(0.0),
            },
        }
    }

    /// Seats taken by riders whose pickup has started and dropoff has not.
    pub fn committed_seats(&self) -> u32 {
        self.riders
            .values()
            .filter(|r| r.status == RiderStatus::Onboard)
            .map(|r| r.party)
            .sum()
    }

    pub fn is_eligible(&self, spec: &BatterySpec) -> bool {
        self.active
            && self.battery.level_kwh >= spec.seek_kwh
            && !matches!(
                self.state,
                ShuttleState::Repositioning | ShuttleState::Charging
            )
    }

    fn transition(&mut self, to: ShuttleState) -> (ShuttleState, ShuttleState) {
        let from = self.state;
        self.state = to;
        (from, to)
    }

    fn bad_event(&self, event: &str) -> DispatchError {
        DispatchError::InvalidTransition {
            shuttle: self.id,
            event: event.to_string(),
            state: self.state.to_string(),
        }
    }

    /// Applies one trip event. Returns the state change and, for service
    /// starts, the rider record it concerns.
    pub fn advance_trip_state(
        &mut self,
        event: TripEvent,
        now: f64,
    ) -> Result<Transition, DispatchError> {
        use ShuttleState::*;
        match event {
            TripEvent::Arrival => {
                let head = *self
                    .schedule
                    .head()
                    .ok_or_else(|| self.bad_event("arrival with empty schedule"))?;
                let ready = matches!(
                    self.state,
                    Idle | TravelingToOrigin | TravelingToDestination | PickupDone | DropoffDone
                );
                if !ready || head.stop != self.node {
                    return Err(self.bad_event("arrival"));
                }
                let expected = match head.kind {
                    ActionKind::Pickup => [TravelingToOrigin, AtPickup],
                    ActionKind::Dropoff => [TravelingToDestination, AtDropoff],
                };
                if matches!(self.state, TravelingToOrigin | TravelingToDestination)
                    && self.state != expected[0]
                {
                    return Err(self.bad_event("arrival"));
                }
                self.schedule.position += 1;
                let rider = self
                    .riders
                    .get_mut(&head.request)
                    .ok_or_else(|| DispatchError::InvalidTransition {
                        shuttle: self.id,
                        event: format!("arrival for unknown request {}", head.request),
                        state: self.state.to_string(),
                    })?;
                match head.kind {
                    ActionKind::Pickup => {
                        rider.status = RiderStatus::Onboard;
                        rider.pickup_min = Some(now);
                    }
                    ActionKind::Dropoff => rider.status = RiderStatus::Alighting,
                }
                Ok(Transition {
                    change: self.transition(expected[1]),
                    action: Some(head),
                })
            }
            TripEvent::PickupComplete => {
                if self.state != AtPickup {
                    return Err(self.bad_event("pickup-complete"));
                }
                let action = self.schedule.actions[self.schedule.position - 1];
                self.occupancy += action.party;
                if self.occupancy > self.capacity {
                    return Err(DispatchError::Occupancy {
                        shuttle: self.id,
                        occupancy: self.occupancy as i64,
                        capacity: self.capacity,
                    });
                }
                // a pickup always leaves its dropoff pending
                assert!(
                    !self.schedule.is_empty(),
                    "shuttle {} finished a pickup with nothing left to do",
                    self.id
                );
                Ok(Transition {
                    change: self.transition(PickupDone),
                    action: Some(action),
                })
            }
            TripEvent::DropoffComplete => {
                if self.state != AtDropoff {
                    return Err(self.bad_event("dropoff-complete"));
                }
                let action = self.schedule.actions[self.schedule.position - 1];
                if self.occupancy < action.party {
                    return Err(DispatchError::Occupancy {
                        shuttle: self.id,
                        occupancy: self.occupancy as i64 - action.party as i64,
                        capacity: self.capacity,
                    });
                }
                self.occupancy -= action.party;
                self.riders.remove(&action.request);
                Ok(Transition {
                    change: self.transition(DropoffDone),
                    action: Some(action),
                })
            }
            TripEvent::Depart => {
                let head = *self
                    .schedule
                    .head()
                    .ok_or_else(|| self.bad_event("depart with empty schedule"))?;
                if !matches!(self.state, Idle | PickupDone | DropoffDone | TravelingToOrigin | TravelingToDestination) {
                    return Err(self.bad_event("depart"));
                }
                let to = match head.kind {
                    ActionKind::Pickup => TravelingToOrigin,
                    ActionKind::Dropoff => TravelingToDestination,
                };
                Ok(Transition {
                    change: self.transition(to),
                    action: Some(head),
                })
            }
            TripEvent::Settle => {
                if !matches!(self.state, DropoffDone | PickupDone | Idle) || !self.schedule.is_empty() {
                    return Err(self.bad_event("settle"));
                }
                Ok(Transition {
                    change: self.transition(Idle),
                    action: None,
                })
            }
        }
    }

    pub(crate) fn set_state(&mut self, state: ShuttleState) {
        self.state = state;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripEvent {
    /// Reached the stop of the schedule head; service starts.
    Arrival,
    PickupComplete,
    DropoffComplete,
    /// Start driving toward the schedule head.
    Depart,
    /// Nothing left to do.
    Settle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub change: (ShuttleState, ShuttleState),
    pub action: Option<Action>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispatchParams {
    pub max_wait_min: f64,
    pub detour_threshold: f64,
    pub dwell_min: f64,
    pub battery: BatterySpec,
    /// Node of the charging station; candidates must leave enough charge to
    /// reach it.
    pub charger: NodeId,
}

/// The request with its direct shuttle time.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestCtx {
    pub id: u32,
    pub request_min: f64,
    pub kind: TripKind,
    pub origin: NodeId,
    pub dest: NodeId,
    pub party: u32,
    pub direct_min: f64,
}

impl RequestCtx {
    pub fn new(req: &TripRequest, router: &Router<'_>) -> Result<Self, NetworkError> {
        let leg = router.route(req.origin, req.dest, req.request_min)?;
        Ok(Self {
            id: req.id,
            request_min: req.request_min,
            kind: req.kind,
            origin: req.origin,
            dest: req.dest,
            party: req.party_size,
            direct_min: leg.arrival_min - leg.departure_min,
        })
    }
}

/// All order-preserving (pickup, dropoff) insertion positions for `n`
/// pending actions, in enumeration order. Positions index the new sequence.
pub fn insertion_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=n).flat_map(move |i| (i + 1..=n + 1).map(move |j| (i, j)))
}

pub fn build_candidate(pending: &[Action], i: usize, j: usize, req: &RequestCtx) -> Vec<Action> {
    let pickup = Action {
        kind: ActionKind::Pickup,
        request: req.id,
        stop: req.origin,
        party: req.party,
        predicted_min: f64::NAN,
    };
    let dropoff = Action {
        kind: ActionKind::Dropoff,
        stop: req.dest,
        ..pickup
    };
    let mut out = Vec::with_capacity(pending.len() + 2);
    out.extend_from_slice(&pending[..i]);
    out.push(pickup);
    out.extend_from_slice(&pending[i..j - 1]);
    out.push(dropoff);
    out.extend_from_slice(&pending[j - 1..]);
    out
}

pub fn enumerate_insertions(schedule: &Schedule, req: &RequestCtx) -> Vec<Vec<Action>> {
    let pending = schedule.pending();
    insertion_pairs(pending.len())
        .map(|(i, j)| build_candidate(pending, i, j, req))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation {
    Capacity,
    NewWait,
    NewDetour,
    OnboardDetour { request: u32 },
    BookedWait { request: u32 },
    BookedDetour { request: u32 },
    Energy,
    /// Pruned: cannot beat the current best.
    Dominated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateEval {
    pub violation: Option<Violation>,
    /// Candidate with predicted arrival times filled in.
    pub actions: Vec<Action>,
    pub new_wait_min: f64,
    pub new_invehicle_min: f64,
    /// Predicted completion of the last action minus the decision time.
    pub total_travel_min: f64,
    pub distance_mi: f64,
    pub projected_level_kwh: f64,
}

impl CandidateEval {
    pub fn feasible(&self) -> bool {
        self.violation.is_none()
    }
}

fn seats_ok(start: u32, capacity: u32, actions: &[Action]) -> bool {
    let mut occ = start as i64;
    for a in actions {
        match a.kind {
            ActionKind::Pickup => occ += a.party as i64,
            ActionKind::Dropoff => occ -= a.party as i64,
        }
        if occ > capacity as i64 {
            return false;
        }
    }
    true
}

fn detour(invehicle: f64, direct: f64) -> f64 {
    (invehicle - direct) / direct
}

/// Times and checks one candidate for `shuttle`. With `bound`, timing stops
/// as soon as completion exceeds it and the verdict is `Dominated`.
pub fn validate_candidate(
    candidate: &[Action],
    req: &RequestCtx,
    shuttle: &Shuttle,
    now: f64,
    params: &DispatchParams,
    router: &Router<'_>,
    bound: Option<f64>,
) -> Result<CandidateEval, NetworkError> {
    let mut eval = CandidateEval {
        violation: None,
        actions: candidate.to_vec(),
        new_wait_min: f64::NAN,
        new_invehicle_min: f64::NAN,
        total_travel_min: f64::NAN,
        distance_mi: 0.0,
        projected_level_kwh: f64::NAN,
    };
    if !seats_ok(shuttle.committed_seats(), shuttle.capacity, candidate) {
        eval.violation = Some(Violation::Capacity);
        return Ok(eval);
    }
    let anchor = shuttle.anchor(now);
    let mut node = anchor.node;
    let mut t = anchor.time;
    for a in eval.actions.iter_mut() {
        let leg = router.route(node, a.stop, t)?;
        eval.distance_mi += leg.distance_mi;
        a.predicted_min = leg.arrival_min;
        t = leg.arrival_min + params.dwell_min;
        node = a.stop;
        if bound.is_some_and(|b| t - now > b) {
            eval.violation = Some(Violation::Dominated);
            return Ok(eval);
        }
    }
    eval.total_travel_min = t - now;

    let mut pickups: BTreeMap<u32, f64> = BTreeMap::new();
    let mut others = None;
    for a in &eval.actions {
        let is_new = a.request == req.id;
        match a.kind {
            ActionKind::Pickup => {
                pickups.insert(a.request, a.predicted_min);
                if is_new {
                    eval.new_wait_min = a.predicted_min - req.request_min;
                } else {
                    let wait = a.predicted_min - shuttle.riders[&a.request].request_min;
                    if wait > params.max_wait_min + FEAS_TOL {
                        others = others.or(Some(Violation::BookedWait { request: a.request }));
                    }
                }
            }
            ActionKind::Dropoff if is_new => {
                eval.new_invehicle_min = a.predicted_min - (pickups[&a.request] + params.dwell_min);
            }
            ActionKind::Dropoff => {
                let r = &shuttle.riders[&a.request];
                let (picked, v) = match pickups.get(&a.request) {
                    Some(&p) => (p, Violation::BookedDetour { request: a.request }),
                    None => (
                        r.pickup_min.expect("onboard rider has a pickup time"),
                        Violation::OnboardDetour { request: a.request },
                    ),
                };
                let invehicle = a.predicted_min - (picked + params.dwell_min);
                if detour(invehicle, r.direct_min) > params.detour_threshold + FEAS_TOL {
                    others = others.or(Some(v));
                }
            }
        }
    }
    eval.violation = if eval.new_wait_min > params.max_wait_min + FEAS_TOL {
        Some(Violation::NewWait)
    } else if detour(eval.new_invehicle_min, req.direct_min) > params.detour_threshold + FEAS_TOL {
        Some(Violation::NewDetour)
    } else {
        others
    };
    if eval.violation.is_some() {
        return Ok(eval);
    }

    let spec = &params.battery;
    let to_charger = router.route(node, params.charger, t)?.distance_mi;
    let moving = anchor.pending_mi + eval.distance_mi + to_charger;
    let idle = anchor.pending_idle_min + params.dwell_min * eval.actions.len() as f64;
    eval.projected_level_kwh =
        shuttle.battery.level_kwh - spec.moving_kwh_per_mi * moving - spec.idle_kwh_per_min * idle;
    if eval.projected_level_kwh < spec.critical_kwh {
        eval.violation = Some(Violation::Energy);
    }
    Ok(eval)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    NoActiveShuttle,
    NoSeats,
    NoFeasibleSchedule,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NoActiveShuttle => "no-active-shuttle",
            RejectReason::NoSeats => "no-seats",
            RejectReason::NoFeasibleSchedule => "no-feasible-schedule",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Offer {
    pub shuttle: ShuttleId,
    /// Index into the fleet slice.
    pub shuttle_index: usize,
    pub insertion: (usize, usize),
    pub eval: CandidateEval,
}

impl Offer {
    pub fn wait_min(&self) -> f64 {
        self.eval.new_wait_min
    }

    pub fn invehicle_min(&self) -> f64 {
        self.eval.new_invehicle_min
    }

    pub fn total_travel_min(&self) -> f64 {
        self.eval.total_travel_min
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Disposition {
    Offer(Offer),
    Rejected(RejectReason),
}

/// Ordering key for offers: total travel, then wait, then shuttle id, then
/// enumeration order.
pub fn offer_key(o: &Offer) -> (f64, f64, ShuttleId, (usize, usize)) {
    (o.eval.total_travel_min, o.eval.new_wait_min, o.shuttle, o.insertion)
}

fn better(a: &Offer, b: &Offer) -> bool {
    let (ka, kb) = (offer_key(a), offer_key(b));
    ka.0
        .total_cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.cmp(&kb.2))
        .then(ka.3.cmp(&kb.3))
        .is_lt()
}

/// Best offer over all eligible shuttles and insertion positions, without
/// changing any state.
pub fn best_offer(
    fleet: &[Shuttle],
    req: &RequestCtx,
    now: f64,
    params: &DispatchParams,
    router: &Router<'_>,
) -> Result<Disposition, NetworkError> {
    let mut best: Option<Offer> = None;
    let mut any_eligible = false;
    let mut any_seats = false;
    for (idx, shuttle) in fleet.iter().enumerate() {
        if !shuttle.is_eligible(&params.battery) {
            continue;
        }
        any_eligible = true;
        let pending = shuttle.schedule.pending();
        for (i, j) in insertion_pairs(pending.len()) {
            let candidate = build_candidate(pending, i, j, req);
            let bound = best.as_ref().map(|b| b.eval.total_travel_min);
            let eval = validate_candidate(&candidate, req, shuttle, now, params, router, bound)?;
            if eval.violation != Some(Violation::Capacity) {
                any_seats = true;
            }
            if !eval.feasible() {
                continue;
            }
            let offer = Offer {
                shuttle: shuttle.id,
                shuttle_index: idx,
                insertion: (i, j),
                eval,
            };
            if best.as_ref().map_or(true, |b| better(&offer, b)) {
                best = Some(offer);
            }
        }
    }
    Ok(match best {
        Some(o) => Disposition::Offer(o),
        None if !any_eligible => Disposition::Rejected(RejectReason::NoActiveShuttle),
        None if !any_seats => Disposition::Rejected(RejectReason::NoSeats),
        None => Disposition::Rejected(RejectReason::NoFeasibleSchedule),
    })
}

/// Finds the best offer and, if there is one, installs its schedule on the
/// chosen shuttle and books the rider.
pub fn handle_request(
    fleet: &mut [Shuttle],
    req: &RequestCtx,
    now: f64,
    params: &DispatchParams,
    router: &Router<'_>,
) -> Result<Disposition, NetworkError> {
    let disposition = best_offer(fleet, req, now, params, router)?;
    if let Disposition::Offer(offer) = &disposition {
        let shuttle = &mut fleet[offer.shuttle_index];
        shuttle.schedule.replace_pending(offer.eval.actions.clone());
        shuttle.riders.insert(
            req.id,
            Rider {
                request: req.id,
                request_min: req.request_min,
                party: req.party,
                direct_min: req.direct_min,
                status: RiderStatus::Booked,
                pickup_min: None,
            },
        );
    }
    Ok(disposition)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispositionKind {
    Accepted,
    Rejected,
}

/// One row of the dispatch log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub request_id: u32,
    pub disposition: DispositionKind,
    pub reason: Option<RejectReason>,
    pub shuttle_id: Option<ShuttleId>,
    pub request_min: f64,
    pub pickup_min: Option<f64>,
    pub dropoff_min: Option<f64>,
    pub wait_min: Option<f64>,
    pub invehicle_min: Option<f64>,
    pub direct_min: f64,
    pub kind: TripKind,
    pub origin_node: NodeId,
    pub dest_node: NodeId,
    pub party_size: u32,
    pub offered_wait_min: Option<f64>,
}

impl DispatchRecord {
    pub fn accepted(&self) -> bool {
        self.disposition == DispositionKind::Accepted
    }
}

pub fn write_dispatch_log(path: impl AsRef<Path>, rows: &[DispatchRecord]) -> Result<(), Error> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    if rows.is_empty() {
        w.write_record([
            "request_id",
            "disposition",
            "reason",
            "shuttle_id",
            "request_min",
            "pickup_min",
            "dropoff_min",
            "wait_min",
            "invehicle_min",
            "direct_min",
            "kind",
            "origin_node",
            "dest_node",
            "party_size",
            "offered_wait_min",
        ])
        .map_err(|e| Error::parse(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dispatch_log(path: impl AsRef<Path>) -> Result<Vec<DispatchRecord>, Error> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    rdr.deserialize()
        .map(|row| row.map_err(|e| Error::parse(path, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::test_util::NetBuilder;
    use crate::network::{RoadNetwork, TravelMode};

    fn line() -> RoadNetwork {
        // 1 - 2 - 3 - 4 - 5 - 6 - 7, 1 mi apart, 15 mph => 4 min per edge
        let mut b = NetBuilder::new(600.0);
        for i in 1..=7 {
            b = b.node(i, i as f64, 0.0);
        }
        for i in 1..7 {
            b = b.road(i, i + 1, 1.0, 25.0, true);
        }
        b.build()
    }

    fn params() -> DispatchParams {
        DispatchParams {
            max_wait_min: 8.0,
            detour_threshold: 1.0,
            dwell_min: 0.5,
            battery: BatterySpec::default(),
            charger: NodeId(1),
        }
    }

    fn shuttle(id: u32, node: u32) -> Shuttle {
        Shuttle::new(
            ShuttleId(id),
            NodeId(node),
            8,
            Battery::full(&BatterySpec::default()),
        )
    }

    fn req(id: u32, t: f64, o: u32, d: u32, router: &Router<'_>) -> RequestCtx {
        RequestCtx::new(
            &TripRequest {
                id,
                request_min: t,
                kind: TripKind::FM,
                origin: NodeId(o),
                dest: NodeId(d),
                party_size: 1,
            },
            router,
        )
        .unwrap()
    }

    #[test]
    fn insertion_counts() {
        assert_eq!(insertion_pairs(0).count(), 1);
        assert_eq!(insertion_pairs(2).collect::<Vec<_>>(), vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for n in 0..=6 {
            assert_eq!(insertion_pairs(n).count(), (n + 1) * (n + 2) / 2);
        }
    }

    #[test]
    fn empty_fleet_rejects() {
        let net = line();
        let router = Router::new(&net, TravelMode::Shuttle);
        let r = req(1, 0.0, 2, 4, &router);
        let mut s = shuttle(0, 2);
        s.active = false;
        let d = best_offer(&[s], &r, 0.0, &params(), &router).unwrap();
        assert_eq!(d, Disposition::Rejected(RejectReason::NoActiveShuttle));
    }

    #[test]
    fn co_located_direct_trip() {
        let net = line();
        let router = Router::new(&net, TravelMode::Shuttle);
        let r = req(1, 3.0, 2, 4, &router);
        assert!((r.direct_min - 8.0).abs() < 1e-12);
        let Disposition::Offer(o) = best_offer(&[shuttle(0, 2)], &r, 3.0, &params(), &router).unwrap() else {
            panic!("expected an offer");
        };
        assert_eq!(o.wait_min(), 0.0);
        assert!((o.invehicle_min() - 8.0).abs() < 1e-12);
        let kinds: Vec<_> = o.eval.actions.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![ActionKind::Pickup, ActionKind::Dropoff]);
        // zero detour passes a zero threshold
        let mut p = params();
        p.detour_threshold = 0.0;
        assert!(matches!(
            best_offer(&[shuttle(0, 2)], &r, 3.0, &p, &router).unwrap(),
            Disposition::Offer(_)
        ));
    }

    #[test]
    fn nearer_shuttle_wins() {
        let net = line();
        let router = Router::new(&net, TravelMode::Shuttle);
        let r = req(1, 0.0, 5, 7, &router);
        let mut p = params();
        p.max_wait_min = 20.0;
        p.charger = NodeId(5);
        let fleet = [shuttle(0, 1), shuttle(1, 3)];
        let Disposition::Offer(o) = best_offer(&fleet, &r, 0.0, &p, &router).unwrap() else {
            panic!("expected an offer");
        };
        assert_eq!(o.shuttle, ShuttleId(1));
        assert!((o.wait_min() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn booked_rider_wait_blocks_insertion() {
        let net = line();
        let router = Router::new(&net, TravelMode::Shuttle);
        let mut fleet = [shuttle(0, 1)];
        let p = params();
        // first rider waits 8 min (two edges)
        let r1 = req(1, 0.0, 3, 5, &router);
        assert!(matches!(handle_request(&mut fleet, &r1, 0.0, &p, &router).unwrap(), Disposition::Offer(_)));
        // a detour via node 2 before picking up rider 1 would add a dwell
        let cand = build_candidate(fleet[0].schedule.pending(), 0, 3, &req(2, 0.0, 2, 6, &router));
        let eval = validate_candidate(&cand, &req(2, 0.0, 2, 6, &router), &fleet[0], 0.0, &p, &router, None).unwrap();
        assert_eq!(eval.violation, Some(Violation::BookedWait { request: 1 }));
    }

    #[test]
    fn interleaved_occupancy_trace() {
        let net = line();
        let router = Router::new(&net, TravelMode::Shuttle);
        let mut s = shuttle(0, 1);
        let mut p = params();
        p.max_wait_min = 30.0;
        let r1 = req(1, 0.0, 2, 4, &router);
        let r2 = req(2, 0.0, 3, 5, &router);
        let mut fleet = [s.clone()];
        handle_request(&mut fleet, &r1, 0.0, &p, &router).unwrap();
        handle_request(&mut fleet, &r2, 0.0, &p, &router).unwrap();
        s = fleet[0].clone();
        let order: Vec<_> = s.schedule.pending().iter().map(|a| (a.kind, a.request)).collect();
        assert_eq!(
            order,
            vec![
                (ActionKind::Pickup, 1),
                (ActionKind::Pickup, 2),
                (ActionKind::Dropoff, 1),
                (ActionKind::Dropoff, 2)
            ]
        );
        let mut trace = Vec::new();
        while let Some(head) = s.schedule.head().copied() {
            s.advance_trip_state(TripEvent::Depart, 0.0).unwrap();
            s.node = head.stop;
            s.advance_trip_state(TripEvent::Arrival, head.predicted_min).unwrap();
            let ev = match head.kind {
                ActionKind::Pickup => TripEvent::PickupComplete,
                ActionKind::Dropoff => TripEvent::DropoffComplete,
            };
            s.advance_trip_state(ev, head.predicted_min + 0.5).unwrap();
            trace.push(s.occupancy);
        }
        assert_eq!(trace, vec![1, 2, 1, 0]);
        s.advance_trip_state(TripEvent::Settle, 0.0).unwrap();
        assert_eq!(s.state, ShuttleState::Idle);
        assert_eq!(s.node, NodeId(5));
    }

    #[test]
    fn inconsistent_event_is_an_error() {
        let mut s = shuttle(0, 1);
        assert!(s.advance_trip_state(TripEvent::PickupComplete, 0.0).is_err());
        assert!(s.advance_trip_state(TripEvent::Arrival, 0.0).is_err());
    }
}
