use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuttlesim_core::dispatch::{
    best_offer, handle_request, Action, ActionKind, Disposition, DispatchParams, Motion,
    RejectReason, RequestCtx, Rider, RiderStatus,
};
use shuttlesim_core::network::{EdgeRecord, Node, NetworkFile, Router};
use shuttlesim_core::{
    Battery, BatterySpec, EdgeId, NodeId, RoadNetwork, Shuttle, ShuttleId, ShuttleState, TravelMode,
    TripKind,
};

const TOL: f64 = 1e-9;

fn random_network(rng: &mut ChaCha8Rng) -> RoadNetwork {
    let n: u32 = rng.gen_range(4..=7);
    let nodes = (0..n)
        .map(|i| Node {
            id: NodeId(i),
            x_mi: rng.gen_range(0.0..2.0),
            y_mi: rng.gen_range(0.0..2.0),
        })
        .collect();
    let mut pairs: Vec<(u32, u32)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            pairs.push((a, b));
        }
    }
    let mut edges = Vec::new();
    for (a, b) in pairs {
        let length_mi = rng.gen_range(0.2..1.0);
        for (from, to) in [(a, b), (b, a)] {
            let free_flow = 60.0 * length_mi / 15.0;
            let profile = (0..16)
                .map(|_| free_flow + rng.gen_range(0.0..1.5))
                .collect::<Vec<f64>>();
            edges.push(EdgeRecord {
                from: NodeId(from),
                to: NodeId(to),
                length_mi,
                speed_mph: 15.0,
                shuttle_ok: true,
                overtake_ok: false,
                profile: rng.gen_bool(0.5).then_some(profile),
            });
        }
    }
    RoadNetwork::from_file_data(NetworkFile {
        interval_minutes: 15.0,
        horizon_minutes: 240.0,
        nodes,
        edges,
    })
    .expect("generated network is valid")
}

fn drive(net: &RoadNetwork, from: NodeId, to: NodeId, t: f64) -> (f64, f64) {
    let p = net.shortest_path(from, to, t, TravelMode::Shuttle).unwrap();
    (p.arrival_min, p.distance_mi)
}

fn two_distinct(rng: &mut ChaCha8Rng, n: u32) -> (NodeId, NodeId) {
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (NodeId(a), NodeId(b))
}

struct Instance {
    net: RoadNetwork,
    fleet: Vec<Shuttle>,
    req: RequestCtx,
    now: f64,
    params: DispatchParams,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let net = random_network(rng);
    let n = net.nodes().len() as u32;
    let now = rng.gen_range(10.0..60.0);
    let mut battery = BatterySpec::default();
    if rng.gen_bool(0.3) {
        // heavy draw so the energy guard can bind on a small network
        battery.moving_kwh_per_mi = rng.gen_range(2.0..6.0);
    }
    let params = DispatchParams {
        max_wait_min: [6.0, 8.0, 10.0][rng.gen_range(0..3)],
        detour_threshold: [0.5, 1.0][rng.gen_range(0..2)],
        dwell_min: [0.0, 0.5][rng.gen_range(0..2)],
        battery,
        charger: NodeId(rng.gen_range(0..n)),
    };
    let fleet_size = rng.gen_range(1..=2);
    // at most three requests in total, counting the new one
    let mut existing = rng.gen_range(0..=2);
    let mut next_id = 0;
    let mut fleet = Vec::new();
    for k in 0..fleet_size {
        let node = NodeId(rng.gen_range(0..n));
        let capacity = rng.gen_range(1..=3);
        let level = if rng.gen_bool(0.15) {
            rng.gen_range(5.0..15.0)
        } else {
            rng.gen_range(15.0..30.0)
        };
        let mut s = Shuttle::new(ShuttleId(k), node, capacity, Battery::with_level(level));
        s.motion = match rng.gen_range(0..3) {
            0 => Motion::Parked,
            1 => Motion::Dwelling {
                until: now + rng.gen_range(0.0..0.5),
            },
            _ => {
                let out: Vec<EdgeId> = net
                    .edges()
                    .iter()
                    .filter(|e| e.to == node)
                    .map(|e| e.id)
                    .collect();
                let e = net.edge(*out.choose(rng).unwrap());
                s.node = e.from;
                Motion::Driving {
                    edge: e.id,
                    to: e.to,
                    entry_min: now - 0.5,
                    exit_min: now + rng.gen_range(0.1..2.0),
                    length_mi: e.length_mi,
                }
            }
        };
        if rng.gen_bool(0.1) {
            s.state = [ShuttleState::Repositioning, ShuttleState::Charging][rng.gen_range(0..2)];
        }
        let riders_here = if k + 1 == fleet_size {
            existing
        } else {
            rng.gen_range(0..=existing)
        };
        existing -= riders_here;
        // random interleaving; each pickup precedes its dropoff
        let mut pending: Vec<Action> = Vec::new();
        for _ in 0..riders_here {
            let id = next_id;
            next_id += 1;
            let (o, d) = two_distinct(rng, n);
            let party = rng.gen_range(1..=2);
            let onboard = rng.gen_bool(0.5);
            let request_min = now - rng.gen_range(0.0..8.0);
            let (direct_min, _) = drive(&net, o, d, request_min);
            let pickup_min = onboard.then(|| request_min + rng.gen_range(0.0..4.0)).map(|p: f64| p.min(now));
            s.riders.insert(
                id,
                Rider {
                    request: id,
                    request_min,
                    party,
                    direct_min,
                    status: if onboard { RiderStatus::Onboard } else { RiderStatus::Booked },
                    pickup_min,
                },
            );
            let act = |kind, stop| Action {
                kind,
                request: id,
                stop,
                party,
                predicted_min: f64::NAN,
            };
            let drop_at = rng.gen_range(0..=pending.len());
            if onboard {
                pending.insert(drop_at, act(ActionKind::Dropoff, d));
            } else {
                let pick_at = rng.gen_range(0..=pending.len());
                pending.insert(pick_at, act(ActionKind::Pickup, o));
                let drop_at = rng.gen_range(pick_at + 1..=pending.len());
                pending.insert(drop_at, act(ActionKind::Dropoff, d));
            }
        }
        if s.committed_seats() > capacity {
            s.capacity = s.committed_seats();
        }
        s.schedule.actions = pending;
        s.schedule.position = 0;
        fleet.push(s);
    }
    let (origin, dest) = two_distinct(rng, n);
    let (arr, _) = drive(&net, origin, dest, now);
    let req = RequestCtx {
        id: 100,
        request_min: now,
        kind: TripKind::FM,
        origin,
        dest,
        party: rng.gen_range(1..=2),
        direct_min: arr - now,
    };
    Instance {
        net,
        fleet,
        req,
        now,
        params,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Verdict {
    Seats,
    Other,
    Ok { total: f64, wait: f64, times: Vec<f64> },
}

/// Checks one candidate sequence from first principles.
fn judge(inst: &Instance, s: &Shuttle, seq: &[Action]) -> Verdict {
    let p = &inst.params;
    let mut occ: i64 = s
        .riders
        .values()
        .filter(|r| r.status == RiderStatus::Onboard)
        .map(|r| r.party as i64)
        .sum();
    for a in seq {
        occ += match a.kind {
            ActionKind::Pickup => a.party as i64,
            ActionKind::Dropoff => -(a.party as i64),
        };
        if occ > s.capacity as i64 {
            return Verdict::Seats;
        }
    }
    let (mut node, mut t, pending_mi, pending_idle) = match s.motion {
        Motion::Parked => (s.node, inst.now, 0.0, 0.0),
        Motion::Driving { to, exit_min, length_mi, .. } => (to, exit_min, length_mi, 0.0),
        Motion::Dwelling { until } | Motion::Charging { until, .. } => {
            (s.node, until, 0.0, until - inst.now)
        }
    };
    let mut dist = 0.0;
    let mut times = Vec::new();
    for a in seq {
        let (arr, d) = drive(&inst.net, node, a.stop, t);
        dist += d;
        times.push(arr);
        t = arr + p.dwell_min;
        node = a.stop;
    }
    let pickup_of = |id: u32| {
        seq.iter()
            .zip(&times)
            .find(|(a, _)| a.request == id && a.kind == ActionKind::Pickup)
            .map(|(_, &t)| t)
    };
    let mut wait = f64::NAN;
    for (a, &arr) in seq.iter().zip(&times) {
        let (request_min, direct) = if a.request == inst.req.id {
            (inst.req.request_min, inst.req.direct_min)
        } else {
            let r = &s.riders[&a.request];
            (r.request_min, r.direct_min)
        };
        match a.kind {
            ActionKind::Pickup => {
                if a.request == inst.req.id {
                    wait = arr - request_min;
                }
                if arr - request_min > p.max_wait_min + TOL {
                    return Verdict::Other;
                }
            }
            ActionKind::Dropoff => {
                let picked = pickup_of(a.request)
                    .or_else(|| s.riders.get(&a.request).and_then(|r| r.pickup_min))
                    .unwrap();
                let ride = arr - (picked + p.dwell_min);
                if (ride - direct) / direct > p.detour_threshold + TOL {
                    return Verdict::Other;
                }
            }
        }
    }
    let (_, home) = drive(&inst.net, node, p.charger, t);
    let left = s.battery.level_kwh
        - p.battery.moving_kwh_per_mi * (pending_mi + dist + home)
        - p.battery.idle_kwh_per_min * (pending_idle + p.dwell_min * seq.len() as f64);
    if left < p.battery.critical_kwh {
        return Verdict::Other;
    }
    Verdict::Ok {
        total: t - inst.now,
        wait,
        times,
    }
}

#[derive(Debug, PartialEq)]
enum Choice {
    Take {
        shuttle: ShuttleId,
        slots: (usize, usize),
        total: f64,
        wait: f64,
        times: Vec<f64>,
    },
    Reject(RejectReason),
}

fn brute_force(inst: &Instance) -> Choice {
    let mut best: Option<(f64, f64, ShuttleId, (usize, usize), Vec<f64>)> = None;
    let mut eligible = false;
    let mut seats = false;
    for s in &inst.fleet {
        let usable = s.active
            && s.battery.level_kwh >= inst.params.battery.seek_kwh
            && !matches!(s.state, ShuttleState::Repositioning | ShuttleState::Charging);
        if !usable {
            continue;
        }
        eligible = true;
        let pending = s.schedule.pending();
        let len = pending.len() + 2;
        for pi in 0..len {
            for di in pi + 1..len {
                let mut rest = pending.iter();
                let seq: Vec<Action> = (0..len)
                    .map(|slot| {
                        let kind = if slot == pi {
                            Some(ActionKind::Pickup)
                        } else if slot == di {
                            Some(ActionKind::Dropoff)
                        } else {
                            None
                        };
                        match kind {
                            Some(kind) => Action {
                                kind,
                                request: inst.req.id,
                                stop: if kind == ActionKind::Pickup {
                                    inst.req.origin
                                } else {
                                    inst.req.dest
                                },
                                party: inst.req.party,
                                predicted_min: f64::NAN,
                            },
                            None => *rest.next().unwrap(),
                        }
                    })
                    .collect();
                match judge(inst, s, &seq) {
                    Verdict::Seats => {}
                    Verdict::Other => seats = true,
                    Verdict::Ok { total, wait, times } => {
                        seats = true;
                        let key = (total, wait, s.id, (pi, di));
                        let wins = best.as_ref().map_or(true, |b| {
                            key.0
                                .total_cmp(&b.0)
                                .then(key.1.total_cmp(&b.1))
                                .then(key.2.cmp(&b.2))
                                .then(key.3.cmp(&b.3))
                                .is_lt()
                        });
                        if wins {
                            best = Some((total, wait, s.id, (pi, di), times));
                        }
                    }
                }
            }
        }
    }
    match best {
        Some((total, wait, shuttle, slots, times)) => Choice::Take {
            shuttle,
            slots,
            total,
            wait,
            times,
        },
        None if !eligible => Choice::Reject(RejectReason::NoActiveShuttle),
        None if !seats => Choice::Reject(RejectReason::NoSeats),
        None => Choice::Reject(RejectReason::NoFeasibleSchedule),
    }
}

/// Outcome counts from [`check`].
#[derive(Debug, Default)]
pub struct InsertionStats {
    pub cases: usize,
    pub offers: usize,
    pub rejections: std::collections::BTreeSet<String>,
}

/// Compares the dispatcher's selection with the brute-force minimum on
/// `cases` random micro-instances. Accepted offers are also installed with
/// `handle_request` and the booking checked.
pub fn check(cases: usize, seed: u64) -> Result<InsertionStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = InsertionStats::default();
    for case in 0..cases {
        let mut inst = random_instance(&mut rng);
        let want = brute_force(&inst);
        let router = Router::new(&inst.net, TravelMode::Shuttle);
        let got = best_offer(&inst.fleet, &inst.req, inst.now, &inst.params, &router)
            .map_err(|e| format!("case {case}: {e}"))?;
        let got = match got {
            Disposition::Offer(o) => Choice::Take {
                shuttle: o.shuttle,
                slots: o.insertion,
                total: o.total_travel_min(),
                wait: o.wait_min(),
                times: o.eval.actions.iter().map(|a| a.predicted_min).collect(),
            },
            Disposition::Rejected(r) => Choice::Reject(r),
        };
        if got != want {
            return Err(format!("case {case}: dispatcher chose {got:?}, brute force {want:?}"));
        }
        stats.cases += 1;
        match &want {
            Choice::Take { shuttle, .. } => {
                stats.offers += 1;
                let mut fleet = std::mem::take(&mut inst.fleet);
                handle_request(&mut fleet, &inst.req, inst.now, &inst.params, &router)
                    .map_err(|e| format!("case {case}: {e}"))?;
                let s = fleet.iter().find(|s| s.id == *shuttle).unwrap();
                if !s.riders.contains_key(&inst.req.id) {
                    return Err(format!("case {case}: rider not booked on shuttle {shuttle}"));
                }
            }
            Choice::Reject(r) => {
                stats.rejections.insert(r.to_string());
            }
        }
    }
    Ok(stats)
}
