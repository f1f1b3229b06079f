use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuttlesim_core::network::{EdgeRecord, Node, NetworkFile};
use shuttlesim_core::{NodeId, RoadNetwork, TravelMode};

const INTERVAL: f64 = 15.0;
pub const HORIZON: f64 = 120.0;
const SHUTTLE_MPH: f64 = 15.0;

/// Random FIFO profile: each interval may drop by at most one interval
/// length, and never below free flow.
fn fifo_profile(rng: &mut ChaCha8Rng, free_flow: f64) -> Vec<f64> {
    let n = (HORIZON / INTERVAL) as usize;
    let mut out = Vec::with_capacity(n);
    let mut prev = free_flow + rng.gen_range(0.0..10.0);
    for _ in 0..n {
        let next: f64 = if rng.gen_bool(0.3) {
            free_flow + rng.gen_range(0.0..25.0)
        } else {
            prev + rng.gen_range(-4.0..4.0)
        };
        let next = next.max(free_flow).max(prev - INTERVAL);
        out.push(next);
        prev = next;
    }
    out
}

pub struct Case {
    pub file: NetworkFile,
    pub mode: TravelMode,
}

pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n: u32 = rng.gen_range(2..=8);
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: NodeId(i),
            x_mi: rng.gen_range(0.0..2.0),
            y_mi: rng.gen_range(0.0..2.0),
        })
        .collect();
    let shuttle = rng.gen_bool(0.5);
    let mut edges = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, from: u32, to: u32, ok: bool| {
        let length_mi = rng.gen_range(0.1..1.5);
        let speed_mph = [15.0, 25.0, 35.0, 45.0][rng.gen_range(0..4)];
        let free_flow = 60.0 * length_mi / speed_mph;
        let profile = rng.gen_bool(0.8).then(|| fifo_profile(rng, free_flow));
        edges.push(EdgeRecord {
            from: NodeId(from),
            to: NodeId(to),
            length_mi,
            speed_mph,
            shuttle_ok: ok,
            overtake_ok: false,
            profile,
        });
    };
    if shuttle {
        // a shuttle ring keeps the permitted subgraph strongly connected
        for v in 0..n {
            push(rng, v, (v + 1) % n, true);
        }
    }
    let extra = rng.gen_range(0..=(n * 3));
    for _ in 0..extra {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            let ok = shuttle && rng.gen_bool(0.5);
            push(rng, a, b, false);
            if ok {
                push(rng, a, b, true);
                push(rng, b, a, true);
            }
        }
    }
    Case {
        file: NetworkFile {
            interval_minutes: INTERVAL,
            horizon_minutes: HORIZON,
            nodes,
            edges,
        },
        mode: if shuttle {
            TravelMode::Shuttle
        } else {
            TravelMode::Background
        },
    }
}

/// Exit time written out from the traversal rule: the entry interval's time,
/// capped by entering at the next boundary, both raised to the mode floor.
fn oracle_exit(profile: &[f64], entry: f64, floor: f64) -> f64 {
    let n = profile.len();
    let mut i = 0;
    while i + 1 < n && entry >= (i + 1) as f64 * INTERVAL {
        i += 1;
    }
    let own = entry + profile[i].max(floor);
    if i + 1 < n {
        own.min((i + 1) as f64 * INTERVAL + profile[i + 1].max(floor))
    } else {
        own
    }
}

struct OracleEdge {
    from: usize,
    to: usize,
    profile: Vec<f64>,
    floor: f64,
    allowed: bool,
}

fn oracle_edges(case: &Case) -> Vec<OracleEdge> {
    let intervals = (HORIZON / INTERVAL) as usize;
    case.file
        .edges
        .iter()
        .map(|e| {
            let free_flow = 60.0 * e.length_mi / e.speed_mph;
            let shuttle = case.mode == TravelMode::Shuttle;
            OracleEdge {
                from: e.from.0 as usize,
                to: e.to.0 as usize,
                profile: e.profile.clone().unwrap_or_else(|| vec![free_flow; intervals]),
                floor: if shuttle { 60.0 * e.length_mi / SHUTTLE_MPH } else { 0.0 },
                allowed: !shuttle || e.shuttle_ok,
            }
        })
        .collect()
}

/// Earliest arrival at every node over all simple paths from `origin`.
fn exhaustive(edges: &[OracleEdge], n: usize, origin: usize, depart: f64) -> Vec<f64> {
    fn walk(edges: &[OracleEdge], at: usize, t: f64, seen: &mut Vec<bool>, best: &mut Vec<f64>) {
        best[at] = best[at].min(t);
        for e in edges.iter().filter(|e| e.allowed && e.from == at) {
            if seen[e.to] {
                continue;
            }
            seen[e.to] = true;
            walk(edges, e.to, oracle_exit(&e.profile, t, e.floor), seen, best);
            seen[e.to] = false;
        }
    }
    let mut best = vec![f64::INFINITY; n];
    let mut seen = vec![false; n];
    seen[origin] = true;
    walk(edges, origin, depart, &mut seen, &mut best);
    best
}

/// Compares earliest-arrival queries against exhaustive path enumeration on
/// `graphs` random networks, at every interval start. Returns the number of
/// origin-destination-departure triples compared.
pub fn check(graphs: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for g in 0..graphs {
        let case = random_case(&mut rng);
        let n = case.file.nodes.len();
        let oracle = oracle_edges(&case);
        let net = RoadNetwork::from_file_data(case.file.clone()).map_err(|e| format!("graph {g}: {e}"))?;
        let mut depart = 0.0;
        while depart <= HORIZON {
            for o in 0..n {
                let want = exhaustive(&oracle, n, o, depart);
                for d in 0..n {
                    let got = net.shortest_path(NodeId(o as u32), NodeId(d as u32), depart, case.mode);
                    let tag = format!("graph {g}, {o}->{d} at {depart}");
                    if want[d].is_infinite() {
                        if got.is_ok() {
                            return Err(format!("{tag}: found a path where none exists"));
                        }
                        continue;
                    }
                    let path = got.map_err(|e| format!("{tag}: {e}"))?;
                    if path.arrival_min != want[d] {
                        return Err(format!("{tag}: arrival {} vs {}", path.arrival_min, want[d]));
                    }
                    // the returned edges really achieve that arrival
                    let times = net.traverse(&path.edges, depart, case.mode);
                    let mut at = o;
                    for e in &path.edges {
                        let oe = &oracle[e.0 as usize];
                        if oe.from != at || !oe.allowed {
                            return Err(format!("{tag}: edge {} does not continue the path", e.0));
                        }
                        at = oe.to;
                    }
                    if at != d || *times.last().unwrap() != path.arrival_min {
                        return Err(format!("{tag}: edges do not reproduce the arrival"));
                    }
                    checked += 1;
                }
            }
            depart += INTERVAL;
        }
    }
    Ok(checked)
}
