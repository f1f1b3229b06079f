mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuttlesim_core::network::{EdgeRecord, Node, NetworkFile, RoadNetwork};
use shuttlesim_core::planner::parcel_walk_minutes;
use shuttlesim_core::NodeId;

#[test]
fn kmeans_matches_brute_force_partition() {
    common::clustering::check(500, 11).unwrap();
}

#[test]
fn two_tight_groups_split_as_the_optimum() {
    let pts = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [3.0, 3.0], [3.1, 3.0], [3.0, 3.1]];
    let got = shuttlesim_core::planner::kmeans_cluster(&pts, 2, 1, 100).unwrap();
    let want = common::clustering::brute_force_sse(&pts, 2);
    assert!((got.sse - want).abs() < 1e-12);
    assert_ne!(got.assignment[0], got.assignment[3]);
}

/// Random connected undirected network; every road is shuttle-permitted.
fn random_network(rng: &mut ChaCha8Rng, n: u32) -> RoadNetwork {
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: NodeId(i),
            x_mi: rng.gen_range(0.0..2.0),
            y_mi: rng.gen_range(0.0..2.0),
        })
        .collect();
    let mut pairs = Vec::new();
    for v in 1..n {
        pairs.push((rng.gen_range(0..v), v));
    }
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    let mut edges = Vec::new();
    for (a, b) in pairs {
        let len = rng.gen_range(0.05..0.6);
        for (from, to) in [(a, b), (b, a)] {
            edges.push(EdgeRecord {
                from: NodeId(from),
                to: NodeId(to),
                length_mi: len,
                speed_mph: 25.0,
                shuttle_ok: true,
                overtake_ok: false,
                profile: None,
            });
        }
    }
    RoadNetwork::from_file_data(NetworkFile {
        interval_minutes: 15.0,
        horizon_minutes: 60.0,
        nodes,
        edges,
    })
    .unwrap()
}

/// Floyd-Warshall over the undirected lengths.
fn all_pairs_walk(net: &RoadNetwork) -> Vec<Vec<f64>> {
    let n = net.nodes().len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in net.edges() {
        let (u, v) = (e.from.0 as usize, e.to.0 as usize);
        d[u][v] = d[u][v].min(e.length_mi);
        d[v][u] = d[v][u].min(e.length_mi);
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][m] + d[m][j] < d[i][j] {
                    d[i][j] = d[i][m] + d[m][j];
                }
            }
        }
    }
    d
}

#[test]
fn walking_matches_all_pairs_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(2..=9);
        let net = random_network(&mut rng, n);
        let d = all_pairs_walk(&net);
        for a in 0..n {
            for b in 0..n {
                let got = net.walking_distance(NodeId(a), NodeId(b)).unwrap();
                assert!((got - d[a as usize][b as usize]).abs() < 1e-12);
                let t = net.walking_time(NodeId(a), NodeId(b)).unwrap();
                assert!((t - 20.0 * d[a as usize][b as usize]).abs() < 1e-9);
            }
        }
        let stops: Vec<NodeId> = (0..n).filter(|_| rng.gen_bool(0.4)).map(NodeId).collect();
        if stops.is_empty() {
            continue;
        }
        let everyone: Vec<NodeId> = (0..n).map(NodeId).collect();
        let walks = parcel_walk_minutes(&net, &everyone, &stops).unwrap();
        for (p, w) in everyone.iter().zip(walks) {
            let want = stops
                .iter()
                .map(|s| d[p.0 as usize][s.0 as usize])
                .fold(f64::INFINITY, f64::min);
            assert!((w - 20.0 * want).abs() < 1e-9);
        }
    }
}
