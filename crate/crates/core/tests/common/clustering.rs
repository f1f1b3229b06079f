use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuttlesim_core::planner::{kmeans_cluster, KMEANS_MAX_ITERS};

fn sse_of(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<[f64; 2]> = points
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(p, _)| *p)
            .collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let mx = members.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = members.iter().map(|p| p[1]).sum::<f64>() / n;
        total += members
            .iter()
            .map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2))
            .sum::<f64>();
    }
    total
}

/// Minimum SSE over every partition of the points into exactly `k` blocks,
/// enumerated as restricted growth strings.
pub fn brute_force_sse(points: &[[f64; 2]], k: usize) -> f64 {
    fn rec(points: &[[f64; 2]], k: usize, labels: &mut Vec<usize>, used: usize, best: &mut f64) {
        let i = labels.len();
        if i == points.len() {
            if used == k {
                *best = best.min(sse_of(points, labels, k));
            }
            return;
        }
        if used + (points.len() - i) < k {
            return;
        }
        for l in 0..=used.min(k - 1) {
            labels.push(l);
            rec(points, k, labels, used.max(l + 1), best);
            labels.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(points, k, &mut Vec::new(), 0, &mut best);
    best
}

/// Runs k-means on `cases` random instances of at most eight points and
/// compares its SSE with the exhaustive minimum-variance partition.
pub fn check(cases: u64, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(1..=n.min(4));
        let points: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(0.0..3.0), rng.gen_range(0.0..2.0)])
            .collect();
        let got = kmeans_cluster(&points, k, case, KMEANS_MAX_ITERS).map_err(|e| e.to_string())?;
        let want = brute_force_sse(&points, k);
        if (got.sse - want).abs() > 1e-9 * want.max(1.0) {
            return Err(format!("case {case} (n {n}, k {k}): SSE {} vs optimum {want}", got.sse));
        }
    }
    Ok(())
}
