//! Plot-ready CSV series built from planning, demand and result outputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::bundle::{MetricsFile, IMPACT_FILE, METRICS_FILE, REQUESTS_FILE};
use super::sweep::mean_std;
use super::DemandProfile;
use crate::demand::{read_requests, TripKind};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::planner::CoverageMatrix;

pub const COVERAGE_FILE: &str = "coverage.json";
pub const FIGURES: [u32; 7] = [2, 5, 9, 10, 11, 12, 13];
/// Bin width for request counts.
pub const REQUEST_BIN_MIN: f64 = 60.0;

/// A table with a header row; column names carry their units.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Series {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::parse("<figure series>", e);
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<figure series>", e))
    }
}

type Extract = fn(&MetricsReport) -> Option<f64>;

const RIDER: &[(&str, Extract)] = &[
    ("accepted_ratio", |m| Some(m.rider.accepted_ratio)),
    ("median_trip_walk_ratio", |m| m.rider.median_trip_walk_ratio),
    ("median_wait_min", |m| m.rider.median_wait_min),
];
const VEHICLE: &[(&str, Extract)] = &[
    ("total_distance_mi", |m| Some(m.vehicle.total_distance_mi)),
    ("empty_ratio", |m| m.vehicle.empty_ratio),
    ("idle_ratio", |m| m.vehicle.idle_ratio),
    ("capacity_utilization", |m| m.vehicle.capacity_utilization),
];
const ENERGY: &[(&str, Extract)] = &[("total_consumption_kwh", |m| Some(m.energy.total_consumption_kwh))];
const CHARGING: &[(&str, Extract)] = &[
    ("charger_utilization", |m| Some(m.energy.charger_utilization)),
    ("inactive_wait_ratio", |m| m.energy.inactive_wait_ratio),
];

/// Builds the series for `fig` from the directory `input`.
///
/// Figure 2 reads a stop-planning output, 5 a request log (any directory
/// holding `requests.csv`), 9 to 12 a sweep directory of result bundles and
/// 13 a bundle from a traffic-impact run.
pub fn figure(fig: u32, input: &Path) -> Result<Series> {
    match fig {
        2 => coverage_series(input),
        5 => request_series(input),
        9 => cell_series(input, RIDER, false),
        10 => cell_series(input, VEHICLE, false),
        11 => cell_series(input, ENERGY, false),
        12 => cell_series(input, CHARGING, true),
        13 => impact_series(input),
        _ => Err(Error::Config(format!(
            "unknown figure {fig}; expected one of {FIGURES:?}"
        ))),
    }
}

fn coverage_series(input: &Path) -> Result<Series> {
    let m = CoverageMatrix::load(input.join(COVERAGE_FILE))?;
    let mut rows = Vec::new();
    for (k, ratios) in m.ks.iter().zip(&m.ratios) {
        for (w, r) in m.walk_min.iter().zip(ratios) {
            rows.push(vec![k.to_string(), w.to_string(), r.to_string()]);
        }
    }
    Ok(Series {
        header: strings(&["stops", "walk_min", "coverage_ratio"]),
        rows,
    })
}

fn request_series(input: &Path) -> Result<Series> {
    let reqs = read_requests(input.join(REQUESTS_FILE))?;
    let mut bins: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for r in &reqs {
        let bin = (r.request_min / REQUEST_BIN_MIN).floor().max(0.0) as u64;
        let e = bins.entry(bin).or_default();
        match r.kind {
            TripKind::FM => e.0 += 1,
            TripKind::LM => e.1 += 1,
        }
    }
    let last = bins.keys().next_back().copied().unwrap_or(0);
    let rows = (0..=last)
        .filter(|_| !bins.is_empty())
        .map(|b| {
            let (fm, lm) = bins.get(&b).copied().unwrap_or_default();
            vec![
                (b as f64 * REQUEST_BIN_MIN).to_string(),
                fm.to_string(),
                lm.to_string(),
            ]
        })
        .collect();
    Ok(Series {
        header: strings(&["interval_start_min", "fm_requests", "lm_requests"]),
        rows,
    })
}

/// Result bundles directly under `dir`, in name order.
pub fn sweep_bundles(dir: &Path) -> Result<Vec<(PathBuf, MetricsFile)>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(METRICS_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!("no result bundles under {}", dir.display())));
    }
    dirs.into_iter()
        .map(|d| {
            let path = d.join(METRICS_FILE);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let m: MetricsFile = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
            Ok((d, m))
        })
        .collect()
}

/// Mean and sample std per (demand, fleet, second key) cell. The second
/// key is the charging point count when `by_points`, else the max wait.
fn cell_series(input: &Path, columns: &[(&str, Extract)], by_points: bool) -> Result<Series> {
    let bundles = sweep_bundles(input)?;
    let mut cells: BTreeMap<(DemandProfile, u32, u64), Vec<&MetricsReport>> = BTreeMap::new();
    for (_, m) in &bundles {
        let c = &m.config;
        let key = if by_points {
            c.charging_points as u64
        } else {
            c.max_wait_min.to_bits()
        };
        cells.entry((c.demand, c.fleet_size, key)).or_default().push(&m.metrics);
    }
    let mut header = strings(&["demand", "fleet_size", if by_points { "charging_points" } else { "max_wait_min" }, "runs"]);
    for (name, _) in columns {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    let rows = cells
        .into_iter()
        .map(|((demand, fleet, key), runs)| {
            let key = if by_points {
                key.to_string()
            } else {
                f64::from_bits(key).to_string()
            };
            let mut row = vec![demand.to_string(), fleet.to_string(), key, runs.len().to_string()];
            for (_, get) in columns {
                let vals: Vec<f64> = runs.iter().filter_map(|m| get(m)).collect();
                match mean_std(&vals) {
                    Some((m, s)) => row.extend([m.to_string(), s.to_string()]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    Ok(Series { header, rows })
}

fn impact_series(input: &Path) -> Result<Series> {
    let path = input.join(IMPACT_FILE);
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::parse(&path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(&path, e))?
        .iter()
        .take(5)
        .map(String::from)
        .collect();
    let rows = rdr
        .records()
        .map(|r| {
            r.map(|r| r.iter().take(5).map(String::from).collect())
                .map_err(|e| Error::parse(&path, e))
        })
        .collect::<Result<_>>()?;
    Ok(Series { header, rows })
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{write_requests, TripRequest};
    use crate::network::NodeId;

    #[test]
    fn request_bins_fill_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let req = |id, t, kind| TripRequest {
            id,
            request_min: t,
            kind,
            origin: NodeId(1),
            dest: NodeId(2),
            party_size: 1,
        };
        write_requests(
            dir.path().join(REQUESTS_FILE),
            &[req(0, 5.0, TripKind::FM), req(1, 59.9, TripKind::LM), req(2, 130.0, TripKind::FM)],
        )
        .unwrap();
        let s = figure(5, dir.path()).unwrap();
        assert_eq!(
            s.rows,
            vec![
                strings(&["0", "1", "1"]),
                strings(&["60", "0", "0"]),
                strings(&["120", "1", "0"]),
            ]
        );
    }

    #[test]
    fn coverage_is_long_format() {
        let dir = tempfile::tempdir().unwrap();
        CoverageMatrix {
            ks: vec![8, 9],
            walk_min: vec![3.0, 6.0],
            ratios: vec![vec![0.5, 0.75], vec![0.625, 1.0]],
        }
        .save(dir.path().join(COVERAGE_FILE))
        .unwrap();
        let s = figure(2, dir.path()).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.rows[3], strings(&["9", "6", "1"]));
    }

    #[test]
    fn unknown_figure_is_rejected() {
        assert!(figure(7, Path::new(".")).is_err());
    }
}
