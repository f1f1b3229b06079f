#![allow(dead_code)]

pub mod clustering;
pub mod insertion;
pub mod routing;

use std::collections::BTreeMap;
use std::path::PathBuf;

use shuttlesim_core::engine::{Activity, DemandProfile};
use shuttlesim_core::{reference, BatterySpec, ScenarioConfig, ShuttleId, SimulationResult};

pub fn reference_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/reference")
}

/// Reference scenario with paths pointing at the shipped data.
pub fn reference_scenario(fleet: u32, wait: f64, points: u32, demand: DemandProfile, seed: u64) -> ScenarioConfig {
    let mut cfg = reference::scenario(fleet, wait, points, demand, seed);
    cfg.resolve_paths(&reference_dir());
    cfg
}

/// Worst deviations found by [`audit`], recomputed from the run's logs.
#[derive(Debug, Default)]
pub struct Audit {
    pub energy_residual_kwh: f64,
    pub moving_draw_error_kwh: f64,
    pub idle_draw_excess_kwh: f64,
    pub min_level_kwh: f64,
    pub max_level_kwh: f64,
    pub session_end_error_kwh: f64,
    pub max_concurrent_charging: usize,
    pub max_occupancy: u32,
    pub occupancy_mismatches: usize,
    pub max_wait_excess_min: f64,
    pub unaccounted_requests: i64,
    pub incomplete_accepted: usize,
}

/// Re-derives the run's invariants from its logs without trusting the
/// engine's own report.
pub fn audit(r: &SimulationResult) -> Audit {
    let spec = BatterySpec::default();
    let cfg = &r.config;
    let mut a = Audit {
        min_level_kwh: f64::INFINITY,
        max_level_kwh: f64::NEG_INFINITY,
        ..Default::default()
    };

    let mut moved: BTreeMap<ShuttleId, f64> = BTreeMap::new();
    let mut idle_like: BTreeMap<ShuttleId, f64> = BTreeMap::new();
    for t in &r.trajectories {
        *moved.entry(t.shuttle_id).or_default() += t.distance_mi;
        if matches!(t.activity, Activity::Idle | Activity::Dwell | Activity::Waitlist) {
            *idle_like.entry(t.shuttle_id).or_default() += t.duration_min();
        }
        a.min_level_kwh = a.min_level_kwh.min(t.battery_kwh);
        a.max_level_kwh = a.max_level_kwh.max(t.battery_kwh);
        a.max_occupancy = a.max_occupancy.max(t.occupancy);
    }
    for (k, b) in r.batteries.iter().enumerate() {
        let id = ShuttleId(k as u32);
        let identity = b.initial_kwh + b.charged_kwh - b.moving_kwh - b.idle_kwh - b.level_kwh;
        a.energy_residual_kwh = a.energy_residual_kwh.max(identity.abs());
        let mi = moved.get(&id).copied().unwrap_or(0.0);
        a.moving_draw_error_kwh = a
            .moving_draw_error_kwh
            .max((b.moving_kwh - spec.moving_kwh_per_mi * mi).abs());
        let cap = spec.idle_kwh_per_min * idle_like.get(&id).copied().unwrap_or(0.0);
        a.idle_draw_excess_kwh = a.idle_draw_excess_kwh.max(b.idle_kwh - cap);
        a.min_level_kwh = a.min_level_kwh.min(b.level_kwh).min(b.min_level_kwh);
        a.max_level_kwh = a.max_level_kwh.max(b.level_kwh).max(b.initial_kwh);
    }

    let rate = spec.charger_kw * spec.charger_factor / 60.0;
    let mut marks = Vec::new();
    for s in &r.charging {
        let end_level = s.level_before_kwh + rate * s.charging_min();
        a.session_end_error_kwh = a
            .session_end_error_kwh
            .max((end_level - spec.capacity_kwh).abs());
        marks.push((s.charge_start_min, 1i32));
        marks.push((s.charge_end_min, -1i32));
    }
    // a session ending at t frees its point before one starting at t
    marks.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut live = 0i32;
    for (_, d) in marks {
        live += d;
        a.max_concurrent_charging = a.max_concurrent_charging.max(live as usize);
    }

    // occupancy while driving, replayed from the dispatch log
    for t in r.trajectories.iter().filter(|t| t.activity == Activity::Travel) {
        let mid = 0.5 * (t.start_min + t.end_min);
        let aboard: u32 = r
            .dispatch
            .iter()
            .filter(|d| d.shuttle_id == Some(t.shuttle_id))
            .filter(|d| d.pickup_min.is_some_and(|p| p < mid) && d.dropoff_min.map_or(true, |x| mid < x))
            .map(|d| d.party_size)
            .sum();
        if aboard != t.occupancy {
            a.occupancy_mismatches += 1;
        }
    }

    let accepted = r.dispatch.iter().filter(|d| d.accepted()).count() as i64;
    let failed = r.dispatch.iter().filter(|d| !d.accepted()).count() as i64;
    a.unaccounted_requests = r.requests.len() as i64 - accepted - failed;
    a.max_wait_excess_min = f64::NEG_INFINITY;
    for d in r.dispatch.iter().filter(|d| d.accepted()) {
        match (d.pickup_min, d.dropoff_min) {
            (Some(p), Some(_)) => {
                a.max_wait_excess_min = a.max_wait_excess_min.max(p - d.request_min - cfg.max_wait_min)
            }
            _ => a.incomplete_accepted += 1,
        }
    }
    a
}

impl Audit {
    /// Every invariant holds at the given tolerances.
    pub fn clean(&self, capacity: u32, points: u32) -> bool {
        self.energy_residual_kwh <= 1e-9
            && self.moving_draw_error_kwh <= 1e-9
            && self.idle_draw_excess_kwh <= 1e-9
            && self.min_level_kwh >= -1e-9
            && self.max_level_kwh <= 30.0 + 1e-9
            && self.session_end_error_kwh <= 1e-9
            && self.max_concurrent_charging <= points as usize
            && self.max_occupancy <= capacity
            && self.occupancy_mismatches == 0
            && self.max_wait_excess_min <= 1e-9
            && self.unaccounted_requests == 0
            && self.incomplete_accepted == 0
    }
}
