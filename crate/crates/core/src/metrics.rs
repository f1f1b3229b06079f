//! Rider, vehicle, energy and traffic summaries of a finished run.

use serde::{Deserialize, Serialize};

use crate::dispatch::DispatchRecord;
use crate::energy::{Battery, ChargingSession};
use crate::engine::{Activity, ScenarioConfig, TrajectoryRecord};
use crate::error::{MetricsError, Result};
use crate::network::RoadNetwork;
use crate::traffic::{self, ImpactRow};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RiderMetrics {
    pub total_requests: usize,
    pub accepted: usize,
    pub accepted_ratio: f64,
    pub median_wait_min: Option<f64>,
    pub median_trip_walk_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub total_distance_mi: f64,
    pub empty_distance_mi: f64,
    pub empty_ratio: Option<f64>,
    pub idle_min: f64,
    /// Driving time, including trips to the charger.
    pub travel_min: f64,
    pub dwell_min: f64,
    pub waitlist_min: f64,
    pub charging_min: f64,
    /// idle / (idle + travel + dwell); stop dwell counts as travelling.
    pub idle_ratio: Option<f64>,
    /// Seat-minutes used over seat-minutes offered while driving or dwelling.
    pub capacity_utilization: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyMetrics {
    pub total_consumption_kwh: f64,
    pub sessions: usize,
    pub charger_utilization: f64,
    pub inactive_wait_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficMetrics {
    /// Mean background speed without shuttles minus with shuttles.
    pub speed_reduction_mph: f64,
    /// Delay ratio with shuttles minus without.
    pub delay_ratio_increase: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rider: RiderMetrics,
    pub vehicle: VehicleMetrics,
    pub energy: EnergyMetrics,
    pub traffic: Option<TrafficMetrics>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

pub fn rider_metrics(records: &[DispatchRecord], net: &RoadNetwork) -> Result<RiderMetrics> {
    if records.is_empty() {
        return Err(MetricsError::NoRequests.into());
    }
    let mut waits = Vec::new();
    let mut ratios = Vec::new();
    for r in records.iter().filter(|r| r.accepted()) {
        let (Some(wait), Some(invehicle)) = (r.wait_min, r.invehicle_min) else {
            return Err(MetricsError::Inconsistent(format!(
                "accepted request {} has no pickup or dropoff",
                r.request_id
            ))
            .into());
        };
        waits.push(wait);
        let walk = net.walking_time(r.origin_node, r.dest_node)?;
        ratios.push((wait + invehicle) / walk);
    }
    let accepted = waits.len();
    Ok(RiderMetrics {
        total_requests: records.len(),
        accepted,
        accepted_ratio: accepted as f64 / records.len() as f64,
        median_wait_min: median(&mut waits),
        median_trip_walk_ratio: median(&mut ratios),
    })
}

pub fn vehicle_metrics(trajectories: &[TrajectoryRecord], capacity: u32) -> VehicleMetrics {
    let mut m = VehicleMetrics::default();
    let mut seat_minutes = 0.0;
    for t in trajectories {
        let d = t.duration_min();
        m.total_distance_mi += t.distance_mi;
        if t.occupancy == 0 {
            m.empty_distance_mi += t.distance_mi;
        }
        match t.activity {
            Activity::Idle => m.idle_min += d,
            Activity::Travel | Activity::Reposition => m.travel_min += d,
            Activity::Dwell => m.dwell_min += d,
            Activity::Waitlist => m.waitlist_min += d,
            Activity::Charging => m.charging_min += d,
        }
        if matches!(t.activity, Activity::Travel | Activity::Reposition | Activity::Dwell) {
            seat_minutes += t.occupancy as f64 * d;
        }
    }
    if m.total_distance_mi > 0.0 {
        m.empty_ratio = Some(m.empty_distance_mi / m.total_distance_mi);
    }
    let in_service = m.travel_min + m.dwell_min;
    if m.idle_min + in_service > 0.0 {
        m.idle_ratio = Some(m.idle_min / (m.idle_min + in_service));
    }
    if in_service > 0.0 {
        m.capacity_utilization = Some(seat_minutes / (capacity as f64 * in_service));
    }
    m
}

pub fn energy_metrics(
    sessions: &[ChargingSession],
    batteries: &[Battery],
    charging_points: u32,
    horizon_min: f64,
) -> EnergyMetrics {
    let mut charging = 0.0;
    let mut charging_in_horizon = 0.0;
    let mut waiting = 0.0;
    for s in sessions {
        charging += s.charging_min();
        charging_in_horizon += (s.charge_end_min.min(horizon_min) - s.charge_start_min.min(horizon_min)).max(0.0);
        waiting += s.inactive_wait_min();
    }
    EnergyMetrics {
        total_consumption_kwh: batteries.iter().map(Battery::consumed_kwh).sum(),
        sessions: sessions.len(),
        charger_utilization: charging_in_horizon / (charging_points as f64 * horizon_min),
        inactive_wait_ratio: (charging > 0.0).then(|| waiting / charging),
    }
}

/// GEH fit statistic between modeled and observed hourly counts.
pub fn geh(modeled: f64, observed: f64) -> Result<f64, MetricsError> {
    let sum = modeled + observed;
    if !(sum > 0.0) {
        return Err(MetricsError::GehUndefined);
    }
    let diff = modeled - observed;
    Ok((2.0 * diff * diff / sum).sqrt())
}

pub fn report(
    cfg: &ScenarioConfig,
    net: &RoadNetwork,
    records: &[DispatchRecord],
    trajectories: &[TrajectoryRecord],
    sessions: &[ChargingSession],
    batteries: &[Battery],
    impact: Option<&[ImpactRow]>,
) -> Result<MetricsReport> {
    let rider = if records.is_empty() {
        RiderMetrics::default()
    } else {
        rider_metrics(records, net)?
    };
    Ok(MetricsReport {
        rider,
        vehicle: vehicle_metrics(trajectories, cfg.capacity),
        energy: energy_metrics(sessions, batteries, cfg.charging_points, cfg.horizon_min),
        traffic: impact.map(|rows| {
            let s = traffic::summarize(rows);
            TrafficMetrics {
                speed_reduction_mph: s.speed_reduction_mph,
                delay_ratio_increase: s.delay_ratio_increase,
            }
        }),
    })
}
