//! Battery accounting and the charger queue.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispatch::ShuttleId;
use crate::error::{EnergyFault, Error};
use crate::network::NodeId;

/// Levels below this are a fault; absorbs float rounding at exactly zero.
pub const LEVEL_TOL_KWH: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub capacity_kwh: f64,
    pub moving_kwh_per_mi: f64,
    pub idle_kwh_per_min: f64,
    pub seek_kwh: f64,
    pub critical_kwh: f64,
    pub charger_kw: f64,
    pub charger_factor: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self {
            capacity_kwh: 30.0,
            moving_kwh_per_mi: 0.30,
            idle_kwh_per_min: 0.08,
            seek_kwh: 15.0,
            critical_kwh: 5.0,
            charger_kw: 50.0,
            charger_factor: 0.8,
        }
    }
}

impl BatterySpec {
    pub fn charge_kwh_per_min(&self) -> f64 {
        self.charger_kw * self.charger_factor / 60.0
    }

    /// Minutes to charge from `level` to full.
    pub fn minutes_to_full(&self, level: f64) -> f64 {
        (self.capacity_kwh - level).max(0.0) * 60.0 / (self.charger_kw * self.charger_factor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Battery {
    pub level_kwh: f64,
    pub initial_kwh: f64,
    pub charged_kwh: f64,
    pub moving_kwh: f64,
    pub idle_kwh: f64,
    pub min_level_kwh: f64,
}

impl Battery {
    pub fn full(spec: &BatterySpec) -> Self {
        Self::with_level(spec.capacity_kwh)
    }

    pub fn with_level(level: f64) -> Self {
        Self {
            level_kwh: level,
            initial_kwh: level,
            charged_kwh: 0.0,
            moving_kwh: 0.0,
            idle_kwh: 0.0,
            min_level_kwh: level,
        }
    }

    fn draw(&mut self, kwh: f64, shuttle: ShuttleId, time_min: f64) -> Result<(), EnergyFault> {
        let next = self.level_kwh - kwh;
        if next < -LEVEL_TOL_KWH {
            return Err(EnergyFault {
                shuttle,
                time_min,
                level_kwh: next,
            });
        }
        self.level_kwh = next;
        self.min_level_kwh = self.min_level_kwh.min(next);
        Ok(())
    }

    pub fn consume_moving(
        &mut self,
        spec: &BatterySpec,
        miles: f64,
        shuttle: ShuttleId,
        time_min: f64,
    ) -> Result<(), EnergyFault> {
        debug_assert!(miles >= 0.0);
        let kwh = spec.moving_kwh_per_mi * miles;
        self.draw(kwh, shuttle, time_min)?;
        self.moving_kwh += kwh;
        Ok(())
    }

    pub fn consume_idle(
        &mut self,
        spec: &BatterySpec,
        minutes: f64,
        shuttle: ShuttleId,
        time_min: f64,
    ) -> Result<(), EnergyFault> {
        debug_assert!(minutes >= 0.0);
        let kwh = spec.idle_kwh_per_min * minutes;
        self.draw(kwh, shuttle, time_min)?;
        self.idle_kwh += kwh;
        Ok(())
    }

    pub fn charge_full(&mut self, spec: &BatterySpec) {
        let added = spec.capacity_kwh - self.level_kwh;
        self.charged_kwh += added;
        self.level_kwh = spec.capacity_kwh;
    }

    pub fn consumed_kwh(&self) -> f64 {
        self.moving_kwh + self.idle_kwh
    }

    /// initial + charged − consumed − level; zero up to rounding.
    pub fn ledger_residual(&self) -> f64 {
        self.initial_kwh + self.charged_kwh - self.consumed_kwh() - self.level_kwh
    }

    /// Minutes of idle draw until the level falls strictly below `threshold`.
    pub fn idle_minutes_until(&self, spec: &BatterySpec, threshold: f64) -> Option<f64> {
        if self.level_kwh < threshold {
            return None;
        }
        Some((self.level_kwh - threshold) / spec.idle_kwh_per_min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChargeAction {
    None,
    JoinWaitlist,
    RepositionToCharger { point: usize },
    DeactivateAndRecheck,
    /// On the waitlist, above critical, not at the head or no free point.
    Wait,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChargingStation {
    pub node: NodeId,
    points: Vec<Option<ShuttleId>>,
    waitlist: VecDeque<ShuttleId>,
}

impl ChargingStation {
    pub fn new(node: NodeId, points: usize) -> Self {
        assert!(points >= 1, "a station needs at least one point");
        Self {
            node,
            points: vec![None; points],
            waitlist: VecDeque::new(),
        }
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn occupied(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }

    pub fn vacant_point(&self) -> Option<usize> {
        self.points.iter().position(|p| p.is_none())
    }

    pub fn waitlist(&self) -> &VecDeque<ShuttleId> {
        &self.waitlist
    }

    pub fn is_waiting(&self, id: ShuttleId) -> bool {
        self.waitlist.contains(&id)
    }

    pub fn join(&mut self, id: ShuttleId) {
        if !self.is_waiting(id) {
            self.waitlist.push_back(id);
        }
    }

    /// Moves the head of the waitlist onto `point`.
    pub fn assign(&mut self, id: ShuttleId, point: usize) {
        assert_eq!(self.waitlist.front(), Some(&id), "only the head of the waitlist is served");
        assert!(self.points[point].is_none(), "point {point} is occupied");
        self.waitlist.pop_front();
        self.points[point] = Some(id);
    }

    pub fn release(&mut self, point: usize) -> Option<ShuttleId> {
        self.points[point].take()
    }
}

/// Charging decision for one shuttle after a state change or recheck.
///
/// A shuttle with pending work finishes it first. An idle shuttle below the
/// seek level joins the waitlist; the head of the list goes to the charger
/// once a point is free.
pub fn charging_check(
    station: &ChargingStation,
    id: ShuttleId,
    level_kwh: f64,
    has_pending_work: bool,
    spec: &BatterySpec,
) -> ChargeAction {
    if level_kwh >= spec.seek_kwh || has_pending_work {
        return ChargeAction::None;
    }
    if !station.is_waiting(id) {
        return ChargeAction::JoinWaitlist;
    }
    if station.waitlist.front() == Some(&id) {
        if let Some(point) = station.vacant_point() {
            return ChargeAction::RepositionToCharger { point };
        }
    }
    if level_kwh < spec.critical_kwh {
        ChargeAction::DeactivateAndRecheck
    } else {
        ChargeAction::Wait
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargingSession {
    pub shuttle_id: ShuttleId,
    pub waitlist_join_min: f64,
    pub charge_start_min: f64,
    pub charge_end_min: f64,
    pub level_before_kwh: f64,
    pub reposition_mi: f64,
}

impl ChargingSession {
    pub fn charging_min(&self) -> f64 {
        self.charge_end_min - self.charge_start_min
    }

    pub fn inactive_wait_min(&self) -> f64 {
        self.charge_start_min - self.waitlist_join_min
    }
}

pub fn write_sessions(path: impl AsRef<Path>, sessions: &[ChargingSession]) -> Result<(), Error> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    w.write_record([
        "shuttle_id",
        "waitlist_join_min",
        "charge_start_min",
        "charge_end_min",
        "level_before_kwh",
        "reposition_mi",
    ])
    .map_err(|e| Error::parse(path, e))?;
    for s in sessions {
        w.serialize((
            s.shuttle_id,
            s.waitlist_join_min,
            s.charge_start_min,
            s.charge_end_min,
            s.level_before_kwh,
            s.reposition_mi,
        ))
        .map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sessions(path: impl AsRef<Path>) -> Result<Vec<ChargingSession>, Error> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    rdr.deserialize()
        .map(|row| row.map_err(|e| Error::parse(path, e)))
        .collect()
}
