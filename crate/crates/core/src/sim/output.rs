use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::scenario::VehicleKind;
use crate::server::{AuditRecord, DeliveryPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Spawn,
    Exit,
    Prediction,
    Detection,
    Dispatch,
    Notification,
    Warning,
    Switch,
    Green,
    Reselect,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::Exit => "exit",
            EventKind::Prediction => "prediction",
            EventKind::Detection => "detection",
            EventKind::Dispatch => "dispatch",
            EventKind::Notification => "notification",
            EventKind::Warning => "warning",
            EventKind::Switch => "switch",
            EventKind::Green => "green",
            EventKind::Reselect => "reselect",
        }
    }
}

/// One row of the event log. `latency_ms` is set for delivered messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub tick: u64,
    pub kind: EventKind,
    pub vehicle: Option<u64>,
    pub branch: Option<usize>,
    pub latency_ms: Option<f64>,
}

pub fn events_csv(events: &[SimEvent]) -> String {
    let mut out = String::from("tick,event,vehicle,branch,latency_ms\n");
    let opt = |v: Option<String>| v.unwrap_or_default();
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.tick,
            e.kind.as_str(),
            opt(e.vehicle.map(|v| v.to_string())),
            opt(e.branch.map(|b| b.to_string())),
            opt(e.latency_ms.map(|l| format!("{l:.4}"))),
        );
    }
    out
}

/// A warning that reached a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub path: DeliveryPath,
    /// Vehicle whose behaviour triggered the warning.
    pub offender: u64,
    pub recipient: u64,
    #[serde(with = "crate::controller::secs")]
    pub sent: Duration,
    #[serde(with = "crate::controller::secs")]
    pub delivered: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Conservation,
    Teleport,
    GreenExclusivity,
    CompliantDetection,
    MissedDetection,
    Communication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub tick: u64,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WaitStats {
    pub count: u64,
    pub mean_wait: f64,
    pub max_wait: f64,
}

impl WaitStats {
    pub(crate) fn from_waits(waits: &[f64]) -> Self {
        if waits.is_empty() {
            return Self::default();
        }
        Self {
            count: waits.len() as u64,
            mean_wait: waits.iter().sum::<f64>() / waits.len() as f64,
            max_wait: waits.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
}

impl LatencyStats {
    pub(crate) fn from_records<'a>(records: impl Iterator<Item = &'a DeliveryRecord>) -> Self {
        let ms: Vec<f64> = records.map(|r| (r.delivered - r.sent).as_secs_f64() * 1e3).collect();
        if ms.is_empty() {
            return Self::default();
        }
        Self {
            count: ms.len() as u64,
            min_ms: ms.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: ms.iter().copied().fold(0.0, f64::max),
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimMetrics {
    pub vehicles_spawned: u64,
    pub vehicles_exited: u64,
    pub vehicles_present: u64,
    pub vehicle_ticks: u64,
    /// Waits of every spawned vehicle, including those still in the model.
    pub overall: WaitStats,
    pub normal: WaitStats,
    pub emergency: WaitStats,
    /// Emergency waits in spawn order.
    pub emergency_waits: Vec<f64>,
    pub runners_spawned: u64,
    pub runner_red_crossings: u64,
    pub predictions: u64,
    /// Predictions made for compliant vehicles.
    pub false_predictions: u64,
    pub detections: u64,
    pub dispatches: u64,
    pub notifications: LatencyStats,
    pub warnings: LatencyStats,
    pub phase_switches: u64,
    pub violations: u64,
}

impl SimMetrics {
    pub fn mean_wait(&self, kind: VehicleKind) -> f64 {
        match kind {
            VehicleKind::Normal => self.normal.mean_wait,
            VehicleKind::Emergency => self.emergency.mean_wait,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: SimMetrics,
    pub events: Vec<SimEvent>,
    pub deliveries: Vec<DeliveryRecord>,
    pub violations: Vec<Violation>,
    pub audit: Vec<AuditRecord>,
}

impl SimOutcome {
    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.metrics).expect("metrics serialise")
    }

    pub fn events_csv(&self) -> String {
        events_csv(&self.events)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_leaves_missing_fields_blank() {
        let events = vec![
            SimEvent { tick: 3, kind: EventKind::Spawn, vehicle: Some(1), branch: Some(0), latency_ms: None },
            SimEvent { tick: 9, kind: EventKind::Warning, vehicle: Some(2), branch: None, latency_ms: Some(569.3793) },
        ];
        assert_eq!(events_csv(&events), "tick,event,vehicle,branch,latency_ms\n3,spawn,1,0,\n9,warning,2,,569.3793\n");
    }

    #[test]
    fn wait_stats() {
        let s = WaitStats::from_waits(&[1.0, 3.0]);
        assert_eq!((s.count, s.mean_wait, s.max_wait), (2, 2.0, 3.0));
        assert_eq!(WaitStats::from_waits(&[]), WaitStats::default());
    }
}
