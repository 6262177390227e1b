//! Discrete-time intersection simulator tying together the controller,
//! beacons, the estimator and the coordination server.

mod compare;
mod engine;
mod output;
mod scenario;

pub use compare::{compare_controllers, strategies, Comparison, PairedRun, MIN_COMPARISON_SEEDS};
pub use engine::{default_model, run, BEACON_INTERVAL, WAITING_SPEED_KMH};
pub use output::{
    events_csv, DeliveryRecord, EventKind, LatencyStats, SimEvent, SimMetrics, SimOutcome, Violation, ViolationKind,
    WaitStats,
};
pub use scenario::{
    build_paper_scenarios, Behavior, BranchSpec, EmergencyArrival, EmergencySchedule, Kinematics, Scenario,
    ScriptedVehicle, VehicleKind,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
}
