//! Red-light-running estimation from speed traces.
//!
//! A trace is the vehicle speed sampled every 5 m on the approach to a light.
//! Two checks run on it: a hard kinematic rule (the vehicle is already
//! inside its own stopping distance) and a linear margin classifier whose
//! signed margin is squashed into a confidence.

mod generate;
mod svm;
mod trace;

pub use generate::{generate_traces, generate_traces_with, GeneratorConfig};
pub use svm::{train, train_with_history, ClassifierModel, TrainConfig};
pub use trace::{read_traces_csv, write_traces_csv, Label, SpeedTrace, TraceCollector};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BUCKET_SPACING_M: u32 = 5;
pub const DEFAULT_START_DISTANCE_M: u32 = 100;
/// Speeds are divided by this before they reach the classifier.
pub const SPEED_SCALE_KMH: f64 = 120.0;
pub const DEFAULT_BEARING_TOLERANCE_DEG: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Reaction distance plus braking distance, in metres, for a speed in km/h.
pub fn stop_distance(speed_kmh: f64) -> Result<f64, EstimatorError> {
    if !(speed_kmh >= 0.0) || !speed_kmh.is_finite() {
        return Err(EstimatorError::InvalidArgument(format!("speed must be a non-negative number, got {speed_kmh}")));
    }
    let tens = speed_kmh / 10.0;
    Ok(tens * 3.0 + 0.5 * tens * tens)
}

/// True when the vehicle can no longer stop before the line.
pub fn hard_rule_predict(distance_to_light: f64, speed_kmh: f64) -> bool {
    stop_distance(speed_kmh).is_ok_and(|stop| distance_to_light < stop)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceTrend {
    Decreasing,
    Steady,
    Increasing,
}

/// Whether a light applies to the vehicle: heading within `tolerance_deg`
/// of the light's bearing, closing in, and moving.
pub fn relevance_check_with(
    vehicle_bearing: f64,
    light_bearing: f64,
    speed_kmh: f64,
    trend: DistanceTrend,
    tolerance_deg: f64,
) -> bool {
    bearing_difference(vehicle_bearing, light_bearing) <= tolerance_deg
        && trend == DistanceTrend::Decreasing
        && speed_kmh > 0.0
}

pub fn relevance_check(vehicle_bearing: f64, light_bearing: f64, speed_kmh: f64, trend: DistanceTrend) -> bool {
    relevance_check_with(vehicle_bearing, light_bearing, speed_kmh, trend, DEFAULT_BEARING_TOLERANCE_DEG)
}

/// Absolute angle between two bearings folded into [0, 180].
pub fn bearing_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Prediction,
    Detection,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub kind: EstimateKind,
    pub confidence: f64,
    /// Set when the stopping-distance rule decided the outcome.
    pub hard_rule: bool,
}

/// Where the vehicle is when the estimate is made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Position {
    /// Still before the stop line.
    Approaching { distance_m: f64, speed_kmh: f64 },
    /// At or past the stop line; the last trace sample is the crossing speed.
    AtLight,
}

impl Position {
    fn verdict(&self) -> EstimateKind {
        match self {
            Position::Approaching { .. } => EstimateKind::Prediction,
            Position::AtLight => EstimateKind::Detection,
        }
    }
}

/// Runs the hard rule, then the classifier.
///
/// A vehicle crossing the line while still moving is inside its stopping
/// distance by definition, so at the light the hard rule reports a
/// detection for any non-zero crossing speed.
pub fn classify(
    model: &ClassifierModel,
    trace: &SpeedTrace,
    position: Position,
) -> Result<EstimationResult, EstimatorError> {
    let confidence = model.confidence(trace)?;
    let (distance, speed) = match position {
        Position::Approaching { distance_m, speed_kmh } => (distance_m, speed_kmh),
        Position::AtLight => (0.0, trace.speeds().last().copied().unwrap_or(0.0)),
    };
    if hard_rule_predict(distance, speed) {
        return Ok(EstimationResult { kind: position.verdict(), confidence: 1.0, hard_rule: true });
    }
    let kind = if confidence > model.threshold { position.verdict() } else { EstimateKind::None };
    Ok(EstimationResult { kind, confidence, hard_rule: false })
}
