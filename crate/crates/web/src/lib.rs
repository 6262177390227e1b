//! Browser bindings. Every export takes and returns JSON strings so the page
//! needs no generated type glue beyond the functions themselves.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use crosswatch::controller::{
    branch_weight, select_priority_branch, BranchState, ControlStrategy, ControllerConfig, FixedCycle,
};
use crosswatch::estimator::stop_distance;
use crosswatch::sim::{build_paper_scenarios, run, EventKind};

/// Longest simulated span the page may request, seconds.
pub const MAX_DEMO_DURATION: f64 = 900.0;

#[derive(Debug, Deserialize)]
pub struct BranchInput {
    pub vehicles: u32,
    #[serde(default)]
    pub emergency: u32,
    #[serde(default)]
    pub priority: bool,
}

#[derive(Debug, Serialize)]
pub struct WeightRow {
    pub vehicles: f64,
    pub emergency: f64,
    pub priority: f64,
    pub total: f64,
}

#[derive(Debug, Serialize)]
pub struct WeightReport {
    pub weights: Vec<WeightRow>,
    pub selected: usize,
}

pub fn weights(branches_json: &str, capacity: u32) -> Result<String, String> {
    let input: Vec<BranchInput> = serde_json::from_str(branches_json).map_err(|e| e.to_string())?;
    let states = input
        .iter()
        .enumerate()
        .map(|(id, b)| BranchState::new(id, b.vehicles, b.emergency, b.priority, capacity))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let raw: Vec<_> = states.iter().map(|s| branch_weight(s, capacity)).collect();
    let selected = select_priority_branch(&raw, &states).map_err(|e| e.to_string())?;
    let weights = raw
        .iter()
        .map(|w| WeightRow {
            vehicles: w.vehicles.as_f64(),
            emergency: w.emergency.as_f64(),
            priority: w.priority.as_f64(),
            total: w.total.as_f64(),
        })
        .collect();
    Ok(serde_json::to_string(&WeightReport { weights, selected }).expect("report serialises"))
}

/// `[[speed_kmh, stop_distance_m], ...]` from 0 to `max_speed` inclusive.
pub fn stop_curve(max_speed: f64, step: f64) -> Result<String, String> {
    if !(step > 0.0) || !(max_speed >= 0.0) || max_speed / step > 10_000.0 {
        return Err(format!("bad range 0..{max_speed} step {step}"));
    }
    let points = (0..=(max_speed / step).floor() as usize)
        .map(|i| {
            let v = i as f64 * step;
            stop_distance(v).map(|d| [v, d])
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&points).expect("curve serialises"))
}

#[derive(Debug, Serialize)]
pub struct Phase {
    pub time: f64,
    pub branch: usize,
}

#[derive(Debug, Serialize)]
pub struct DemoRun {
    pub scenario: String,
    pub duration: f64,
    pub branches: usize,
    pub greens: Vec<Phase>,
    pub detections: Vec<f64>,
    pub metrics: crosswatch::sim::SimMetrics,
}

/// Runs one of the four built-in layouts (`case` in 1..=4) for a short span.
pub fn simulate(case: usize, seed: u64, duration: f64, dynamic: bool) -> Result<String, String> {
    let mut scenario = build_paper_scenarios()
        .into_iter()
        .nth(case.wrapping_sub(1))
        .ok_or_else(|| format!("case must be 1 to 4, got {case}"))?;
    if !(duration > 0.0 && duration <= MAX_DEMO_DURATION) {
        return Err(format!("duration must be in (0, {MAX_DEMO_DURATION}]"));
    }
    scenario.duration = duration;
    if !dynamic {
        let all_red = scenario.controller.all_red();
        scenario.controller = ControlStrategy::Fixed(FixedCycle { all_red, ..FixedCycle::default() });
    } else if let ControlStrategy::Fixed(_) = scenario.controller {
        scenario.controller = ControlStrategy::Dynamic(ControllerConfig::default());
    }
    let out = run(&scenario, seed).map_err(|e| e.to_string())?;
    let tick = scenario.tick;
    let greens = out
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Green)
        .filter_map(|e| e.branch.map(|branch| Phase { time: e.tick as f64 * tick, branch }))
        .collect();
    let detections =
        out.events.iter().filter(|e| e.kind == EventKind::Detection).map(|e| e.tick as f64 * tick).collect();
    let report = DemoRun {
        scenario: scenario.name.clone(),
        duration,
        branches: scenario.branch_count(),
        greens,
        detections,
        metrics: out.metrics,
    };
    Ok(serde_json::to_string(&report).expect("run serialises"))
}

#[wasm_bindgen(js_name = branchWeights)]
pub fn branch_weights_js(branches_json: &str, capacity: u32) -> Result<String, JsError> {
    weights(branches_json, capacity).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = stopCurve)]
pub fn stop_curve_js(max_speed: f64, step: f64) -> Result<String, JsError> {
    stop_curve(max_speed, step).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(case: usize, seed: u64, duration: f64, dynamic: bool) -> Result<String, JsError> {
    simulate(case, seed, duration, dynamic).map_err(|e| JsError::new(&e))
}
