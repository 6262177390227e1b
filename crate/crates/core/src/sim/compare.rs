use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{run, Scenario, SimError, SimMetrics};
use crate::controller::{ControlStrategy, ControllerConfig, FixedCycle};

pub const MIN_COMPARISON_SEEDS: usize = 10;

/// Static and dynamic control on the same arrival stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRun {
    pub seed: u64,
    pub static_mean_wait: f64,
    pub dynamic_mean_wait: f64,
    pub static_emergency_wait: f64,
    pub dynamic_emergency_wait: f64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub runs: Vec<PairedRun>,
    pub static_mean_wait: f64,
    pub dynamic_mean_wait: f64,
    pub static_emergency_wait: f64,
    pub dynamic_emergency_wait: f64,
    /// Share of pairs where the dynamic controller's mean emergency wait is
    /// strictly lower.
    pub emergency_win_rate: f64,
    pub violations: u64,
}

impl Comparison {
    pub fn emergency_reduction(&self) -> f64 {
        self.static_emergency_wait - self.dynamic_emergency_wait
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{}\n", self.scenario);
        let _ =
            writeln!(out, "{:>6} {:>12} {:>12} {:>12} {:>12}", "seed", "static", "dynamic", "static_em", "dynamic_em");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:>6} {:>12.2} {:>12.2} {:>12.2} {:>12.2}",
                r.seed, r.static_mean_wait, r.dynamic_mean_wait, r.static_emergency_wait, r.dynamic_emergency_wait
            );
        }
        let _ = writeln!(
            out,
            "{:>6} {:>12.2} {:>12.2} {:>12.2} {:>12.2}",
            "mean",
            self.static_mean_wait,
            self.dynamic_mean_wait,
            self.static_emergency_wait,
            self.dynamic_emergency_wait
        );
        let _ = writeln!(out, "dynamic lower emergency wait in {:.0}% of pairs", self.emergency_win_rate * 100.0);
        out
    }
}

/// The two strategies compared for `scenario`; whichever one the scenario
/// configures is used as is, the other takes defaults with the same
/// clearance time.
pub fn strategies(scenario: &Scenario) -> (ControlStrategy, ControlStrategy) {
    match scenario.controller {
        ControlStrategy::Fixed(plan) => (
            ControlStrategy::Fixed(plan),
            ControlStrategy::Dynamic(ControllerConfig { all_red: plan.all_red, ..Default::default() }),
        ),
        ControlStrategy::Dynamic(config) => (
            ControlStrategy::Fixed(FixedCycle { all_red: config.all_red, ..Default::default() }),
            ControlStrategy::Dynamic(config),
        ),
    }
}

fn run_with(scenario: &Scenario, controller: ControlStrategy, seed: u64) -> Result<SimMetrics, SimError> {
    let scenario = Scenario { controller, ..scenario.clone() };
    run(&scenario, seed).map(|o| o.metrics)
}

fn paired(scenario: &Scenario, seed: u64) -> Result<PairedRun, SimError> {
    let (fixed, dynamic) = strategies(scenario);
    let s = run_with(scenario, fixed, seed)?;
    let d = run_with(scenario, dynamic, seed)?;
    Ok(PairedRun {
        seed,
        static_mean_wait: s.overall.mean_wait,
        dynamic_mean_wait: d.overall.mean_wait,
        static_emergency_wait: s.emergency.mean_wait,
        dynamic_emergency_wait: d.emergency.mean_wait,
        violations: s.violations + d.violations,
    })
}

/// Runs both controllers for every seed, in parallel across seeds.
pub fn compare_controllers(scenario: &Scenario, seeds: &[u64]) -> Result<Comparison, SimError> {
    scenario.validate()?;
    if seeds.len() < MIN_COMPARISON_SEEDS {
        return Err(SimError::Config(format!(
            "a comparison needs at least {MIN_COMPARISON_SEEDS} seeds, got {}",
            seeds.len()
        )));
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len());
    let chunk = seeds.len().div_ceil(workers);
    let runs = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&seed| paired(scenario, seed)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("simulation thread panicked")).collect::<Result<Vec<_>, _>>()
    })?;

    let mean = |f: fn(&PairedRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let wins = runs.iter().filter(|r| r.dynamic_emergency_wait < r.static_emergency_wait).count();
    Ok(Comparison {
        scenario: scenario.name.clone(),
        static_mean_wait: mean(|r| r.static_mean_wait),
        dynamic_mean_wait: mean(|r| r.dynamic_mean_wait),
        static_emergency_wait: mean(|r| r.static_emergency_wait),
        dynamic_emergency_wait: mean(|r| r.dynamic_emergency_wait),
        emergency_win_rate: wins as f64 / runs.len() as f64,
        violations: runs.iter().map(|r| r.violations).sum(),
        runs,
    })
}
