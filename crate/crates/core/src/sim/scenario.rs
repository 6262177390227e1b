use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::controller::{ControlStrategy, ControllerConfig};
use crate::estimator::ClassifierModel;
use crate::geo::GeoPoint;
use crate::server::ServerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Normal,
    Emergency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Compliant,
    Runner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchSpec {
    pub capacity: u32,
    pub priority: bool,
    /// Vehicles per minute.
    pub arrival_rate: f64,
    /// Branches a vehicle from this approach may leave by.
    pub movements: Vec<usize>,
}

impl Default for BranchSpec {
    fn default() -> Self {
        Self { capacity: 15, priority: false, arrival_rate: 6.0, movements: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmergencyArrival {
    pub time: f64,
    pub branch: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmergencySchedule {
    /// Seconds between generated emergency arrivals; 0 disables them.
    pub interval: f64,
    /// Fixed arrivals on top of the generated ones.
    pub arrivals: Vec<EmergencyArrival>,
}

/// A vehicle placed by hand rather than drawn from the arrival process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedVehicle {
    pub time: f64,
    pub branch: usize,
    pub kind: VehicleKind,
    pub behavior: Behavior,
    /// Distance to the stop line at spawn, metres.
    pub distance: f64,
    /// Speed at spawn and desired cruise speed, km/h.
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Kinematics {
    pub headway_m: f64,
    pub free_speed_kmh: f64,
    /// Desired speeds are drawn uniformly from `free_speed * (1 ± spread)`.
    pub speed_spread: f64,
    pub accel: f64,
    pub decel: f64,
    /// Deceleration a driver is willing to use when the light turns amber.
    pub amber_decel: f64,
    /// Delay before a stopped driver reacts to green, seconds.
    pub reaction: f64,
    pub spawn_distance_m: f64,
    /// Vehicles leave the model this far past the line.
    pub exit_distance_m: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self {
            headway_m: 7.5,
            free_speed_kmh: 50.0,
            speed_spread: 0.1,
            accel: 2.0,
            decel: 3.0,
            amber_decel: 4.5,
            reaction: 1.0,
            spawn_distance_m: 250.0,
            exit_distance_m: 20.0,
        }
    }
}

impl Kinematics {
    pub fn max_speed_kmh(&self) -> f64 {
        self.free_speed_kmh * (1.0 + self.speed_spread)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub branches: Vec<BranchSpec>,
    pub emergencies: EmergencySchedule,
    pub runner_probability: f64,
    pub controller: ControlStrategy,
    /// Seconds.
    pub duration: f64,
    /// Simulation step, seconds.
    pub tick: f64,
    /// Interval between controller decisions, seconds.
    pub controller_tick: f64,
    pub kinematics: Kinematics,
    pub scripted: Vec<ScriptedVehicle>,
    pub origin: GeoPoint,
    pub server: ServerConfig,
    /// Size of the anonymity registry used to hand out credentials.
    pub anonymity_k: usize,
    /// Light ids are `first_light_id + branch`.
    pub first_light_id: u16,
    /// Uses a built-in model when absent.
    pub model: Option<ClassifierModel>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            branches: vec![BranchSpec::default(); 4],
            emergencies: EmergencySchedule::default(),
            runner_probability: 0.02,
            controller: ControlStrategy::Dynamic(ControllerConfig::default()),
            duration: 600.0,
            tick: 0.1,
            controller_tick: 1.0,
            kinematics: Kinematics::default(),
            scripted: Vec::new(),
            origin: GeoPoint::new(28.4874, -16.3159),
            server: ServerConfig::default(),
            anonymity_k: 16,
            first_light_id: 1,
            model: None,
        }
    }
}

/// One vehicle due to enter the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Arrival {
    pub time: Duration,
    pub branch: usize,
    pub destination: usize,
    pub kind: VehicleKind,
    pub behavior: Behavior,
    pub desired_kmh: f64,
    pub distance: Option<f64>,
    pub speed_kmh: Option<f64>,
}

fn seconds(name: &str, value: f64) -> Result<Duration, SimError> {
    Duration::try_from_secs_f64(value)
        .map_err(|_| SimError::Config(format!("{name} must be a non-negative number of seconds, got {value}")))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn tick_duration(&self) -> Duration {
        Duration::try_from_secs_f64(self.tick).unwrap_or_default()
    }

    /// Compass direction of travel on each approach, evenly spaced.
    pub fn approach_bearing(&self, branch: usize) -> f64 {
        360.0 * branch as f64 / self.branches.len() as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.branches.len();
        if n < 2 {
            return Err(SimError::Config(format!("need at least 2 branches, got {n}")));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(SimError::Config(format!("duration must be positive, got {}", self.duration)));
        }
        let tick = seconds("tick", self.tick)?;
        let control = seconds("controller_tick", self.controller_tick)?;
        if tick.is_zero() {
            return Err(SimError::Config("tick must be positive".into()));
        }
        if control.is_zero() || control.as_nanos() % tick.as_nanos() != 0 {
            return Err(SimError::Config(format!(
                "controller_tick ({}) must be a positive multiple of tick ({})",
                self.controller_tick, self.tick
            )));
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.capacity == 0 {
                return Err(SimError::Config(format!("branch {i}: capacity must be at least 1")));
            }
            if !(b.arrival_rate >= 0.0) || !b.arrival_rate.is_finite() {
                return Err(SimError::Config(format!("branch {i}: arrival rate must be >= 0, got {}", b.arrival_rate)));
            }
            if let Some(m) = b.movements.iter().find(|&&m| m >= n || m == i) {
                return Err(SimError::Config(format!("branch {i}: invalid movement to branch {m}")));
            }
        }
        if !(0.0..=1.0).contains(&self.runner_probability) {
            return Err(SimError::Config(format!(
                "runner_probability must be in [0, 1], got {}",
                self.runner_probability
            )));
        }
        if !(self.emergencies.interval >= 0.0) || !self.emergencies.interval.is_finite() {
            return Err(SimError::Config("emergency interval must be >= 0".into()));
        }
        for e in &self.emergencies.arrivals {
            seconds("emergency time", e.time)?;
            if e.branch >= n {
                return Err(SimError::Config(format!("emergency arrival on unknown branch {}", e.branch)));
            }
        }
        let k = &self.kinematics;
        let positive =
            [k.headway_m, k.free_speed_kmh, k.accel, k.decel, k.amber_decel, k.spawn_distance_m, k.exit_distance_m];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || !(0.0..1.0).contains(&k.speed_spread)
            || !(k.reaction >= 0.0)
        {
            return Err(SimError::Config("kinematic parameters must be positive".into()));
        }
        for s in &self.scripted {
            seconds("scripted time", s.time)?;
            if s.branch >= n {
                return Err(SimError::Config(format!("scripted vehicle on unknown branch {}", s.branch)));
            }
            if !(s.distance >= 0.0 && s.distance <= k.spawn_distance_m)
                || !(s.speed >= 0.0 && s.speed <= k.max_speed_kmh())
            {
                return Err(SimError::Config(format!(
                    "scripted vehicle needs 0 <= distance <= {} m and 0 <= speed <= {} km/h",
                    k.spawn_distance_m,
                    k.max_speed_kmh()
                )));
            }
        }
        if self.anonymity_k < 2 {
            return Err(SimError::Config(format!("anonymity_k must be at least 2, got {}", self.anonymity_k)));
        }
        if usize::from(self.first_light_id) + n > usize::from(u16::MAX) + 1 {
            return Err(SimError::Config("light ids overflow".into()));
        }
        self.controller.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.server.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    fn movements(&self, branch: usize) -> Vec<usize> {
        let listed = &self.branches[branch].movements;
        if listed.is_empty() {
            (0..self.branches.len()).filter(|&d| d != branch).collect()
        } else {
            listed.clone()
        }
    }

    /// Every arrival for `seed`, in time order. Depends only on the seed and
    /// the traffic description, never on the controller, so runs that differ
    /// only in control see identical traffic.
    pub(crate) fn arrivals(&self, seed: u64) -> Vec<Arrival> {
        let duration = Duration::from_secs_f64(self.duration);
        let k = &self.kinematics;
        let mut out = Vec::new();
        let draw = |rng: &mut ChaCha8Rng, branch: usize, time: Duration, kind: VehicleKind, runner_p: f64| {
            let movements = self.movements(branch);
            let destination = movements[rng.gen_range(0..movements.len())];
            let behavior = if rng.gen_bool(runner_p) { Behavior::Runner } else { Behavior::Compliant };
            let desired_kmh = k.free_speed_kmh * rng.gen_range(1.0 - k.speed_spread..=1.0 + k.speed_spread);
            Arrival { time, branch, destination, kind, behavior, desired_kmh, distance: None, speed_kmh: None }
        };

        for (branch, spec) in self.branches.iter().enumerate() {
            if spec.arrival_rate == 0.0 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + branch as u64);
            let gap = Exp::new(spec.arrival_rate / 60.0).expect("positive rate");
            let mut t = 0.0;
            loop {
                t += gap.sample(&mut rng);
                let time = Duration::from_secs_f64(t);
                if time >= duration {
                    break;
                }
                out.push(draw(&mut rng, branch, time, VehicleKind::Normal, self.runner_probability));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        if self.emergencies.interval > 0.0 {
            let mut t = self.emergencies.interval / 2.0;
            while t < self.duration {
                let branch = rng.gen_range(0..self.branches.len());
                out.push(draw(&mut rng, branch, Duration::from_secs_f64(t), VehicleKind::Emergency, 0.0));
                t += self.emergencies.interval;
            }
        }
        for e in &self.emergencies.arrivals {
            out.push(draw(&mut rng, e.branch, Duration::from_secs_f64(e.time), VehicleKind::Emergency, 0.0));
        }
        for s in &self.scripted {
            let mut a = draw(&mut rng, s.branch, Duration::from_secs_f64(s.time), s.kind, 0.0);
            a.behavior = s.behavior;
            a.desired_kmh = s.speed.max(1.0);
            a.distance = Some(s.distance);
            a.speed_kmh = Some(s.speed);
            out.push(a);
        }
        out.retain(|a| a.time < duration);
        out.sort_by_key(|a| (a.time, a.branch));
        out
    }
}

/// The four reference layouts: two three-branch and two four-branch
/// crossroads that differ in which movements are allowed.
///
/// They use a 10 s minimum green. At 5 s the clearance and start-up losses
/// eat most of each phase and the four-branch layouts saturate.
pub fn build_paper_scenarios() -> Vec<Scenario> {
    let layout = |name: &str, n: usize, movements: &dyn Fn(usize) -> Vec<usize>| Scenario {
        name: name.into(),
        branches: (0..n).map(|b| BranchSpec { movements: movements(b), ..BranchSpec::default() }).collect(),
        emergencies: EmergencySchedule { interval: 120.0, arrivals: Vec::new() },
        controller: ControlStrategy::Dynamic(ControllerConfig {
            t_min: Duration::from_secs(10),
            ..ControllerConfig::default()
        }),
        duration: 1800.0,
        ..Scenario::default()
    };
    let others = |n: usize| move |b: usize| (0..n).filter(|&d| d != b).collect::<Vec<_>>();
    vec![
        layout("case1", 3, &|b| vec![(b + 1) % 3]),
        layout("case2", 3, &others(3)),
        layout("case3", 4, &|b| vec![(b + 2) % 4]),
        layout("case4", 4, &others(4)),
    ]
}
