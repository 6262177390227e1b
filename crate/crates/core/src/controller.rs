//! Weight-based phase selection for a single intersection.
//!
//! Every branch (approach road) has a monitored area that holds at most
//! `capacity` vehicles. Its weight is the sum of three terms: one per
//! vehicle in the area, `N` per emergency vehicle and `N / 2` when the
//! branch is a priority road, where `N` is the largest capacity among all
//! branches of the intersection. Weights are kept in half-units so that
//! every comparison is exact.
//!
//! The phase state machine holds green for at least `t_min`, re-evaluates
//! the weights between `t_min` and `t_max`, and forces a re-selection at
//! `t_max`. Every switch goes through a fixed clearance interval during
//! which no branch is green.

use std::cmp::Reverse;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::LightState;

pub type BranchId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControllerError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Live counts for one approach.
///
/// Emergency vehicles are also counted in `vehicles`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchState {
    pub id: BranchId,
    pub vehicles: u32,
    pub emergency: u32,
    pub priority: bool,
    pub capacity: u32,
}

impl BranchState {
    pub fn new(
        id: BranchId,
        vehicles: u32,
        emergency: u32,
        priority: bool,
        capacity: u32,
    ) -> Result<Self, ControllerError> {
        let state = Self { id, vehicles, emergency, priority, capacity };
        state.validate()?;
        Ok(state)
    }

    pub fn empty(id: BranchId, priority: bool, capacity: u32) -> Self {
        Self { id, vehicles: 0, emergency: 0, priority, capacity }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.capacity == 0 {
            return Err(ControllerError::InvalidArgument(format!("branch {}: capacity must be at least 1", self.id)));
        }
        if self.emergency > self.vehicles {
            return Err(ControllerError::InvalidArgument(format!(
                "branch {}: {} emergency vehicles but only {} vehicles",
                self.id, self.emergency, self.vehicles
            )));
        }
        if self.vehicles > self.capacity {
            return Err(ControllerError::InvalidArgument(format!(
                "branch {}: {} vehicles exceed capacity {}",
                self.id, self.vehicles, self.capacity
            )));
        }
        Ok(())
    }

    pub fn has_emergency(&self) -> bool {
        self.emergency > 0
    }
}

/// A non-negative weight stored as a count of halves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Weight(u64);

impl Weight {
    pub const ZERO: Weight = Weight(0);

    pub fn from_halves(halves: u64) -> Self {
        Weight(halves)
    }

    pub fn from_whole(units: u64) -> Self {
        Weight(units * 2)
    }

    pub fn halves(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl std::ops::Add for Weight {
    type Output = Weight;

    fn add(self, rhs: Weight) -> Weight {
        Weight(self.0 + rhs.0)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchWeight {
    pub vehicles: Weight,
    pub emergency: Weight,
    pub priority: Weight,
    pub total: Weight,
}

/// Weight of one branch given the effective capacity `N` of the intersection.
pub fn branch_weight(branch: &BranchState, effective_capacity: u32) -> BranchWeight {
    debug_assert!(effective_capacity >= branch.capacity);
    let n = u64::from(effective_capacity);
    let vehicles = Weight::from_whole(u64::from(branch.vehicles));
    let emergency = Weight::from_whole(u64::from(branch.emergency) * n);
    // p * N / 2 is exactly p * N halves
    let priority = Weight::from_halves(if branch.priority { n } else { 0 });
    BranchWeight { vehicles, emergency, priority, total: vehicles + emergency + priority }
}

/// Ordering key used for phase selection: any emergency first, then total
/// weight, then the lowest branch id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SelectionKey {
    has_emergency: bool,
    total: Weight,
    lowest_id: Reverse<BranchId>,
}

impl SelectionKey {
    pub fn new(state: &BranchState, weight: &BranchWeight) -> Self {
        Self { has_emergency: state.has_emergency(), total: weight.total, lowest_id: Reverse(state.id) }
    }

    /// Compares only emergency presence and weight, ignoring the id tie-break.
    fn outranks(&self, other: &SelectionKey) -> bool {
        (self.has_emergency, self.total) > (other.has_emergency, other.total)
    }
}

/// Returns the branch that should hold green.
pub fn select_priority_branch(weights: &[BranchWeight], states: &[BranchState]) -> Result<BranchId, ControllerError> {
    if weights.is_empty() || states.is_empty() {
        return Err(ControllerError::InvalidArgument("no branches to select from".into()));
    }
    if weights.len() != states.len() {
        return Err(ControllerError::InvalidArgument(format!(
            "{} weights for {} branches",
            weights.len(),
            states.len()
        )));
    }
    states
        .iter()
        .zip(weights)
        .max_by_key(|(s, w)| SelectionKey::new(s, w))
        .map(|(s, _)| s.id)
        .ok_or_else(|| ControllerError::InvalidArgument("no branches to select from".into()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intersection {
    branches: Vec<BranchState>,
}

impl Intersection {
    pub fn new(branches: Vec<BranchState>) -> Result<Self, ControllerError> {
        if branches.len() < 2 {
            return Err(ControllerError::InvalidArgument(format!(
                "an intersection needs at least 2 branches, got {}",
                branches.len()
            )));
        }
        for (index, branch) in branches.iter().enumerate() {
            if branch.id != index {
                return Err(ControllerError::InvalidArgument(format!(
                    "branch at position {index} has id {}",
                    branch.id
                )));
            }
            branch.validate()?;
        }
        Ok(Self { branches })
    }

    pub fn branches(&self) -> &[BranchState] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// The largest capacity among all branches; this is the `N` used for
    /// every branch weight.
    pub fn max_capacity(&self) -> u32 {
        self.branches.iter().map(|b| b.capacity).max().unwrap_or(1)
    }

    pub fn weights(&self) -> Vec<BranchWeight> {
        let n = self.max_capacity();
        self.branches.iter().map(|b| branch_weight(b, n)).collect()
    }

    pub fn select(&self) -> BranchId {
        self.select_where(|_| true).unwrap_or(0)
    }

    /// Replaces the live counts of one branch.
    pub fn set_counts(&mut self, id: BranchId, vehicles: u32, emergency: u32) -> Result<(), ControllerError> {
        let branch =
            self.branches.get_mut(id).ok_or_else(|| ControllerError::InvalidArgument(format!("no branch {id}")))?;
        let updated = BranchState { vehicles, emergency, ..*branch };
        updated.validate()?;
        *branch = updated;
        Ok(())
    }

    fn key(&self, id: BranchId) -> SelectionKey {
        let n = self.max_capacity();
        let b = &self.branches[id];
        SelectionKey::new(b, &branch_weight(b, n))
    }

    fn select_where(&self, mut keep: impl FnMut(&BranchState) -> bool) -> Option<BranchId> {
        let n = self.max_capacity();
        self.branches
            .iter()
            .filter(|b| keep(b))
            .max_by_key(|b| SelectionKey::new(b, &branch_weight(b, n)))
            .map(|b| b.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    #[serde(with = "secs")]
    pub t_min: Duration,
    #[serde(with = "secs")]
    pub t_max: Duration,
    /// Consecutive controller ticks without a stop-line crossing on green
    /// after which the green is considered wasted.
    pub idle_threshold: u32,
    #[serde(with = "secs")]
    pub all_red: Duration,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            t_min: Duration::from_secs(5),
            t_max: Duration::from_secs(30),
            idle_threshold: 3,
            all_red: Duration::from_secs(2),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.t_min.is_zero() || self.t_min > self.t_max {
            return Err(ControllerError::InvalidArgument(format!(
                "need 0 < t_min <= t_max, got t_min={:?} t_max={:?}",
                self.t_min, self.t_max
            )));
        }
        if self.idle_threshold == 0 {
            return Err(ControllerError::InvalidArgument("idle_threshold must be at least 1".into()));
        }
        Ok(())
    }

    /// Red time after which a waiting branch is served ahead of the weights.
    ///
    /// With this limit no occupied branch stays red for longer than
    /// `(branches - 1) * (t_max + all_red)` while no emergency is present.
    pub fn starvation_limit(&self, branch_count: usize) -> Duration {
        (self.t_max - self.t_min) * branch_count.saturating_sub(1) as u32
    }

    pub fn liveness_bound(&self, branch_count: usize) -> Duration {
        (self.t_max + self.all_red) * branch_count.saturating_sub(1) as u32
    }
}

/// Which aspect the intersection is showing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    Green(BranchId),
    /// No branch is green; `from` shows amber and every other branch red.
    Clearance {
        from: BranchId,
        to: BranchId,
    },
}

impl Signal {
    pub fn aspect(&self, branch: BranchId) -> LightState {
        match *self {
            Signal::Green(g) if g == branch => LightState::Green,
            Signal::Clearance { from, .. } if from == branch => LightState::Orange,
            _ => LightState::Red,
        }
    }

    pub fn green_branch(&self) -> Option<BranchId> {
        match *self {
            Signal::Green(g) => Some(g),
            Signal::Clearance { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseState {
    /// Branch holding green, or about to receive it during clearance.
    pub green_branch: BranchId,
    pub t_elapsed: Duration,
    pub idle_ticks: u32,
    /// Set while the clearance interval toward `green_branch` is running.
    pub clearance: Option<Clearance>,
    /// Time since each branch last started a green.
    pub red_for: Vec<Duration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clearance {
    pub from: BranchId,
    pub remaining: Duration,
}

impl PhaseState {
    pub fn initial(branch_count: usize, green: BranchId) -> Self {
        Self {
            green_branch: green,
            t_elapsed: Duration::ZERO,
            idle_ticks: 0,
            clearance: None,
            red_for: vec![Duration::ZERO; branch_count],
        }
    }

    pub fn signal(&self) -> Signal {
        match self.clearance {
            Some(c) => Signal::Clearance { from: c.from, to: self.green_branch },
            None => Signal::Green(self.green_branch),
        }
    }

    fn start_clearance(&mut self, to: BranchId, all_red: Duration) -> PhaseEvent {
        let from = self.green_branch;
        self.green_branch = to;
        self.t_elapsed = Duration::ZERO;
        self.idle_ticks = 0;
        if all_red.is_zero() {
            self.red_for[to] = Duration::ZERO;
        } else {
            self.clearance = Some(Clearance { from, remaining: all_red });
        }
        PhaseEvent::Switched { from, to }
    }

    fn advance_clock(&mut self, tick: Duration) {
        for (id, red) in self.red_for.iter_mut().enumerate() {
            if id != self.green_branch || self.clearance.is_some() {
                *red += tick;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseEvent {
    /// Green moved away from `from`; clearance toward `to` begins.
    Switched { from: BranchId, to: BranchId },
    /// Clearance finished and `branch` is now green.
    GreenStarted { branch: BranchId },
    /// Forced re-selection at `t_max` kept the same branch; the timer restarted.
    Reselected { branch: BranchId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseDecision {
    pub phase: PhaseState,
    pub signal: Signal,
    pub event: Option<PhaseEvent>,
}

/// Advances the dynamic controller by one tick.
///
/// `crossed_on_green` reports whether any vehicle crossed the stop line of
/// the green branch during the tick.
pub fn step_phase(
    phase: &PhaseState,
    config: &ControllerConfig,
    intersection: &Intersection,
    tick: Duration,
    crossed_on_green: bool,
) -> PhaseDecision {
    let mut next = phase.clone();
    next.advance_clock(tick);

    if let Some(event) = advance_clearance(&mut next, tick) {
        return finish(next, Some(event));
    }
    if next.clearance.is_some() {
        return finish(next, None);
    }

    next.t_elapsed += tick;
    next.idle_ticks = if crossed_on_green { 0 } else { next.idle_ticks.saturating_add(1) };

    if next.t_elapsed < config.t_min {
        return finish(next, None);
    }

    let current = next.green_branch;
    let current_key = intersection.key(current);
    let best = intersection.select();
    let any_emergency = intersection.branches().iter().any(BranchState::has_emergency);
    let at_max = next.t_elapsed >= config.t_max;

    let target = if any_emergency {
        (best != current && intersection.key(best).outranks(&current_key)).then_some(best)
    } else if let Some(due) = most_overdue(&next, config, intersection) {
        Some(due)
    } else if at_max || (best != current && intersection.key(best).outranks(&current_key)) {
        Some(best)
    } else if next.idle_ticks >= config.idle_threshold {
        intersection.select_where(|b| b.id != current).filter(|&alt| intersection.key(alt).total > Weight::ZERO)
    } else {
        None
    };

    let event = match target {
        Some(to) if to != current => Some(next.start_clearance(to, config.all_red)),
        _ if at_max => {
            next.t_elapsed = Duration::ZERO;
            next.idle_ticks = 0;
            Some(PhaseEvent::Reselected { branch: current })
        }
        _ => None,
    };
    finish(next, event)
}

/// Plain fixed-time plan: every branch in turn receives `green`, separated
/// by the clearance interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedCycle {
    #[serde(with = "secs")]
    pub green: Duration,
    #[serde(with = "secs")]
    pub all_red: Duration,
}

impl Default for FixedCycle {
    fn default() -> Self {
        Self { green: Duration::from_secs(20), all_red: Duration::from_secs(2) }
    }
}

impl FixedCycle {
    pub fn cycle_length(&self, branch_count: usize) -> Duration {
        (self.green + self.all_red) * branch_count as u32
    }
}

pub fn step_fixed(phase: &PhaseState, plan: &FixedCycle, branch_count: usize, tick: Duration) -> PhaseDecision {
    let mut next = phase.clone();
    next.advance_clock(tick);
    if let Some(event) = advance_clearance(&mut next, tick) {
        return finish(next, Some(event));
    }
    if next.clearance.is_some() {
        return finish(next, None);
    }
    next.t_elapsed += tick;
    let event = (next.t_elapsed >= plan.green)
        .then(|| next.start_clearance((next.green_branch + 1) % branch_count, plan.all_red));
    finish(next, event)
}

/// Either control strategy behind one interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ControlStrategy {
    Fixed(FixedCycle),
    Dynamic(ControllerConfig),
}

impl ControlStrategy {
    pub fn step(
        &self,
        phase: &PhaseState,
        intersection: &Intersection,
        tick: Duration,
        crossed_on_green: bool,
    ) -> PhaseDecision {
        match self {
            ControlStrategy::Fixed(plan) => step_fixed(phase, plan, intersection.branch_count(), tick),
            ControlStrategy::Dynamic(config) => step_phase(phase, config, intersection, tick, crossed_on_green),
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        match self {
            ControlStrategy::Fixed(plan) if plan.green.is_zero() => {
                Err(ControllerError::InvalidArgument("fixed green time must be positive".into()))
            }
            ControlStrategy::Fixed(_) => Ok(()),
            ControlStrategy::Dynamic(config) => config.validate(),
        }
    }

    pub fn all_red(&self) -> Duration {
        match self {
            ControlStrategy::Fixed(plan) => plan.all_red,
            ControlStrategy::Dynamic(config) => config.all_red,
        }
    }
}

fn advance_clearance(next: &mut PhaseState, tick: Duration) -> Option<PhaseEvent> {
    let clearance = next.clearance.as_mut()?;
    clearance.remaining = clearance.remaining.saturating_sub(tick);
    if !clearance.remaining.is_zero() {
        return None;
    }
    next.clearance = None;
    next.red_for[next.green_branch] = Duration::ZERO;
    Some(PhaseEvent::GreenStarted { branch: next.green_branch })
}

/// Occupied red branch that has waited past the starvation limit the longest.
fn most_overdue(phase: &PhaseState, config: &ControllerConfig, intersection: &Intersection) -> Option<BranchId> {
    let limit = config.starvation_limit(intersection.branch_count());
    intersection
        .branches()
        .iter()
        .filter(|b| b.id != phase.green_branch && b.vehicles > 0 && phase.red_for[b.id] >= limit)
        .max_by(|a, b| {
            phase.red_for[a.id]
                .cmp(&phase.red_for[b.id])
                .then_with(|| intersection.key(a.id).cmp(&intersection.key(b.id)))
        })
        .map(|b| b.id)
}

fn finish(phase: PhaseState, event: Option<PhaseEvent>) -> PhaseDecision {
    let signal = phase.signal();
    PhaseDecision { phase, signal, event }
}

pub(crate) mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Duration, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(value.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}
