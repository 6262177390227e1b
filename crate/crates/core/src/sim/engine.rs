use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::OnceLock;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::output::{
    DeliveryRecord, EventKind, LatencyStats, SimEvent, SimMetrics, SimOutcome, Violation, ViolationKind, WaitStats,
};
use super::scenario::{Arrival, Behavior, Scenario, VehicleKind};
use super::SimError;
use crate::auth::{
    build_registry, mac_sign, AnonymityRegistry, Credentials, Identity, KeyedSigner, SecretKey, TagSigner,
};
use crate::codec::{
    decode_beacon, decode_event, encode_beacon, encode_event, quantize_position, Beacon, BitString, EventPacket,
    EventType, LightState, Plate,
};
use crate::controller::{BranchState, Intersection, PhaseEvent, PhaseState, Signal};
use crate::estimator::{
    bearing_difference, classify, generate_traces, relevance_check, train, ClassifierModel, DistanceTrend,
    EstimateKind, Position, TraceCollector, TrainConfig, BUCKET_SPACING_M, DEFAULT_BEARING_TOLERANCE_DEG,
    DEFAULT_START_DISTANCE_M,
};
use crate::geo::GeoPoint;
use crate::server::{CoordServer, Delivery, DeliveryPath, PositionReport, Pseudonym};

pub const BEACON_INTERVAL: Duration = Duration::from_millis(250);
/// Vehicles count as waiting below this speed, km/h.
pub const WAITING_SPEED_KMH: f64 = 0.5;

/// Model used when a scenario does not bring its own: trained once on
/// generated traces.
pub fn default_model() -> &'static ClassifierModel {
    static MODEL: OnceLock<ClassifierModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let traces = generate_traces(0, 100, 2.0).expect("valid generator arguments");
        train(&traces, &TrainConfig::default()).expect("generated traces are trainable")
    })
}

#[derive(Debug, Clone)]
struct Vehicle {
    id: u64,
    kind: VehicleKind,
    behavior: Behavior,
    branch: usize,
    destination: usize,
    distance: f64,
    speed_kmh: f64,
    desired_kmh: f64,
    wait: f64,
    crossed: bool,
    /// Decision taken when the light turned amber: `true` to go through.
    amber_go: Option<bool>,
    trace: TraceCollector,
    predicted: bool,
    slot: Option<usize>,
    next_report: Duration,
    /// Light whose bearing matches the approach, once heard.
    light: Option<(u16, u16)>,
    keys: BTreeMap<u16, SecretKey>,
    perceived: Option<LightState>,
}

struct PendingBeacon {
    arrival: Duration,
    bits: BitString,
}

struct PendingDelivery {
    record: DeliveryRecord,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    model: &'a ClassifierModel,
    tick: Duration,
    tick_s: f64,
    control_every: u64,
    max_step_m: f64,
    bearings: Vec<f64>,

    anonymity: AnonymityRegistry,
    free_slots: BTreeSet<usize>,
    server: CoordServer,
    light_keys: Vec<SecretKey>,

    lanes: Vec<Vec<Vehicle>>,
    arrivals: VecDeque<Arrival>,
    held: Vec<VecDeque<Arrival>>,
    next_id: u64,
    slot_owner: BTreeMap<Pseudonym, u64>,

    intersection: Intersection,
    phase: PhaseState,
    signal: Signal,
    green_since: Vec<Duration>,
    crossed_on_green: bool,

    next_beacon: Duration,
    beacons: VecDeque<PendingBeacon>,
    deliveries: Vec<PendingDelivery>,

    now: Duration,
    step: u64,
    metrics: SimMetrics,
    waits: Vec<(VehicleKind, f64)>,
    events: Vec<SimEvent>,
    delivered: Vec<DeliveryRecord>,
    violations: Vec<Violation>,
}

/// Runs `scenario` to completion. Deterministic for a given seed.
pub fn run(scenario: &Scenario, seed: u64) -> Result<SimOutcome, SimError> {
    scenario.validate()?;
    let model = scenario.model.as_ref().unwrap_or_else(|| default_model());
    let expected = (DEFAULT_START_DISTANCE_M / BUCKET_SPACING_M) as usize + 1;
    if model.bucket_count() != expected {
        return Err(SimError::Config(format!(
            "model has {} weights, traces have {expected} buckets",
            model.bucket_count()
        )));
    }
    let mut engine = Engine::new(scenario, model, seed)?;
    let total = (scenario.duration / scenario.tick).ceil() as u64;
    for _ in 0..total {
        engine.advance();
    }
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, model: &'a ClassifierModel, seed: u64) -> Result<Self, SimError> {
        let n = scenario.branch_count();
        let k = scenario.anonymity_k;
        let identities = (0..k * k).map(|i| Identity(format!("slot-{i}"))).collect();
        let anonymity = build_registry(identities, k, seed).map_err(|e| SimError::Config(e.to_string()))?;

        let mut key_rng = ChaCha8Rng::seed_from_u64(seed);
        key_rng.set_stream(u64::MAX);
        let server_key = SecretKey::random(&mut key_rng);
        let light_keys: Vec<_> = (0..n).map(|_| SecretKey::random(&mut key_rng)).collect();
        let mut server = CoordServer::new(scenario.server, scenario.origin, anonymity.keys().to_vec(), server_key)
            .map_err(|e| SimError::Config(e.to_string()))?;
        for (b, key) in light_keys.iter().enumerate() {
            server.register_light(scenario.first_light_id + b as u16, scenario.origin, key.clone());
        }

        let branches = scenario
            .branches
            .iter()
            .enumerate()
            .map(|(id, b)| BranchState::empty(id, b.priority, b.capacity))
            .collect();
        let intersection = Intersection::new(branches).map_err(|e| SimError::Config(e.to_string()))?;
        let phase = PhaseState::initial(n, 0);
        let tick = scenario.tick_duration();
        let control = Duration::from_secs_f64(scenario.controller_tick);
        let max_speed = scenario.scripted.iter().map(|s| s.speed).fold(scenario.kinematics.max_speed_kmh(), f64::max);

        Ok(Self {
            scenario,
            model,
            tick,
            tick_s: tick.as_secs_f64(),
            control_every: (control.as_nanos() / tick.as_nanos()) as u64,
            max_step_m: max_speed / 3.6 * tick.as_secs_f64() + 1e-9,
            bearings: (0..n).map(|b| scenario.approach_bearing(b)).collect(),
            free_slots: (0..k * k).collect(),
            anonymity,
            server,
            light_keys,
            lanes: vec![Vec::new(); n],
            arrivals: scenario.arrivals(seed).into(),
            held: vec![VecDeque::new(); n],
            next_id: 0,
            slot_owner: BTreeMap::new(),
            signal: phase.signal(),
            phase,
            intersection,
            green_since: vec![Duration::ZERO; n],
            crossed_on_green: false,
            next_beacon: Duration::ZERO,
            beacons: VecDeque::new(),
            deliveries: Vec::new(),
            now: Duration::ZERO,
            step: 0,
            metrics: SimMetrics::default(),
            waits: Vec::new(),
            events: Vec::new(),
            delivered: Vec::new(),
            violations: Vec::new(),
        })
    }

    fn log(&mut self, kind: EventKind, vehicle: Option<u64>, branch: Option<usize>, latency_ms: Option<f64>) {
        self.events.push(SimEvent { tick: self.step, kind, vehicle, branch, latency_ms });
    }

    fn violation(&mut self, kind: ViolationKind, detail: String) {
        self.violations.push(Violation { tick: self.step, kind, detail });
    }

    fn advance(&mut self) {
        if self.step == 0 {
            self.emit_beacons();
        }
        self.step += 1;
        self.now = self.tick * self.step as u32;
        self.spawn_arrivals();
        self.receive_beacons();
        self.move_vehicles();
        self.remove_exited();
        self.report_positions();
        self.deliver_messages();
        if self.step.is_multiple_of(self.control_every) {
            self.step_controller();
        }
        self.emit_beacons();
        self.check_invariants();
    }

    // --- geometry -------------------------------------------------------

    fn position(&self, v: &Vehicle) -> GeoPoint {
        let origin = self.scenario.origin;
        if v.distance >= 0.0 {
            origin.offset(self.bearings[v.branch] + 180.0, v.distance)
        } else {
            origin.offset(self.bearings[v.destination] + 180.0, -v.distance)
        }
    }

    fn heading(&self, v: &Vehicle) -> f64 {
        if v.distance >= 0.0 {
            self.bearings[v.branch]
        } else {
            (self.bearings[v.destination] + 180.0) % 360.0
        }
    }

    fn credentials(&self, slot: usize) -> Credentials {
        let k = self.anonymity.k();
        self.anonymity.credentials_at(slot / k, slot % k)
    }

    fn pseudonym(&self, slot: usize) -> Pseudonym {
        let c = self.credentials(slot);
        Pseudonym { pseudo_id: c.pseudo_id, key_index: c.key_index }
    }

    fn signed_report(&self, v: &Vehicle, slot: usize) -> crate::auth::AuthenticatedMessage {
        let report = PositionReport { position: self.position(v), heading: self.heading(v) as f32 };
        mac_sign(&self.credentials(slot), &report.to_bytes(), self.server.config().wire_time(self.now))
    }

    // --- arrivals -------------------------------------------------------

    fn spawn_arrivals(&mut self) {
        while self.arrivals.front().is_some_and(|a| a.time <= self.now) {
            let a = self.arrivals.pop_front().expect("checked");
            self.held[a.branch].push_back(a);
        }
        for b in 0..self.lanes.len() {
            while let Some(a) = self.held[b].front().copied() {
                if !self.try_spawn(a) {
                    break;
                }
                self.held[b].pop_front();
            }
        }
    }

    fn try_spawn(&mut self, a: Arrival) -> bool {
        let k = &self.scenario.kinematics;
        let distance = a.distance.unwrap_or(k.spawn_distance_m);
        let lane = &self.lanes[a.branch];
        let at = lane.partition_point(|v| v.distance < distance);
        let ahead = at.checked_sub(1).map(|i| lane[i].distance);
        let behind = lane.get(at).map(|v| v.distance);
        if ahead.is_some_and(|d| distance - d < k.headway_m) || behind.is_some_and(|d| d - distance < k.headway_m) {
            return false;
        }
        let gap = ahead.map_or(f64::INFINITY, |d| distance - d - k.headway_m);
        let speed_kmh = a.speed_kmh.unwrap_or(a.desired_kmh).min((2.0 * k.decel * gap).sqrt() * 3.6);

        let id = self.next_id;
        self.next_id += 1;
        let slot = self.free_slots.pop_first();
        let vehicle = Vehicle {
            id,
            kind: a.kind,
            behavior: a.behavior,
            branch: a.branch,
            destination: a.destination,
            distance,
            speed_kmh,
            desired_kmh: a.desired_kmh,
            wait: 0.0,
            crossed: false,
            amber_go: None,
            trace: TraceCollector::new(DEFAULT_START_DISTANCE_M),
            predicted: false,
            slot,
            next_report: self.now,
            light: None,
            keys: BTreeMap::new(),
            perceived: None,
        };
        if let Some(slot) = slot {
            self.slot_owner.insert(self.pseudonym(slot), id);
        }
        self.lanes[a.branch].insert(at, vehicle);
        self.waits.push((a.kind, 0.0));
        self.metrics.vehicles_spawned += 1;
        if a.behavior == Behavior::Runner {
            self.metrics.runners_spawned += 1;
        }
        self.log(EventKind::Spawn, Some(id), Some(a.branch), None);
        true
    }

    // --- beacons --------------------------------------------------------

    fn emit_beacons(&mut self) {
        while self.next_beacon <= self.now {
            let arrival = self.next_beacon + self.server.config().latency.ble;
            for b in 0..self.lanes.len() {
                let mut beacon = Beacon {
                    light_id: self.scenario.first_light_id + b as u16,
                    bearing: self.bearings[b].round() as u16 % 360,
                    state: self.signal.aspect(b),
                    auth_tag: [0; 22],
                };
                let signed = beacon.signed_bits().expect("bearing below 360");
                KeyedSigner::new(self.light_keys[b].clone()).sign(signed.as_bytes(), &mut beacon.auth_tag);
                let bits = encode_beacon(&beacon).expect("valid beacon");
                self.beacons.push_back(PendingBeacon { arrival, bits });
            }
            self.next_beacon += BEACON_INTERVAL;
        }
    }

    fn receive_beacons(&mut self) {
        let range = self.server.config().beacon_range_m;
        while self.beacons.front().is_some_and(|p| p.arrival <= self.now) {
            let pending = self.beacons.pop_front().expect("checked");
            let beacon = match decode_beacon(&pending.bits) {
                Ok(b) => b,
                Err(e) => {
                    self.violation(ViolationKind::Communication, format!("beacon decode: {e}"));
                    continue;
                }
            };
            // Every holder has the same key, so the tag is checked once per emission.
            let authentic = self.server.light_key(beacon.light_id).is_some_and(|key| {
                beacon
                    .signed_bits()
                    .is_ok_and(|bits| KeyedSigner::new(key.clone()).verify(bits.as_bytes(), &beacon.auth_tag))
            });
            for b in 0..self.lanes.len() {
                for i in 0..self.lanes[b].len() {
                    let v = &self.lanes[b][i];
                    if v.distance.abs() > range || v.crossed {
                        continue;
                    }
                    if bearing_difference(self.heading(v), f64::from(beacon.bearing)) > DEFAULT_BEARING_TOLERANCE_DEG {
                        continue;
                    }
                    if !v.keys.contains_key(&beacon.light_id) {
                        self.provision(b, i, beacon.light_id);
                    }
                    let v = &mut self.lanes[b][i];
                    if authentic && v.keys.contains_key(&beacon.light_id) {
                        v.light = Some((beacon.light_id, beacon.bearing));
                        v.perceived = Some(beacon.state);
                    }
                }
            }
        }
    }

    fn provision(&mut self, b: usize, i: usize, light_id: u16) {
        let Some(slot) = self.lanes[b][i].slot else { return };
        let request = self.signed_report(&self.lanes[b][i], slot);
        match self.server.provision_key(&request, light_id, self.now) {
            Ok(delivery) => {
                self.lanes[b][i].keys.insert(light_id, delivery.key);
            }
            Err(crate::server::ServerError::OutOfRange { .. }) => {}
            Err(e) => self.violation(ViolationKind::Communication, format!("provisioning: {e}")),
        }
    }

    // --- kinematics -----------------------------------------------------

    /// Whether a compliant driver on `branch` has to hold at the line.
    fn must_stop(&self, v: &Vehicle) -> bool {
        if v.crossed || v.distance < 0.0 || v.behavior == Behavior::Runner {
            return false;
        }
        match self.signal.aspect(v.branch) {
            LightState::Green => {
                self.now.saturating_sub(self.green_since[v.branch]).as_secs_f64() < self.scenario.kinematics.reaction
            }
            LightState::Orange => v.amber_go != Some(true),
            LightState::Red | LightState::Off => true,
        }
    }

    fn move_vehicles(&mut self) {
        let k = self.scenario.kinematics;
        let dt = self.tick_s;
        for b in 0..self.lanes.len() {
            for i in 0..self.lanes[b].len() {
                let leader = i.checked_sub(1).map(|j| self.lanes[b][j].distance);
                let stop = self.must_stop(&self.lanes[b][i]);
                let v = &mut self.lanes[b][i];
                let mut gap = leader.map_or(f64::INFINITY, |d| v.distance - d - k.headway_m);
                if stop {
                    gap = gap.min(v.distance);
                }
                let gap = gap.max(0.0);
                let speed =
                    (v.speed_kmh / 3.6 + k.accel * dt).min(v.desired_kmh / 3.6).min((2.0 * k.decel * gap).sqrt());
                let moved = (speed * dt).min(gap);
                let before = v.distance;
                v.distance -= moved;
                v.speed_kmh = if moved < speed * dt { moved / dt * 3.6 } else { speed * 3.6 };
                if v.speed_kmh < WAITING_SPEED_KMH {
                    v.wait += dt;
                }
                if (before - v.distance).abs() > self.max_step_m {
                    let detail = format!("vehicle {} moved {:.3} m in one tick", v.id, before - v.distance);
                    self.violation(ViolationKind::Teleport, detail);
                }
                self.after_move(b, i, before);
            }
        }
    }

    fn after_move(&mut self, b: usize, i: usize, before: f64) {
        let v = &mut self.lanes[b][i];
        let marks = v.trace.observed();
        v.trace.observe(before, v.distance, v.speed_kmh);
        let new_mark = v.trace.observed() > marks;

        if new_mark && v.distance > 0.0 && !v.predicted {
            self.maybe_predict(b, i, before);
        }
        let v = &self.lanes[b][i];
        if !v.crossed && v.distance < 0.0 {
            self.cross(b, i);
        }
    }

    fn maybe_predict(&mut self, b: usize, i: usize, before: f64) {
        let v = &self.lanes[b][i];
        let Some((_, bearing)) = v.light else { return };
        if !matches!(v.perceived, Some(LightState::Orange | LightState::Red)) {
            return;
        }
        let trend = if v.distance < before { DistanceTrend::Decreasing } else { DistanceTrend::Steady };
        if !relevance_check(self.heading(v), f64::from(bearing), v.speed_kmh, trend) {
            return;
        }
        let Some(trace) = v.trace.snapshot() else { return };
        let position = Position::Approaching { distance_m: v.distance, speed_kmh: v.speed_kmh };
        let Ok(result) = classify(self.model, &trace, position) else { return };
        if result.kind != EstimateKind::Prediction {
            return;
        }
        let (id, compliant, slot, at) = (v.id, v.behavior == Behavior::Compliant, v.slot, self.position(v));
        self.lanes[b][i].predicted = true;
        self.metrics.predictions += 1;
        if compliant {
            self.metrics.false_predictions += 1;
        }
        self.log(EventKind::Prediction, Some(id), Some(b), None);
        if let Some(slot) = slot {
            let sender = self.pseudonym(slot);
            let out = self.server.direct_warning(sender, at, self.now);
            self.queue(DeliveryPath::WifiDirect, id, out);
        }
    }

    fn cross(&mut self, b: usize, i: usize) {
        let aspect = self.signal.aspect(b);
        let v = &mut self.lanes[b][i];
        v.crossed = true;
        if aspect == LightState::Green {
            self.crossed_on_green = true;
        }
        let v = &self.lanes[b][i];
        if v.behavior == Behavior::Runner && aspect == LightState::Red {
            self.metrics.runner_red_crossings += 1;
        }
        if v.perceived != Some(LightState::Red) {
            return;
        }
        let (id, behavior) = (v.id, v.behavior);
        let detected = v
            .trace
            .snapshot()
            .and_then(|trace| classify(self.model, &trace, Position::AtLight).ok())
            .is_some_and(|r| r.kind == EstimateKind::Detection);
        if !detected {
            self.violation(ViolationKind::MissedDetection, format!("vehicle {id} crossed on red undetected"));
            return;
        }
        self.metrics.detections += 1;
        self.log(EventKind::Detection, Some(id), Some(b), None);
        if behavior == Behavior::Compliant {
            self.violation(ViolationKind::CompliantDetection, format!("compliant vehicle {id} detected"));
        }
        self.report_detection(b, i);
    }

    fn report_detection(&mut self, b: usize, i: usize) {
        let v = &self.lanes[b][i];
        let Some(slot) = v.slot else { return };
        let credentials = self.credentials(slot);
        let at = self.position(v);
        let Ok((lat_q, lon_q)) = quantize_position(at.lat, at.lon, self.scenario.origin) else {
            self.violation(ViolationKind::Communication, format!("vehicle {} outside the encodable area", v.id));
            return;
        };
        let mut event = EventPacket {
            pseudo_id: credentials.pseudo_id,
            timestamp: self.server.config().wire_time(self.now),
            lat_q,
            lon_q,
            speed: (v.speed_kmh * 10.0).round().min(f64::from(u16::MAX)) as u16,
            direction: ((self.heading(v) * 100.0).round() as u16) % 36000,
            plate: Plate::new(&format!("SV{:05}", v.id % 100_000)).expect("ascii plate"),
            mac: [0; 8],
        };
        let id = v.id;
        let received = event
            .payload()
            .map(|payload| event.mac = mac_sign(&credentials, &payload, event.timestamp).mac)
            .and_then(|()| encode_event(&event))
            .and_then(|bits| decode_event(&bits));
        let dispatch = match received {
            Ok(packet) => {
                self.server.dispatch_notification(&packet, EventType::Detection, self.now).map_err(|e| e.to_string())
            }
            Err(e) => Err(e.to_string()),
        };
        match dispatch {
            Ok(d) => {
                self.metrics.dispatches += 1;
                self.log(EventKind::Dispatch, Some(id), Some(b), None);
                self.queue(DeliveryPath::Lte, id, d.deliveries);
            }
            Err(e) => self.violation(ViolationKind::Communication, format!("dispatch for vehicle {id}: {e}")),
        }
    }

    fn queue(&mut self, path: DeliveryPath, offender: u64, deliveries: Vec<Delivery>) {
        for d in deliveries {
            let Some(&recipient) = self.slot_owner.get(&d.recipient) else { continue };
            let record = DeliveryRecord { path, offender, recipient, sent: self.now, delivered: d.delivery_time };
            self.deliveries.push(PendingDelivery { record });
        }
    }

    fn deliver_messages(&mut self) {
        let now = self.now;
        let (due, later): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.deliveries).into_iter().partition(|p| p.record.delivered <= now);
        self.deliveries = later;
        for p in due {
            let r = p.record;
            let kind = match r.path {
                DeliveryPath::Lte => EventKind::Notification,
                _ => EventKind::Warning,
            };
            let latency = (r.delivered - r.sent).as_secs_f64() * 1e3;
            self.log(kind, Some(r.recipient), None, Some(latency));
            self.delivered.push(r);
        }
    }

    fn remove_exited(&mut self) {
        let limit = -self.scenario.kinematics.exit_distance_m;
        for b in 0..self.lanes.len() {
            while self.lanes[b].first().is_some_and(|v| v.distance < limit) {
                let v = self.lanes[b].remove(0);
                if let Some(slot) = v.slot {
                    let who = self.pseudonym(slot);
                    self.server.deregister(&who);
                    self.slot_owner.remove(&who);
                    self.free_slots.insert(slot);
                }
                self.waits[v.id as usize].1 = v.wait;
                self.metrics.vehicles_exited += 1;
                self.log(EventKind::Exit, Some(v.id), Some(b), None);
            }
        }
    }

    fn report_positions(&mut self) {
        let period = self.server.config().update_period;
        for b in 0..self.lanes.len() {
            for i in 0..self.lanes[b].len() {
                let v = &self.lanes[b][i];
                let Some(slot) = v.slot else { continue };
                if v.next_report > self.now {
                    continue;
                }
                let message = self.signed_report(v, slot);
                if let Err(e) = self.server.update_position(&message, self.now) {
                    self.violation(ViolationKind::Communication, format!("position update: {e}"));
                }
                self.lanes[b][i].next_report = self.now + period;
            }
        }
    }

    // --- control --------------------------------------------------------

    fn step_controller(&mut self) {
        let headway = self.scenario.kinematics.headway_m;
        for b in 0..self.lanes.len() {
            let capacity = self.scenario.branches[b].capacity;
            let area = f64::from(capacity) * headway;
            let waiting = self.lanes[b].iter().filter(|v| !v.crossed && v.distance < area);
            let (n, e) =
                waiting.fold((0u32, 0u32), |(n, e), v| (n + 1, e + u32::from(v.kind == VehicleKind::Emergency)));
            let n = n.min(capacity);
            self.intersection.set_counts(b, n, e.min(n)).expect("counts clamped to capacity");
        }
        let control = self.tick * self.control_every as u32;
        let decision = self.scenario.controller.step(&self.phase, &self.intersection, control, self.crossed_on_green);
        self.crossed_on_green = false;
        self.phase = decision.phase;
        self.signal = decision.signal;
        match decision.event {
            Some(PhaseEvent::Switched { from, to }) => {
                self.metrics.phase_switches += 1;
                self.log(EventKind::Switch, None, Some(to), None);
                let amber = self.scenario.kinematics.amber_decel;
                for v in self.lanes[from].iter_mut().filter(|v| !v.crossed && v.distance > 0.0) {
                    let speed = v.speed_kmh / 3.6;
                    v.amber_go = Some(speed * speed / (2.0 * amber) > v.distance);
                }
                if self.signal == Signal::Green(to) {
                    self.start_green(to);
                }
            }
            Some(PhaseEvent::GreenStarted { branch }) => self.start_green(branch),
            Some(PhaseEvent::Reselected { branch }) => self.log(EventKind::Reselect, None, Some(branch), None),
            None => {}
        }
    }

    fn start_green(&mut self, branch: usize) {
        self.green_since[branch] = self.now;
        for v in &mut self.lanes[branch] {
            v.amber_go = None;
        }
        self.log(EventKind::Green, None, Some(branch), None);
    }

    fn check_invariants(&mut self) {
        let present: usize = self.lanes.iter().map(Vec::len).sum();
        self.metrics.vehicle_ticks += present as u64;
        if self.metrics.vehicles_spawned != self.metrics.vehicles_exited + present as u64 {
            let detail = format!(
                "spawned {} != exited {} + present {present}",
                self.metrics.vehicles_spawned, self.metrics.vehicles_exited
            );
            self.violation(ViolationKind::Conservation, detail);
        }
        let greens = (0..self.lanes.len()).filter(|&b| self.signal.aspect(b) == LightState::Green).count();
        let allowed = usize::from(matches!(self.signal, Signal::Green(_)));
        if greens != allowed {
            self.violation(ViolationKind::GreenExclusivity, format!("{greens} green branches under {:?}", self.signal));
        }
    }

    fn finish(mut self) -> SimOutcome {
        for v in self.lanes.iter().flatten() {
            self.waits[v.id as usize].1 = v.wait;
        }
        let of = |kind: Option<VehicleKind>| -> Vec<f64> {
            self.waits.iter().filter(|(k, _)| kind.is_none_or(|want| *k == want)).map(|(_, w)| *w).collect()
        };
        let emergency_waits = of(Some(VehicleKind::Emergency));
        let m = &mut self.metrics;
        m.vehicles_present = self.lanes.iter().map(Vec::len).sum::<usize>() as u64;
        m.overall = WaitStats::from_waits(&of(None));
        m.normal = WaitStats::from_waits(&of(Some(VehicleKind::Normal)));
        m.emergency = WaitStats::from_waits(&emergency_waits);
        m.emergency_waits = emergency_waits;
        m.notifications = LatencyStats::from_records(self.delivered.iter().filter(|r| r.path == DeliveryPath::Lte));
        m.warnings = LatencyStats::from_records(self.delivered.iter().filter(|r| r.path == DeliveryPath::WifiDirect));
        m.violations = self.violations.len() as u64;
        SimOutcome {
            metrics: self.metrics,
            events: self.events,
            deliveries: self.delivered,
            violations: self.violations,
            audit: self.server.audit_log().to_vec(),
        }
    }
}
