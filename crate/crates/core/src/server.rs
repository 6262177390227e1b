//! Coordination server: position registry, neighbourhood lookup, key
//! provisioning for traffic lights and notification fan-out.
//!
//! All time is injected as a [`Duration`] since the start of the run; wire
//! timestamps are whole seconds offset by [`ServerConfig::epoch`].

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{
    mac_verify, AuthenticatedMessage, KeyedSigner, SecretKey, TagSigner, Verdict, DEFAULT_FRESHNESS_WINDOW,
};
use crate::codec::{
    dequantize_position, encode_notification, CodecError, EventPacket, EventType, GeoOrigin, NotificationPacket,
    NOTIFICATION_SIG_BYTES,
};
use crate::geo::{equirectangular_distance, GeoPoint};

pub const DEFAULT_UPDATE_PERIOD: Duration = Duration::from_secs(5);
pub const STALENESS_FACTOR: u32 = 3;
pub const DEFAULT_NOTIFICATION_RADIUS_M: f64 = 150.0;
pub const DEFAULT_BEACON_RANGE_M: f64 = 100.0;

pub const LTE_LATENCY: Duration = Duration::from_millis(100);
pub const WIFI_DIRECT_LATENCY: Duration = Duration::from_nanos(569_379_300);
pub const BLE_LATENCY: Duration = Duration::from_nanos(232_706_500);

/// Wire timestamps used when no epoch is configured.
pub const DEFAULT_EPOCH: u32 = 1_700_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServerError {
    #[error("authentication failed: {0:?}")]
    Unauthenticated(Verdict),
    #[error("update at {now:?} precedes stored update at {stored:?}")]
    ClockRegression { now: Duration, stored: Duration },
    #[error("vehicle is {distance_m:.1} m from light {light_id}, beyond {range_m} m")]
    OutOfRange { light_id: u16, distance_m: f64, range_m: f64 },
    #[error("unknown traffic light {0}")]
    UnknownLight(u16),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A registry slot. Pseudo ids are shared by every holder in a registry
/// row, so the verifying key index is needed to tell holders apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pseudonym {
    pub pseudo_id: u32,
    pub key_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryPath {
    Ble,
    WifiDirect,
    Lte,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    #[serde(with = "crate::controller::secs")]
    pub ble: Duration,
    #[serde(with = "crate::controller::secs")]
    pub wifi_direct: Duration,
    #[serde(with = "crate::controller::secs")]
    pub lte: Duration,
    /// Relative jitter; 0.1 draws each delay uniformly from ±10%.
    pub jitter: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { ble: BLE_LATENCY, wifi_direct: WIFI_DIRECT_LATENCY, lte: LTE_LATENCY, jitter: 0.0 }
    }
}

impl LatencyModel {
    pub fn base(&self, path: DeliveryPath) -> Duration {
        match path {
            DeliveryPath::Ble => self.ble,
            DeliveryPath::WifiDirect => self.wifi_direct,
            DeliveryPath::Lte => self.lte,
        }
    }

    pub fn sample(&self, path: DeliveryPath, rng: &mut impl Rng) -> Duration {
        let base = self.base(path);
        if self.jitter == 0.0 {
            return base;
        }
        base.mul_f64(1.0 + rng.gen_range(-self.jitter..=self.jitter))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    #[serde(with = "crate::controller::secs")]
    pub update_period: Duration,
    pub notification_radius_m: f64,
    pub beacon_range_m: f64,
    #[serde(with = "crate::controller::secs")]
    pub freshness_window: Duration,
    pub epoch: u32,
    pub latency: LatencyModel,
    pub jitter_seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            update_period: DEFAULT_UPDATE_PERIOD,
            notification_radius_m: DEFAULT_NOTIFICATION_RADIUS_M,
            beacon_range_m: DEFAULT_BEACON_RANGE_M,
            freshness_window: DEFAULT_FRESHNESS_WINDOW,
            epoch: DEFAULT_EPOCH,
            latency: LatencyModel::default(),
            jitter_seed: 0,
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        if self.update_period.is_zero() {
            return Err(ServerError::InvalidArgument("update period must be positive".into()));
        }
        if !(self.notification_radius_m > 0.0) || !(self.beacon_range_m > 0.0) {
            return Err(ServerError::InvalidArgument("radii must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.latency.jitter) {
            return Err(ServerError::InvalidArgument(format!("jitter must be in [0, 1), got {}", self.latency.jitter)));
        }
        Ok(())
    }

    pub fn staleness_bound(&self) -> Duration {
        self.update_period * STALENESS_FACTOR
    }

    pub fn wire_time(&self, now: Duration) -> u32 {
        self.epoch.wrapping_add(now.as_secs() as u32)
    }
}

/// Position report payload: latitude and longitude as f64, heading in
/// degrees as f32, all big-endian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionReport {
    pub position: GeoPoint,
    pub heading: f32,
}

impl PositionReport {
    pub const BYTES: usize = 20;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::BYTES);
        out.extend_from_slice(&self.position.lat.to_be_bytes());
        out.extend_from_slice(&self.position.lon.to_be_bytes());
        out.extend_from_slice(&self.heading.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ServerError> {
        if bytes.len() != Self::BYTES {
            return Err(ServerError::Malformed(format!(
                "position report is {} bytes, expected {}",
                bytes.len(),
                Self::BYTES
            )));
        }
        let lat = f64::from_be_bytes(bytes[0..8].try_into().unwrap());
        let lon = f64::from_be_bytes(bytes[8..16].try_into().unwrap());
        let heading = f32::from_be_bytes(bytes[16..20].try_into().unwrap());
        if !lat.is_finite() || !lon.is_finite() || !heading.is_finite() {
            return Err(ServerError::Malformed("non-finite position".into()));
        }
        Ok(Self { position: GeoPoint::new(lat, lon), heading })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistryEntry {
    pub position: GeoPoint,
    pub heading: f32,
    pub last_update: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodQuery {
    pub center: GeoPoint,
    pub radius_m: f64,
}

impl NeighborhoodQuery {
    pub fn new(center: GeoPoint, radius_m: f64) -> Result<Self, ServerError> {
        if !(radius_m > 0.0) {
            return Err(ServerError::InvalidArgument(format!("radius must be positive, got {radius_m}")));
        }
        Ok(Self { center, radius_m })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PositionRegistry {
    entries: BTreeMap<Pseudonym, RegistryEntry>,
}

impl PositionRegistry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, who: &Pseudonym) -> Option<&RegistryEntry> {
        self.entries.get(who)
    }

    pub fn insert(&mut self, who: Pseudonym, entry: RegistryEntry) -> Result<(), ServerError> {
        if let Some(stored) = self.entries.get(&who) {
            if entry.last_update < stored.last_update {
                return Err(ServerError::ClockRegression { now: entry.last_update, stored: stored.last_update });
            }
        }
        self.entries.insert(who, entry);
        Ok(())
    }

    pub fn remove(&mut self, who: &Pseudonym) -> Option<RegistryEntry> {
        self.entries.remove(who)
    }

    /// Non-stale entries within the closed ball, nearest first.
    pub fn find_nearby(&self, query: &NeighborhoodQuery, now: Duration, max_age: Duration) -> Vec<(Pseudonym, f64)> {
        let mut hits: Vec<_> = self
            .entries
            .iter()
            .filter(|(_, e)| now.saturating_sub(e.last_update) <= max_age)
            .map(|(who, e)| (*who, equirectangular_distance(query.center, e.position)))
            .filter(|(_, d)| *d <= query.radius_m)
            .collect();
        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        hits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOp {
    UpdatePosition,
    ProvisionKey,
    DispatchNotification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// Seconds since the start of the run.
    pub timestamp: f64,
    pub op: AuditOp,
    pub pseudo_id: u32,
    pub verdict: String,
}

#[derive(Debug, Clone)]
pub struct TrafficLightSite {
    pub light_id: u16,
    pub position: GeoPoint,
    key: SecretKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyDelivery {
    pub light_id: u16,
    pub recipient: Pseudonym,
    pub key: SecretKey,
    pub first_delivery: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub recipient: Pseudonym,
    #[serde(with = "crate::controller::secs")]
    pub delivery_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub offender: Pseudonym,
    pub notification: NotificationPacket,
    pub deliveries: Vec<Delivery>,
}

pub struct CoordServer {
    config: ServerConfig,
    origin: GeoOrigin,
    group_keys: Vec<SecretKey>,
    signer: KeyedSigner,
    registry: PositionRegistry,
    lights: BTreeMap<u16, TrafficLightSite>,
    provisioned: BTreeSet<(Pseudonym, u16)>,
    audit: Vec<AuditRecord>,
    jitter: ChaCha8Rng,
}

impl CoordServer {
    /// `group_keys` are the anonymity registry's column keys; the server
    /// tries each when verifying a vehicle message.
    pub fn new(
        config: ServerConfig,
        origin: GeoOrigin,
        group_keys: Vec<SecretKey>,
        signing_key: SecretKey,
    ) -> Result<Self, ServerError> {
        config.validate()?;
        if group_keys.is_empty() {
            return Err(ServerError::InvalidArgument("server needs at least one group key".into()));
        }
        Ok(Self {
            jitter: ChaCha8Rng::seed_from_u64(config.jitter_seed),
            config,
            origin,
            group_keys,
            signer: KeyedSigner::new(signing_key),
            registry: PositionRegistry::default(),
            lights: BTreeMap::new(),
            provisioned: BTreeSet::new(),
            audit: Vec::new(),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn origin(&self) -> GeoOrigin {
        self.origin
    }

    pub fn registry(&self) -> &PositionRegistry {
        &self.registry
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn audit_ndjson(&self) -> String {
        self.audit.iter().map(|r| serde_json::to_string(r).expect("audit records serialise") + "\n").collect()
    }

    pub fn register_light(&mut self, light_id: u16, position: GeoPoint, key: SecretKey) {
        self.lights.insert(light_id, TrafficLightSite { light_id, position, key });
    }

    pub fn light(&self, light_id: u16) -> Option<&TrafficLightSite> {
        self.lights.get(&light_id)
    }

    pub fn light_key(&self, light_id: u16) -> Option<&SecretKey> {
        self.lights.get(&light_id).map(|l| &l.key)
    }

    /// Server-side verification key for notifications.
    pub fn verify_notification(&self, notification: &NotificationPacket) -> bool {
        notification
            .signed_bits()
            .map(|bits| self.signer.verify(bits.as_bytes(), &notification.server_sig))
            .unwrap_or(false)
    }

    fn audit(&mut self, now: Duration, op: AuditOp, pseudo_id: u32, verdict: impl Into<String>) {
        self.audit.push(AuditRecord { timestamp: now.as_secs_f64(), op, pseudo_id, verdict: verdict.into() });
    }

    fn authenticate(&self, message: &AuthenticatedMessage, now: Duration) -> Result<Pseudonym, ServerError> {
        match mac_verify(&self.group_keys, message, self.config.wire_time(now), self.config.freshness_window) {
            Verdict::Valid { key_index } => Ok(Pseudonym { pseudo_id: message.pseudo_id, key_index }),
            other => Err(ServerError::Unauthenticated(other)),
        }
    }

    fn authenticated_report(
        &mut self,
        op: AuditOp,
        message: &AuthenticatedMessage,
        now: Duration,
    ) -> Result<(Pseudonym, PositionReport), ServerError> {
        let checked = self
            .authenticate(message, now)
            .and_then(|who| PositionReport::from_bytes(&message.payload).map(|r| (who, r)));
        if let Err(e) = &checked {
            self.audit(now, op, message.pseudo_id, verdict_label(e));
        }
        checked
    }

    /// Stores a signed position report.
    pub fn update_position(&mut self, message: &AuthenticatedMessage, now: Duration) -> Result<Pseudonym, ServerError> {
        let (who, report) = self.authenticated_report(AuditOp::UpdatePosition, message, now)?;
        let entry = RegistryEntry { position: report.position, heading: report.heading, last_update: now };
        match self.registry.insert(who, entry) {
            Ok(()) => {
                self.audit(now, AuditOp::UpdatePosition, who.pseudo_id, "accepted");
                Ok(who)
            }
            Err(e) => {
                self.audit(now, AuditOp::UpdatePosition, who.pseudo_id, verdict_label(&e));
                Err(e)
            }
        }
    }

    /// Drops a vehicle that has left the area.
    pub fn deregister(&mut self, who: &Pseudonym) {
        self.registry.remove(who);
    }

    pub fn find_nearby(&self, query: &NeighborhoodQuery, now: Duration) -> Vec<Pseudonym> {
        self.registry.find_nearby(query, now, self.config.staleness_bound()).into_iter().map(|(who, _)| who).collect()
    }

    /// Hands the light's beacon key to a vehicle whose signed position is
    /// within beacon range. Repeated requests return the same key and are
    /// only logged once.
    pub fn provision_key(
        &mut self,
        message: &AuthenticatedMessage,
        light_id: u16,
        now: Duration,
    ) -> Result<KeyDelivery, ServerError> {
        let (who, report) = self.authenticated_report(AuditOp::ProvisionKey, message, now)?;
        let Some(site) = self.lights.get(&light_id) else {
            self.audit(now, AuditOp::ProvisionKey, who.pseudo_id, "unknown_light");
            return Err(ServerError::UnknownLight(light_id));
        };
        let distance_m = equirectangular_distance(report.position, site.position);
        if distance_m > self.config.beacon_range_m {
            let err = ServerError::OutOfRange { light_id, distance_m, range_m: self.config.beacon_range_m };
            self.audit(now, AuditOp::ProvisionKey, who.pseudo_id, verdict_label(&err));
            return Err(err);
        }
        let key = site.key.clone();
        let first_delivery = self.provisioned.insert((who, light_id));
        if first_delivery {
            self.audit(now, AuditOp::ProvisionKey, who.pseudo_id, format!("delivered light {light_id}"));
        }
        Ok(KeyDelivery { light_id, recipient: who, key, first_delivery })
    }

    fn event_message(event: &EventPacket) -> Result<AuthenticatedMessage, ServerError> {
        Ok(AuthenticatedMessage {
            payload: event.payload()?,
            pseudo_id: event.pseudo_id,
            timestamp: event.timestamp,
            mac: event.mac,
        })
    }

    fn event_position(&self, event: &EventPacket) -> GeoPoint {
        let (lat, lon) = dequantize_position(event.lat_q, event.lon_q, self.origin);
        GeoPoint::new(lat, lon)
    }

    fn nearest_light(&self, position: GeoPoint) -> u16 {
        self.lights
            .values()
            .map(|l| (l.light_id, equirectangular_distance(position, l.position)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map_or(0, |(id, _)| id)
    }

    /// Verifies a reported red-light run and fans a signed notification out
    /// over the server path to everyone near it except the reporter.
    pub fn dispatch_notification(
        &mut self,
        event: &EventPacket,
        event_type: EventType,
        now: Duration,
    ) -> Result<Dispatch, ServerError> {
        let offender = match Self::event_message(event).and_then(|m| self.authenticate(&m, now)) {
            Ok(who) => who,
            Err(e) => {
                self.audit(
                    now,
                    AuditOp::DispatchNotification,
                    event.pseudo_id,
                    format!("dropped: {}", verdict_label(&e)),
                );
                return Err(e);
            }
        };
        let position = self.event_position(event);
        let mut notification = NotificationPacket {
            light_id: self.nearest_light(position),
            event_type,
            lat_q: event.lat_q,
            lon_q: event.lon_q,
            speed: event.speed,
            direction: event.direction,
            plate: event.plate,
            timestamp: self.config.wire_time(now),
            server_sig: [0; NOTIFICATION_SIG_BYTES],
        };
        let signed = notification.signed_bits()?;
        self.signer.sign(signed.as_bytes(), &mut notification.server_sig);
        debug_assert!(encode_notification(&notification).is_ok());

        let deliveries = self.fan_out(offender, position, DeliveryPath::Lte, now);
        self.audit(
            now,
            AuditOp::DispatchNotification,
            offender.pseudo_id,
            format!("dispatched to {}", deliveries.len()),
        );
        Ok(Dispatch { offender, notification, deliveries })
    }

    /// Recipients of a direct Wi-Fi warning broadcast from `position`. The
    /// registry stands in for radio range; nothing is signed or logged.
    pub fn direct_warning(&mut self, sender: Pseudonym, position: GeoPoint, now: Duration) -> Vec<Delivery> {
        self.fan_out(sender, position, DeliveryPath::WifiDirect, now)
    }

    fn fan_out(&mut self, sender: Pseudonym, position: GeoPoint, path: DeliveryPath, now: Duration) -> Vec<Delivery> {
        let query = NeighborhoodQuery { center: position, radius_m: self.config.notification_radius_m };
        let recipients = self.find_nearby(&query, now);
        recipients
            .into_iter()
            .filter(|who| *who != sender)
            .map(|recipient| Delivery {
                recipient,
                delivery_time: now + self.config.latency.sample(path, &mut self.jitter),
            })
            .collect()
    }
}

fn verdict_label(error: &ServerError) -> String {
    match error {
        ServerError::Unauthenticated(Verdict::Stale) => "stale".into(),
        ServerError::Unauthenticated(_) => "bad_mac".into(),
        ServerError::ClockRegression { .. } => "clock_regression".into(),
        ServerError::OutOfRange { .. } => "out_of_range".into(),
        ServerError::UnknownLight(_) => "unknown_light".into(),
        _ => "malformed".into(),
    }
}
