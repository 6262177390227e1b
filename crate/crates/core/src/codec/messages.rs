//! Bit-exact layouts of the three messages exchanged by the system.
//!
//! | message      | fields                                                         | bits |
//! |--------------|----------------------------------------------------------------|------|
//! | beacon       | id 16, bearing 9, state 3, reserved 4, auth tag 176            | 208  |
//! | event        | pseudo id 32, time 32, lat 16, lon 16, speed 16, dir 16, plate 56, mac 64 | 248 |
//! | notification | light id 16, type 8, lat 16, lon 16, speed 16, dir 16, plate 56, time 32, sig 96 | 272 |
//!
//! All fields are packed big-endian in the order listed.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::bits::BitString;
use super::CodecError;

pub const BEACON_BITS: usize = 208;
pub const EVENT_BITS: usize = 248;
pub const NOTIFICATION_BITS: usize = 272;

pub const BEACON_TAG_BYTES: usize = 22;
pub const EVENT_MAC_BYTES: usize = 8;
pub const NOTIFICATION_SIG_BYTES: usize = 12;

/// Bits covered by the authentication field of each message.
pub const BEACON_SIGNED_BITS: usize = BEACON_BITS - BEACON_TAG_BYTES * 8;
pub const EVENT_SIGNED_BITS: usize = EVENT_BITS - EVENT_MAC_BYTES * 8;
pub const NOTIFICATION_SIGNED_BITS: usize = NOTIFICATION_BITS - NOTIFICATION_SIG_BYTES * 8;

const MAX_BEARING: u16 = 360;
const MAX_DIRECTION: u16 = 36_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightState {
    Green = 0,
    Orange = 1,
    Red = 2,
    Off = 3,
}

impl LightState {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Green),
            1 => Some(Self::Orange),
            2 => Some(Self::Red),
            3 => Some(Self::Off),
            _ => None,
        }
    }

    /// Orange and red are the states that make a vehicle start estimating.
    pub fn is_stop_aspect(self) -> bool {
        matches!(self, Self::Orange | Self::Red)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Prediction = 1,
    Detection = 2,
}

impl EventType {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::Prediction),
            2 => Some(Self::Detection),
            _ => None,
        }
    }
}

/// Seven ASCII characters, right-padded with spaces.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Plate([u8; 7]);

impl Plate {
    pub fn new(text: &str) -> Result<Self, CodecError> {
        if !text.is_ascii() || text.len() > 7 {
            return Err(CodecError::InvalidField(format!("plate {text:?} must be at most 7 ASCII characters")));
        }
        let mut bytes = [b' '; 7];
        bytes[..text.len()].copy_from_slice(text.as_bytes());
        Ok(Self(bytes))
    }

    pub fn from_bytes(bytes: [u8; 7]) -> Result<Self, CodecError> {
        if !bytes.is_ascii() {
            return Err(CodecError::InvalidField("plate contains non-ASCII bytes".into()));
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; 7] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        // ASCII by construction
        std::str::from_utf8(&self.0).unwrap_or_default()
    }
}

impl fmt::Debug for Plate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Plate({:?})", self.as_str())
    }
}

impl fmt::Display for Plate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str().trim_end())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Beacon {
    pub light_id: u16,
    /// Compass bearing in whole degrees, 0 to 360 inclusive.
    pub bearing: u16,
    pub state: LightState,
    pub auth_tag: [u8; BEACON_TAG_BYTES],
}

impl Beacon {
    /// The 32-bit header that the auth tag covers.
    pub fn signed_bits(&self) -> Result<BitString, CodecError> {
        check_bearing(self.bearing)?;
        let mut bits = BitString::new();
        bits.push(u64::from(self.light_id), 16);
        bits.push(u64::from(self.bearing), 9);
        bits.push(self.state as u64, 3);
        bits.push(0, 4);
        Ok(bits)
    }
}

pub fn encode_beacon(beacon: &Beacon) -> Result<BitString, CodecError> {
    let mut bits = beacon.signed_bits()?;
    bits.push_bytes(&beacon.auth_tag);
    debug_assert_eq!(bits.len(), BEACON_BITS);
    Ok(bits)
}

pub fn decode_beacon(bits: &BitString) -> Result<Beacon, CodecError> {
    check_length(bits, BEACON_BITS)?;
    let mut r = bits.reader();
    let light_id = r.take(16) as u16;
    let bearing = r.take(9) as u16;
    check_bearing(bearing)?;
    let state_code = r.take(3) as u8;
    let state = LightState::from_code(state_code)
        .ok_or_else(|| CodecError::InvalidField(format!("unknown light state {state_code}")))?;
    let reserved = r.take(4);
    if reserved != 0 {
        return Err(CodecError::Reserved(reserved));
    }
    let auth_tag = r.take_bytes::<BEACON_TAG_BYTES>();
    Ok(Beacon { light_id, bearing, state, auth_tag })
}

/// Vehicle-originated report of a predicted or detected red-light run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventPacket {
    pub pseudo_id: u32,
    /// Seconds.
    pub timestamp: u32,
    pub lat_q: i16,
    pub lon_q: i16,
    /// km/h times 10.
    pub speed: u16,
    /// Degrees times 100.
    pub direction: u16,
    pub plate: Plate,
    pub mac: [u8; EVENT_MAC_BYTES],
}

impl EventPacket {
    pub fn signed_bits(&self) -> Result<BitString, CodecError> {
        check_direction(self.direction)?;
        let mut bits = BitString::new();
        bits.push(u64::from(self.pseudo_id), 32);
        bits.push(u64::from(self.timestamp), 32);
        bits.push(u64::from(self.lat_q as u16), 16);
        bits.push(u64::from(self.lon_q as u16), 16);
        bits.push(u64::from(self.speed), 16);
        bits.push(u64::from(self.direction), 16);
        bits.push_bytes(self.plate.as_bytes());
        Ok(bits)
    }

    /// Everything after the pseudo id and timestamp, up to the MAC.
    pub fn payload(&self) -> Result<Vec<u8>, CodecError> {
        Ok(self.signed_bits()?.as_bytes()[8..].to_vec())
    }
}

pub fn encode_event(event: &EventPacket) -> Result<BitString, CodecError> {
    let mut bits = event.signed_bits()?;
    bits.push_bytes(&event.mac);
    debug_assert_eq!(bits.len(), EVENT_BITS);
    Ok(bits)
}

pub fn decode_event(bits: &BitString) -> Result<EventPacket, CodecError> {
    check_length(bits, EVENT_BITS)?;
    let mut r = bits.reader();
    let pseudo_id = r.take(32) as u32;
    let timestamp = r.take(32) as u32;
    let lat_q = r.take(16) as u16 as i16;
    let lon_q = r.take(16) as u16 as i16;
    let speed = r.take(16) as u16;
    let direction = r.take(16) as u16;
    check_direction(direction)?;
    let plate = Plate::from_bytes(r.take_bytes::<7>())?;
    let mac = r.take_bytes::<EVENT_MAC_BYTES>();
    Ok(EventPacket { pseudo_id, timestamp, lat_q, lon_q, speed, direction, plate, mac })
}

/// Server-originated warning pushed to vehicles near the offence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotificationPacket {
    pub light_id: u16,
    pub event_type: EventType,
    pub lat_q: i16,
    pub lon_q: i16,
    pub speed: u16,
    pub direction: u16,
    pub plate: Plate,
    pub timestamp: u32,
    pub server_sig: [u8; NOTIFICATION_SIG_BYTES],
}

impl NotificationPacket {
    pub fn signed_bits(&self) -> Result<BitString, CodecError> {
        check_direction(self.direction)?;
        let mut bits = BitString::new();
        bits.push(u64::from(self.light_id), 16);
        bits.push(self.event_type as u64, 8);
        bits.push(u64::from(self.lat_q as u16), 16);
        bits.push(u64::from(self.lon_q as u16), 16);
        bits.push(u64::from(self.speed), 16);
        bits.push(u64::from(self.direction), 16);
        bits.push_bytes(self.plate.as_bytes());
        bits.push(u64::from(self.timestamp), 32);
        Ok(bits)
    }
}

pub fn encode_notification(notification: &NotificationPacket) -> Result<BitString, CodecError> {
    let mut bits = notification.signed_bits()?;
    bits.push_bytes(&notification.server_sig);
    debug_assert_eq!(bits.len(), NOTIFICATION_BITS);
    Ok(bits)
}

pub fn decode_notification(bits: &BitString) -> Result<NotificationPacket, CodecError> {
    check_length(bits, NOTIFICATION_BITS)?;
    let mut r = bits.reader();
    let light_id = r.take(16) as u16;
    let type_code = r.take(8) as u8;
    let event_type = EventType::from_code(type_code)
        .ok_or_else(|| CodecError::InvalidField(format!("unknown event type {type_code}")))?;
    let lat_q = r.take(16) as u16 as i16;
    let lon_q = r.take(16) as u16 as i16;
    let speed = r.take(16) as u16;
    let direction = r.take(16) as u16;
    check_direction(direction)?;
    let plate = Plate::from_bytes(r.take_bytes::<7>())?;
    let timestamp = r.take(32) as u32;
    let server_sig = r.take_bytes::<NOTIFICATION_SIG_BYTES>();
    Ok(NotificationPacket { light_id, event_type, lat_q, lon_q, speed, direction, plate, timestamp, server_sig })
}

fn check_length(bits: &BitString, expected: usize) -> Result<(), CodecError> {
    if bits.len() != expected {
        return Err(CodecError::Length { expected, actual: bits.len() });
    }
    Ok(())
}

fn check_bearing(bearing: u16) -> Result<(), CodecError> {
    if bearing > MAX_BEARING {
        return Err(CodecError::InvalidField(format!("bearing {bearing} exceeds 360")));
    }
    Ok(())
}

fn check_direction(direction: u16) -> Result<(), CodecError> {
    if direction > MAX_DIRECTION {
        return Err(CodecError::InvalidField(format!("direction {direction} exceeds 36000")));
    }
    Ok(())
}

/// Canonical instances used for the golden hex fixtures.
pub mod canonical {
    use super::*;

    pub fn beacon() -> Beacon {
        let mut auth_tag = [0u8; BEACON_TAG_BYTES];
        for (i, b) in auth_tag.iter_mut().enumerate() {
            *b = 0xA0 | i as u8;
        }
        Beacon { light_id: 7, bearing: 90, state: LightState::Red, auth_tag }
    }

    pub fn event() -> EventPacket {
        EventPacket {
            pseudo_id: 0xDEAD_BEEF,
            timestamp: 1_700_000_000,
            lat_q: 100,
            lon_q: -250,
            speed: 523,
            direction: 9_000,
            plate: Plate::new("AB123CD").expect("valid plate"),
            mac: [0x01, 0x23, 0x45, 0x67, 0x89, 0xAB, 0xCD, 0xEF],
        }
    }

    pub fn notification() -> NotificationPacket {
        NotificationPacket {
            light_id: 7,
            event_type: EventType::Detection,
            lat_q: 100,
            lon_q: -250,
            speed: 523,
            direction: 9_000,
            plate: Plate::new("AB123CD").expect("valid plate"),
            timestamp: 1_700_000_001,
            server_sig: [0x5A; NOTIFICATION_SIG_BYTES],
        }
    }

    /// `(name, hex)` for each canonical message.
    pub fn hex_dumps() -> Vec<(&'static str, String)> {
        vec![
            ("beacon", encode_beacon(&beacon()).expect("canonical beacon").to_hex()),
            ("event", encode_event(&event()).expect("canonical event").to_hex()),
            ("notification", encode_notification(&notification()).expect("canonical notification").to_hex()),
        ]
    }
}
