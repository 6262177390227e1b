use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::keys::SecretKey;
use super::registry::Credentials;

pub const MAC_BYTES: usize = 8;
pub const DEFAULT_FRESHNESS_WINDOW: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthenticatedMessage {
    pub payload: Vec<u8>,
    pub pseudo_id: u32,
    /// Seconds.
    pub timestamp: u32,
    pub mac: [u8; MAC_BYTES],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The key at `key_index` in the verifier's list reproduced the tag.
    Valid {
        key_index: usize,
    },
    BadMac,
    Stale,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid { .. })
    }
}

/// Tags `pseudo_id || timestamp || payload` with the sender's group key.
pub fn mac_sign(credentials: &Credentials, payload: &[u8], timestamp: u32) -> AuthenticatedMessage {
    let mut mac = [0u8; MAC_BYTES];
    credentials.key.tag_into(&[&credentials.pseudo_id.to_be_bytes(), &timestamp.to_be_bytes(), payload], &mut mac);
    AuthenticatedMessage { payload: payload.to_vec(), pseudo_id: credentials.pseudo_id, timestamp, mac }
}

/// Freshness is checked before the tag.
pub fn mac_verify(keys: &[SecretKey], message: &AuthenticatedMessage, now: u32, window: Duration) -> Verdict {
    if u64::from(now.abs_diff(message.timestamp)) > window.as_secs() {
        return Verdict::Stale;
    }
    let pseudo = message.pseudo_id.to_be_bytes();
    let stamp = message.timestamp.to_be_bytes();
    keys.iter()
        .position(|key| key.verify_parts(&[&pseudo, &stamp, &message.payload], &message.mac))
        .map_or(Verdict::BadMac, |key_index| Verdict::Valid { key_index })
}
