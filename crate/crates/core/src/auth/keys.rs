use std::fmt;

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::{Digest, Sha256};

type HmacSha256 = Hmac<Sha256>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SecretKey([u8; 32]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    /// Derives a labelled subkey; used to give every traffic light and
    /// the server their own key from one scenario master.
    pub fn derive(&self, label: &[u8]) -> SecretKey {
        let mut out = [0u8; 32];
        self.tag_into(&[b"derive:".as_slice(), label], &mut out);
        SecretKey(out)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// First 8 bytes of SHA-256 of the key, hex encoded. Safe to publish.
    pub fn fingerprint(&self) -> String {
        hex::encode(&Sha256::digest(self.0)[..8])
    }

    fn mac(&self) -> HmacSha256 {
        <HmacSha256 as Mac>::new_from_slice(&self.0).expect("HMAC accepts any key length")
    }

    /// HMAC over the concatenation of `parts`, truncated to `out.len()` bytes.
    pub(crate) fn tag_into(&self, parts: &[&[u8]], out: &mut [u8]) {
        debug_assert!(out.len() <= 32);
        let mut mac = self.mac();
        for part in parts {
            mac.update(part);
        }
        let full = mac.finalize().into_bytes();
        out.copy_from_slice(&full[..out.len()]);
    }

    pub(crate) fn verify_parts(&self, parts: &[&[u8]], tag: &[u8]) -> bool {
        let mut mac = self.mac();
        for part in parts {
            mac.update(part);
        }
        mac.verify_truncated_left(tag).is_ok()
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({})", self.fingerprint())
    }
}

/// Produces and checks fixed-width authentication tags.
///
/// Stands in for the certificate-based signatures used by traffic lights
/// and the server.
pub trait TagSigner {
    fn sign(&self, message: &[u8], tag: &mut [u8]);
    fn verify(&self, message: &[u8], tag: &[u8]) -> bool;
}

#[derive(Debug, Clone)]
pub struct KeyedSigner {
    key: SecretKey,
}

impl KeyedSigner {
    pub fn new(key: SecretKey) -> Self {
        Self { key }
    }
}

impl TagSigner for KeyedSigner {
    fn sign(&self, message: &[u8], tag: &mut [u8]) {
        self.key.tag_into(&[message], tag);
    }

    fn verify(&self, message: &[u8], tag: &[u8]) -> bool {
        !tag.is_empty() && self.key.verify_parts(&[message], tag)
    }
}
