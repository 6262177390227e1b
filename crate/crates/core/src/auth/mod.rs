//! Anonymous authentication: pseudo-ID groups crossed with key groups,
//! truncated keyed-hash tags with a freshness window, and a group
//! signature whose signer only the group manager can reveal.
//!
//! The keyed hash is HMAC-SHA-256 throughout; tags are its leftmost bytes.

mod group;
mod keys;
mod mac;
mod registry;

pub use group::{
    authority_open, group_sign, group_verify, EscrowLog, EscrowRecord, GroupManager, GroupMember, GroupPublicKey,
    GroupSignature,
};
pub use keys::{KeyedSigner, SecretKey, TagSigner};
pub use mac::{mac_sign, mac_verify, AuthenticatedMessage, Verdict, DEFAULT_FRESHNESS_WINDOW, MAC_BYTES};
pub use registry::{
    build_partial_registry, build_registry, deanonymize, AnonymityRegistry, Credentials, Identity, RegistryListing,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("malformed registry text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
