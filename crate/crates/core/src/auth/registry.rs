use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::keys::SecretKey;
use super::AuthError;

/// Real identity of a vehicle, known only to the authority.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Identity(pub String);

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Identity {
    fn from(s: &str) -> Self {
        Identity(s.to_string())
    }
}

/// What one vehicle holds: the pseudo-ID of its row and the key of its column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credentials {
    pub pseudo_id: u32,
    pub key_index: usize,
    pub key: SecretKey,
}

/// `k * k` grid of vehicles. Every row shares one pseudo-ID and every
/// column shares one secret key, so a (pseudo-ID, key) pair names at most
/// one vehicle while each of them alone is shared by `k`.
#[derive(Debug, Clone)]
pub struct AnonymityRegistry {
    k: usize,
    pseudo_ids: Vec<u32>,
    keys: Vec<SecretKey>,
    cells: Vec<Option<Identity>>,
    index: HashMap<Identity, (usize, usize)>,
}

pub fn build_registry(identities: Vec<Identity>, k: usize, seed: u64) -> Result<AnonymityRegistry, AuthError> {
    if identities.len() != k * k {
        return Err(AuthError::InvalidArgument(format!(
            "a k={k} registry needs exactly {} identities, got {}",
            k * k,
            identities.len()
        )));
    }
    build_partial_registry(identities, k, seed)
}

/// Like [`build_registry`] but accepts fewer than `k * k` identities,
/// leaving the remaining cells unassigned.
pub fn build_partial_registry(identities: Vec<Identity>, k: usize, seed: u64) -> Result<AnonymityRegistry, AuthError> {
    if k < 2 {
        return Err(AuthError::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if identities.len() > k * k {
        return Err(AuthError::InvalidArgument(format!("{} identities do not fit a {k}x{k} grid", identities.len())));
    }
    let unique: HashSet<_> = identities.iter().collect();
    if unique.len() != identities.len() {
        return Err(AuthError::InvalidArgument("identities must be distinct".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pseudo_ids = Vec::with_capacity(k);
    while pseudo_ids.len() < k {
        let candidate = rng.next_u32();
        if !pseudo_ids.contains(&candidate) {
            pseudo_ids.push(candidate);
        }
    }
    let keys: Vec<_> = (0..k).map(|_| SecretKey::random(&mut rng)).collect();

    let mut slots: Vec<usize> = (0..k * k).collect();
    slots.shuffle(&mut rng);
    let mut cells = vec![None; k * k];
    let mut index = HashMap::with_capacity(identities.len());
    for (identity, slot) in identities.into_iter().zip(slots) {
        index.insert(identity.clone(), (slot / k, slot % k));
        cells[slot] = Some(identity);
    }
    Ok(AnonymityRegistry { k, pseudo_ids, keys, cells, index })
}

/// Authority-side reversal: the identity at (pseudo-ID row, key column).
pub fn deanonymize(registry: &AnonymityRegistry, pseudo_id: u32, key_index: usize) -> Result<&Identity, AuthError> {
    let row = registry.row_of(pseudo_id).ok_or_else(|| AuthError::NotFound(format!("pseudo-ID {pseudo_id:#010x}")))?;
    if key_index >= registry.k {
        return Err(AuthError::NotFound(format!("key index {key_index}")));
    }
    registry
        .cell(row, key_index)
        .ok_or_else(|| AuthError::NotFound(format!("no vehicle at ({pseudo_id:#010x}, key {key_index})")))
}

impl AnonymityRegistry {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pseudo_ids(&self) -> &[u32] {
        &self.pseudo_ids
    }

    pub fn keys(&self) -> &[SecretKey] {
        &self.keys
    }

    pub fn row_of(&self, pseudo_id: u32) -> Option<usize> {
        self.pseudo_ids.iter().position(|&p| p == pseudo_id)
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&Identity> {
        if row >= self.k || col >= self.k {
            return None;
        }
        self.cells[row * self.k + col].as_ref()
    }

    pub fn position_of(&self, identity: &Identity) -> Option<(usize, usize)> {
        self.index.get(identity).copied()
    }

    pub fn credentials(&self, identity: &Identity) -> Option<Credentials> {
        let (row, col) = self.position_of(identity)?;
        Some(self.credentials_at(row, col))
    }

    pub fn credentials_at(&self, row: usize, col: usize) -> Credentials {
        Credentials { pseudo_id: self.pseudo_ids[row], key_index: col, key: self.keys[col].clone() }
    }

    /// Every identity holding the given pseudo-ID.
    pub fn holders_of(&self, pseudo_id: u32) -> Vec<&Identity> {
        match self.row_of(pseudo_id) {
            Some(row) => (0..self.k).filter_map(|col| self.cell(row, col)).collect(),
            None => Vec::new(),
        }
    }

    /// Every identity holding the given key.
    pub fn key_group(&self, key_index: usize) -> Vec<&Identity> {
        (0..self.k).filter_map(|row| self.cell(row, key_index)).collect()
    }

    /// Deterministic text form: `k`, the row-major cells (`-` when empty),
    /// the pseudo-IDs, then the key fingerprints.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "k {}", self.k);
        for row in 0..self.k {
            for col in 0..self.k {
                let id = self.cell(row, col).map_or("-", |i| i.0.as_str());
                let _ = writeln!(out, "cell {row} {col} {id}");
            }
        }
        for (row, p) in self.pseudo_ids.iter().enumerate() {
            let _ = writeln!(out, "pseudo {row} {p:08x}");
        }
        for (col, key) in self.keys.iter().enumerate() {
            let _ = writeln!(out, "key {col} {}", key.fingerprint());
        }
        out
    }

    /// Reads back a listing written by [`Self::to_text`]. Keys themselves
    /// are never written, only their fingerprints.
    pub fn parse_text(text: &str) -> Result<RegistryListing, AuthError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, reason: &str| AuthError::Parse { line: line + 1, reason: reason.to_string() };
        let (n, first) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        let k: usize = first
            .strip_prefix("k ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| err(n, "expected `k <size>`"))?;
        let mut listing = RegistryListing { k, cells: Vec::new(), pseudo_ids: Vec::new(), fingerprints: Vec::new() };
        for (n, line) in lines {
            let parts: Vec<_> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["cell", _, _, id] => listing.cells.push((*id != "-").then(|| Identity(id.to_string()))),
                ["pseudo", _, hex] => {
                    listing.pseudo_ids.push(u32::from_str_radix(hex, 16).map_err(|_| err(n, "bad pseudo-ID"))?)
                }
                ["key", _, fp] => listing.fingerprints.push(fp.to_string()),
                [] => {}
                _ => return Err(err(n, "unrecognised line")),
            }
        }
        if listing.cells.len() != k * k || listing.pseudo_ids.len() != k || listing.fingerprints.len() != k {
            return Err(err(text.lines().count(), "wrong number of entries for k"));
        }
        Ok(listing)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryListing {
    pub k: usize,
    pub cells: Vec<Option<Identity>>,
    pub pseudo_ids: Vec<u32>,
    pub fingerprints: Vec<String>,
}
