//! Group signature reduced to its functional contract: the manager issues
//! each member a distinct signing key, anyone holding the group's public
//! record can check a signature without learning the signer, and only the
//! manager's escrow log links a signature back to a member.

use std::sync::RwLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::keys::SecretKey;
use super::registry::Identity;
use super::AuthError;

pub const GROUP_SIG_BYTES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSignature {
    pub group_id: u32,
    pub tag: [u8; GROUP_SIG_BYTES],
}

#[derive(Debug, Clone)]
pub struct GroupMember {
    group_id: u32,
    index: usize,
    key: SecretKey,
}

impl GroupMember {
    pub fn group_id(&self) -> u32 {
        self.group_id
    }
}

/// What verifiers hold for one group.
#[derive(Debug, Clone)]
pub struct GroupPublicKey {
    pub group_id: u32,
    member_keys: Vec<SecretKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscrowRecord {
    pub group_id: u32,
    pub member_index: usize,
    pub tag: [u8; GROUP_SIG_BYTES],
}

/// Append-only record of issued signatures, readable by the authority.
#[derive(Debug, Default)]
pub struct EscrowLog {
    records: RwLock<Vec<EscrowRecord>>,
}

impl EscrowLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn append(&self, record: EscrowRecord) {
        self.records.write().unwrap_or_else(|e| e.into_inner()).push(record);
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn find(&self, sig: &GroupSignature) -> Option<usize> {
        self.records
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .find(|r| r.group_id == sig.group_id && r.tag == sig.tag)
            .map(|r| r.member_index)
    }
}

#[derive(Debug)]
pub struct GroupManager {
    group_id: u32,
    members: Vec<(Identity, SecretKey)>,
    rng: ChaCha20Rng,
    escrow: EscrowLog,
}

impl GroupManager {
    pub fn new(group_id: u32, seed: u64) -> Self {
        Self { group_id, members: Vec::new(), rng: ChaCha20Rng::seed_from_u64(seed), escrow: EscrowLog::new() }
    }

    pub fn issue(&mut self, identity: Identity) -> GroupMember {
        let key = SecretKey::random(&mut self.rng);
        self.members.push((identity, key.clone()));
        GroupMember { group_id: self.group_id, index: self.members.len() - 1, key }
    }

    pub fn public_key(&self) -> GroupPublicKey {
        GroupPublicKey { group_id: self.group_id, member_keys: self.members.iter().map(|(_, k)| k.clone()).collect() }
    }

    pub fn escrow(&self) -> &EscrowLog {
        &self.escrow
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }
}

pub fn group_sign(member: &GroupMember, payload: &[u8], escrow: &EscrowLog) -> GroupSignature {
    let mut tag = [0u8; GROUP_SIG_BYTES];
    member.key.tag_into(&[&member.group_id.to_be_bytes(), payload], &mut tag);
    escrow.append(EscrowRecord { group_id: member.group_id, member_index: member.index, tag });
    GroupSignature { group_id: member.group_id, tag }
}

pub fn group_verify(public: &GroupPublicKey, payload: &[u8], sig: &GroupSignature) -> bool {
    sig.group_id == public.group_id
        && public.member_keys.iter().any(|key| key.verify_parts(&[&sig.group_id.to_be_bytes(), payload], &sig.tag))
}

/// Reveals the member behind a signature the manager's log has seen.
pub fn authority_open<'a>(
    manager: &'a GroupManager,
    payload: &[u8],
    sig: &GroupSignature,
) -> Result<&'a Identity, AuthError> {
    let not_found = || AuthError::NotFound("signature not issued by this group".into());
    if sig.group_id != manager.group_id {
        return Err(not_found());
    }
    let index = manager.escrow.find(sig).ok_or_else(not_found)?;
    let (identity, key) = manager.members.get(index).ok_or_else(not_found)?;
    if !key.verify_parts(&[&sig.group_id.to_be_bytes(), payload], &sig.tag) {
        return Err(not_found());
    }
    Ok(identity)
}
