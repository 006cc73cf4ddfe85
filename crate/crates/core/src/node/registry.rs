use std::collections::HashMap;

use crate::codec::{ContentFormat, ObserveMode};
use crate::tokens::path_matches;

/// Observation lifetime when a request carries no max_age option.
pub const DEFAULT_MAX_AGE_SECS: u32 = 60;

/// Audit observations on `/audit<path>` see requests to `<path>`.
pub const AUDIT_PREFIX: &str = "/audit";

/// Absolute expiry for an observation registered at `now_ms`. A max_age of
/// zero never expires; an absent one means the default.
pub fn expiry(now_ms: u64, max_age: Option<u32>) -> Option<u64> {
    match max_age.unwrap_or(DEFAULT_MAX_AGE_SECS) {
        0 => None,
        secs => Some(now_ms + u64::from(secs) * 1000),
    }
}

/// A live subscription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationEntry {
    /// Router identity the events are pushed to.
    pub identity: Vec<u8>,
    pub path_pattern: String,
    pub mode: ObserveMode,
    /// Milliseconds since the epoch; `None` never expires.
    pub expires_at: Option<u64>,
    pub format: ContentFormat,
}

impl ObservationEntry {
    pub fn is_live(&self, now_ms: u64) -> bool {
        self.expires_at.is_none_or(|t| now_ms < t)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("identity already registered")]
pub struct DuplicateIdentity;

#[derive(Debug, Default)]
pub struct ObservationRegistry {
    entries: HashMap<Vec<u8>, ObservationEntry>,
}

impl ObservationRegistry {
    pub fn register(&mut self, entry: ObservationEntry) -> Result<(), DuplicateIdentity> {
        if self.entries.contains_key(&entry.identity) {
            return Err(DuplicateIdentity);
        }
        self.entries.insert(entry.identity.clone(), entry);
        Ok(())
    }

    pub fn contains(&self, identity: &[u8]) -> bool {
        self.entries.contains_key(identity)
    }

    pub fn get(&self, identity: &[u8]) -> Option<&ObservationEntry> {
        self.entries.get(identity)
    }

    pub fn remove(&mut self, identity: &[u8]) -> Option<ObservationEntry> {
        self.entries.remove(identity)
    }

    /// Removes every entry whose expiry is at or before `now_ms` and returns
    /// their identities.
    pub fn expire(&mut self, now_ms: u64) -> Vec<Vec<u8>> {
        let dead: Vec<Vec<u8>> =
            self.entries.values().filter(|e| !e.is_live(now_ms)).map(|e| e.identity.clone()).collect();
        for id in &dead {
            self.entries.remove(id);
        }
        dead
    }

    /// Identities of live entries in `mode` whose pattern covers `path`.
    /// Audit entries may also name the audited path under [`AUDIT_PREFIX`].
    pub fn matching(&self, path: &str, mode: ObserveMode, now_ms: u64) -> Vec<Vec<u8>> {
        self.entries
            .values()
            .filter(|e| e.mode == mode && e.is_live(now_ms) && covers(e, path))
            .map(|e| e.identity.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn covers(e: &ObservationEntry, path: &str) -> bool {
    if path_matches(&e.path_pattern, path) {
        return true;
    }
    e.mode == ObserveMode::Audit
        && e.path_pattern.strip_prefix(AUDIT_PREFIX).is_some_and(|rest| rest.starts_with('/') && path_matches(rest, path))
}
