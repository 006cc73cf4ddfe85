//! The arbiter: keeps the grants a manager has set up and mints scoped
//! tokens for the nodes those grants name.
//!
//! Endpoints:
//!
//! - `POST /token` with `{"target": .., "method": .., "path": ..}`. No token
//!   needed; the requester is identified by its transport key, which must be
//!   registered with [`Arbiter::register_client`].
//! - `POST /grant` and `DELETE /grant` with a [`PermissionGrant`] body. Only
//!   the manager token is accepted.
//! - `GET /cat` lists the grants.

use std::collections::HashMap;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};

use crate::codec::{Code, ContentFormat, ObserveMode};
use crate::node::{Events, Item, Reply, Service, ServiceError, ServiceRequest};
use crate::tokens::{path_matches, Macaroon, TokenError};
use crate::transport::PublicKey;

pub const TOKEN_PATH: &str = "/token";
pub const GRANT_PATH: &str = "/grant";

pub const REL_GRANTEE: &str = "urn:X-zest:rels:grantee";
pub const REL_TARGET: &str = "urn:X-zest:rels:target";
pub const REL_METHOD: &str = "urn:X-zest:rels:method";
pub const REL_PATH: &str = "urn:X-zest:rels:path";
pub const REL_MAY_OBSERVE: &str = "urn:X-zest:rels:mayObserve";

/// Permission for `grantee` to obtain tokens for `method` on paths under
/// `path` at `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionGrant {
    pub grantee: String,
    pub target: String,
    pub method: String,
    pub path: String,
    /// Recorded and listed; minting does not depend on it.
    #[serde(default)]
    pub may_observe: bool,
}

impl PermissionGrant {
    pub fn new(grantee: &str, target: &str, method: Code, path: &str) -> PermissionGrant {
        PermissionGrant {
            grantee: grantee.into(),
            target: target.into(),
            method: method.name().into(),
            path: path.into(),
            may_observe: false,
        }
    }

    pub fn observable(mut self) -> PermissionGrant {
        self.may_observe = true;
        self
    }

    fn same_scope(&self, other: &PermissionGrant) -> bool {
        self.grantee == other.grantee && self.target == other.target && self.method == other.method && self.path == other.path
    }

    pub fn covers(&self, grantee: &str, target: &str, method: Code, path: &str) -> bool {
        self.grantee == grantee && self.target == target && self.method == method.name() && path_matches(&self.path, path)
    }

    fn to_item(&self) -> Item {
        Item::new(format!("zest://{}{}", self.target, self.path))
            .with(REL_GRANTEE, &self.grantee)
            .with(REL_TARGET, &self.target)
            .with(REL_METHOD, &self.method)
            .with(REL_PATH, &self.path)
            .with(REL_MAY_OBSERVE, self.may_observe.to_string())
    }

    /// Inverse of the catalogue item.
    pub fn from_item(item: &Item) -> Option<PermissionGrant> {
        Some(PermissionGrant {
            grantee: item.get(REL_GRANTEE)?.into(),
            target: item.get(REL_TARGET)?.into(),
            method: item.get(REL_METHOD)?.into(),
            path: item.get(REL_PATH)?.into(),
            may_observe: item.get(REL_MAY_OBSERVE)? == "true",
        })
    }
}

/// Body of a `/token` request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequest {
    pub target: String,
    pub method: String,
    pub path: String,
}

impl TokenRequest {
    pub fn new(target: &str, method: Code, path: &str) -> TokenRequest {
        TokenRequest { target: target.into(), method: method.name().into(), path: path.into() }
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("token request serializes")
    }
}

fn valid_path(p: &str) -> bool {
    (p == "*" || p.starts_with('/')) && !p.contains(char::is_whitespace)
}

pub struct Arbiter {
    name: String,
    manager_token: Macaroon,
    targets: RwLock<HashMap<String, Vec<u8>>>,
    clients: RwLock<HashMap<PublicKey, String>>,
    grants: RwLock<Vec<PermissionGrant>>,
}

fn read<T>(l: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(l: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(|e| e.into_inner())
}

impl Arbiter {
    /// `secret` is the arbiter's own root secret, the one its node verifies
    /// tokens with. A fresh manager token is minted from it.
    pub fn new(name: &str, secret: &[u8]) -> Result<Arbiter, TokenError> {
        let id = format!("manager:{}", uuid::Uuid::new_v4());
        let manager_token = Macaroon::mint(secret, &id, name)?
            .add_caveat(&format!("target = {name}"))?
            .add_caveat("method = *")?
            .add_caveat("path = *")?;
        Ok(Arbiter {
            name: name.into(),
            manager_token,
            targets: RwLock::default(),
            clients: RwLock::default(),
            grants: RwLock::default(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn manager_token(&self) -> &Macaroon {
        &self.manager_token
    }

    /// Root secret shared with node `target`.
    pub fn add_target(&self, target: &str, secret: &[u8]) {
        write(&self.targets).insert(target.into(), secret.to_vec());
    }

    /// Names the holder of a transport key.
    pub fn register_client(&self, key: PublicKey, name: &str) {
        write(&self.clients).insert(key, name.into());
    }

    /// Adds or updates a grant.
    pub fn upsert_grant(&self, grant: PermissionGrant) {
        let mut grants = write(&self.grants);
        match grants.iter_mut().find(|g| g.same_scope(&grant)) {
            Some(existing) => *existing = grant,
            None => grants.push(grant),
        }
    }

    pub fn remove_grant(&self, grant: &PermissionGrant) -> bool {
        let mut grants = write(&self.grants);
        let before = grants.len();
        grants.retain(|g| !g.same_scope(grant));
        grants.len() != before
    }

    pub fn grants(&self) -> Vec<PermissionGrant> {
        read(&self.grants).clone()
    }

    /// Mints a token for `requester`, if a grant covers the request.
    pub fn mint(&self, requester: &str, req: &TokenRequest) -> Result<Macaroon, ServiceError> {
        let method = Code::from_method(&req.method).ok_or_else(|| ServiceError::BadRequest(format!("method {:?}", req.method)))?;
        if !valid_path(&req.path) {
            return Err(ServiceError::BadRequest(format!("path {:?}", req.path)));
        }
        let secret = read(&self.targets).get(&req.target).cloned().ok_or(ServiceError::NotFound)?;
        if !read(&self.grants).iter().any(|g| g.covers(requester, &req.target, method, &req.path)) {
            return Err(ServiceError::Unauthorized);
        }
        let id = format!("{requester}:{}", uuid::Uuid::new_v4());
        Macaroon::mint(&secret, &id, &self.name)
            .and_then(|m| m.scoped(&req.target, method, &req.path))
            .map_err(|e| ServiceError::BadRequest(e.to_string()))
    }

    fn grant(&self, req: &ServiceRequest, events: &Events<'_>) -> Result<Reply, ServiceError> {
        if req.token_id != self.manager_token.identifier() {
            return Err(ServiceError::Unauthorized);
        }
        let grant: PermissionGrant =
            serde_json::from_slice(&req.payload).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        if Code::from_method(&grant.method).is_none() || !valid_path(&grant.path) || grant.grantee.is_empty() {
            return Err(ServiceError::BadRequest("grant fields".into()));
        }
        let reply = match req.method {
            Code::Post => {
                self.upsert_grant(grant);
                Reply::ack()
            }
            _ if self.remove_grant(&grant) => Reply::deleted(),
            _ => return Err(ServiceError::NotFound),
        };
        events.emit(GRANT_PATH, ContentFormat::Json, &req.payload, ObserveMode::Data);
        Ok(reply)
    }
}

impl Service for Arbiter {
    fn handle(&self, req: &ServiceRequest, events: &Events<'_>) -> Result<Reply, ServiceError> {
        match (req.method, req.path.as_str()) {
            (Code::Post, TOKEN_PATH) => {
                let requester = req
                    .peer
                    .and_then(|k| read(&self.clients).get(&k).cloned())
                    .ok_or(ServiceError::Unauthorized)?;
                let body: TokenRequest =
                    serde_json::from_slice(&req.payload).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                let token = self.mint(&requester, &body)?;
                Ok(Reply::content(ContentFormat::Text, token.serialize()))
            }
            (Code::Post | Code::Delete, GRANT_PATH) => self.grant(req, events),
            _ => Err(ServiceError::NotFound),
        }
    }

    fn catalogue(&self) -> Vec<Item> {
        read(&self.grants).iter().map(PermissionGrant::to_item).collect()
    }

    fn peer_access(&self, method: Code, path: &str, _peer: Option<&PublicKey>) -> bool {
        method == Code::Post && path == TOKEN_PATH
    }
}
