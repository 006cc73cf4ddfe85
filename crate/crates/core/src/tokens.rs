//! Macaroon access tokens.
//!
//! A token is an identifier plus an ordered list of first-party caveats,
//! authenticated by a chained HMAC-SHA256:
//!
//! ```text
//! s0     = HMAC(root_secret, identifier)
//! s1     = HMAC(s0, "location " + location)
//! s(i+1) = HMAC(s(i), caveat(i))
//! ```
//!
//! The location hint is folded into the chain so that every byte of the
//! serialized form is authenticated. Anyone holding a token can append a
//! caveat by continuing the chain from its signature; nobody can remove one.
//!
//! Three caveat kinds are understood, one space either side of `=`:
//! `target = <node>`, `method = <GET|POST|DELETE|*>` and `path = <pattern>`.

use std::fmt;

use hmac::{Hmac, Mac};
use sha2::Sha256;
use thiserror::Error;

use crate::codec::Code;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("root secret must not be empty")]
    EmptySecret,
    #[error("token fields must not contain a newline")]
    Newline,
    #[error("token parse error: {0}")]
    Parse(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("signature mismatch")]
    BadSignature,
    #[error("malformed caveat")]
    MalformedCaveat(String),
    #[error("target mismatch")]
    TargetMismatch,
    #[error("method mismatch")]
    MethodMismatch,
    #[error("path mismatch")]
    PathMismatch,
    #[error("missing {0} caveat")]
    MissingCaveat(CaveatKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaveatKind {
    Target,
    Method,
    Path,
}

impl fmt::Display for CaveatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaveatKind::Target => "target",
            CaveatKind::Method => "method",
            CaveatKind::Path => "path",
        })
    }
}

/// A parsed caveat predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Caveat {
    Target(String),
    /// `None` is the `*` wildcard.
    Method(Option<Code>),
    Path(String),
}

impl Caveat {
    pub fn parse(s: &str) -> Option<Caveat> {
        let (key, value) = s.split_once(" = ")?;
        if value.is_empty() {
            return None;
        }
        match key {
            "target" => Some(Caveat::Target(value.to_string())),
            "method" if value == "*" => Some(Caveat::Method(None)),
            "method" => Code::from_method(value).map(|code| Caveat::Method(Some(code))),
            "path" if value == "*" || value.starts_with('/') => Some(Caveat::Path(value.to_string())),
            _ => None,
        }
    }

    pub fn kind(&self) -> CaveatKind {
        match self {
            Caveat::Target(_) => CaveatKind::Target,
            Caveat::Method(_) => CaveatKind::Method,
            Caveat::Path(_) => CaveatKind::Path,
        }
    }

    fn check(&self, ctx: &CaveatContext) -> Result<(), VerifyError> {
        match self {
            Caveat::Target(t) if *t == ctx.target => Ok(()),
            Caveat::Target(_) => Err(VerifyError::TargetMismatch),
            Caveat::Method(None) => Ok(()),
            Caveat::Method(Some(m)) if *m == ctx.method => Ok(()),
            Caveat::Method(_) => Err(VerifyError::MethodMismatch),
            Caveat::Path(p) if path_matches(p, &ctx.path) => Ok(()),
            Caveat::Path(_) => Err(VerifyError::PathMismatch),
        }
    }
}

impl fmt::Display for Caveat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Caveat::Target(t) => write!(f, "target = {t}"),
            Caveat::Method(None) => f.write_str("method = *"),
            Caveat::Method(Some(m)) => write!(f, "method = {}", m.name()),
            Caveat::Path(p) => write!(f, "path = {p}"),
        }
    }
}

/// Wildcard rule shared by path caveats and observation patterns: a bare `*`
/// matches everything, a pattern ending in `/*` matches any path with that
/// prefix, anything else must match exactly.
pub fn path_matches(pattern: &str, path: &str) -> bool {
    if pattern == "*" {
        return true;
    }
    match pattern.strip_suffix('*') {
        Some(prefix) if prefix.ends_with('/') => path.starts_with(prefix),
        _ => pattern == path,
    }
}

/// What a presented token is checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaveatContext {
    pub method: Code,
    pub path: String,
    pub target: String,
}

impl CaveatContext {
    pub fn new(method: Code, path: impl Into<String>, target: impl Into<String>) -> Self {
        CaveatContext { method, path: path.into(), target: target.into() }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Macaroon {
    location: String,
    identifier: String,
    caveats: Vec<String>,
    signature: [u8; 32],
}

impl fmt::Debug for Macaroon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Macaroon")
            .field("location", &self.location)
            .field("identifier", &self.identifier)
            .field("caveats", &self.caveats)
            .field("signature", &hex::encode(self.signature))
            .finish()
    }
}

fn hmac(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

fn location_link(location: &str) -> Vec<u8> {
    format!("location {location}").into_bytes()
}

fn check_field(s: &str) -> Result<(), TokenError> {
    if s.contains('\n') {
        Err(TokenError::Newline)
    } else {
        Ok(())
    }
}

impl Macaroon {
    pub fn mint(root_secret: &[u8], identifier: &str, location: &str) -> Result<Macaroon, TokenError> {
        if root_secret.is_empty() {
            return Err(TokenError::EmptySecret);
        }
        check_field(identifier)?;
        check_field(location)?;
        let seed = hmac(root_secret, identifier.as_bytes());
        Ok(Macaroon {
            location: location.to_string(),
            identifier: identifier.to_string(),
            caveats: Vec::new(),
            signature: hmac(&seed, &location_link(location)),
        })
    }

    /// Returns a copy restricted by `caveat`.
    pub fn add_caveat(&self, caveat: &str) -> Result<Macaroon, TokenError> {
        check_field(caveat)?;
        let mut next = self.clone();
        next.signature = hmac(&self.signature, caveat.as_bytes());
        next.caveats.push(caveat.to_string());
        Ok(next)
    }

    /// Convenience for the usual `target`, `method`, `path` triple.
    pub fn scoped(&self, target: &str, method: Code, path: &str) -> Result<Macaroon, TokenError> {
        self.add_caveat(&Caveat::Target(target.into()).to_string())?
            .add_caveat(&Caveat::Method(Some(method)).to_string())?
            .add_caveat(&Caveat::Path(path.into()).to_string())
    }

    pub fn location(&self) -> &str {
        &self.location
    }

    pub fn identifier(&self) -> &str {
        &self.identifier
    }

    pub fn caveats(&self) -> &[String] {
        &self.caveats
    }

    pub fn signature(&self) -> &[u8; 32] {
        &self.signature
    }

    fn expected_signature(&self, root_secret: &[u8]) -> [u8; 32] {
        let seed = hmac(root_secret, self.identifier.as_bytes());
        let start = hmac(&seed, &location_link(&self.location));
        self.caveats.iter().fold(start, |sig, c| hmac(&sig, c.as_bytes()))
    }

    /// Checks the signature chain against `root_secret` and every caveat
    /// against `ctx`.
    pub fn verify(&self, root_secret: &[u8], ctx: &CaveatContext) -> Result<(), VerifyError> {
        let expected = self.expected_signature(root_secret);
        if !constant_time_eq(&expected, &self.signature) {
            return Err(VerifyError::BadSignature);
        }
        for raw in &self.caveats {
            let caveat = Caveat::parse(raw).ok_or_else(|| VerifyError::MalformedCaveat(raw.clone()))?;
            caveat.check(ctx)?;
        }
        Ok(())
    }

    /// Deployment policy: a token must restrict all of target, method and path.
    pub fn require_scoped(&self) -> Result<(), VerifyError> {
        let kinds: Vec<CaveatKind> =
            self.caveats.iter().filter_map(|c| Caveat::parse(c)).map(|c| c.kind()).collect();
        for kind in [CaveatKind::Target, CaveatKind::Method, CaveatKind::Path] {
            if !kinds.contains(&kind) {
                return Err(VerifyError::MissingCaveat(kind));
            }
        }
        Ok(())
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = format!("location {}\nidentifier {}\n", self.location, self.identifier);
        for c in &self.caveats {
            out.push_str("caveat ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str("signature ");
        out.push_str(&hex::encode(self.signature));
        out.push('\n');
        out.into_bytes()
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Macaroon, TokenError> {
        let text = std::str::from_utf8(bytes).map_err(|_| TokenError::Parse("not UTF-8"))?;
        let body = text.strip_suffix('\n').ok_or(TokenError::Parse("missing final newline"))?;
        let mut lines = body.split('\n');

        let location = lines
            .next()
            .and_then(|l| l.strip_prefix("location "))
            .ok_or(TokenError::Parse("expected location line"))?;
        let identifier = lines
            .next()
            .and_then(|l| l.strip_prefix("identifier "))
            .ok_or(TokenError::Parse("expected identifier line"))?;

        let mut caveats = Vec::new();
        let mut signature = None;
        for line in lines {
            if signature.is_some() {
                return Err(TokenError::Parse("data after signature"));
            }
            if let Some(c) = line.strip_prefix("caveat ") {
                caveats.push(c.to_string());
            } else if let Some(h) = line.strip_prefix("signature ") {
                signature = Some(parse_signature(h)?);
            } else {
                return Err(TokenError::Parse("unexpected line"));
            }
        }
        let signature = signature.ok_or(TokenError::Parse("missing signature"))?;
        Ok(Macaroon { location: location.to_string(), identifier: identifier.to_string(), caveats, signature })
    }
}

fn parse_signature(h: &str) -> Result<[u8; 32], TokenError> {
    // lowercase only, so the textual form stays canonical
    if h.len() != 64 || !h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(TokenError::Parse("signature must be 64 lowercase hex digits"));
    }
    let mut sig = [0u8; 32];
    hex::decode_to_slice(h, &mut sig).map_err(|_| TokenError::Parse("bad signature hex"))?;
    Ok(sig)
}

fn constant_time_eq(a: &[u8; 32], b: &[u8; 32]) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
