//! The generic node engine shared by the store and the arbiter.
//!
//! A [`Node`] owns a reply endpoint and a router endpoint. Every inbound
//! frame goes through the same pipeline (decode, option matrix, payload
//! limits, token check) before the [`Service`] sees it, and every frame gets
//! exactly one response.

pub mod catalogue;
pub mod meta;
pub mod registry;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, RecvTimeoutError, Sender};
use log::{debug, warn};

use crate::clock::{Clock, SystemClock};
use crate::codec::{validate_options, Code, ContentFormat, Message, MessageKind, ObserveMode, OptionRecord, opt};
use crate::tokens::{CaveatContext, Macaroon};
use crate::transport::{
    serve_reply, serve_router, Endpoint, Handler, Inbound, KeyPair, PublicKey, PushError, ReplyServer, Router,
    TransportError,
};

pub use catalogue::{Catalogue, Item};
pub use meta::{format_meta_record, parse_meta_record, MetaError, MetaRecord};
pub use registry::{expiry, ObservationEntry, ObservationRegistry, AUDIT_PREFIX, DEFAULT_MAX_AGE_SECS};

pub const DEFAULT_MAX_PAYLOAD: usize = 65536;
pub const CATALOGUE_PATH: &str = "/cat";
/// Token identifier recorded for requests that carried no token.
pub const ANONYMOUS: &str = "-";
/// Requests admitted on their transport key instead of a token are recorded
/// as `key:<hex public key>`.
pub const PEER_PREFIX: &str = "key:";

const EXPIRY_INTERVAL: Duration = Duration::from_millis(100);

/// A request that passed the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceRequest {
    pub method: Code,
    pub path: String,
    pub format: ContentFormat,
    pub payload: Vec<u8>,
    /// Identifier of the presented token, `key:<hex>` for requests admitted
    /// on their transport key, or [`ANONYMOUS`].
    pub token_id: String,
    /// Public key of the connection the request arrived on.
    pub peer: Option<PublicKey>,
}

/// A successful outcome. Errors are [`ServiceError`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub code: Code,
    pub format: Option<ContentFormat>,
    pub payload: Vec<u8>,
}

impl Reply {
    /// 65, no payload.
    pub fn ack() -> Reply {
        Reply { code: Code::Ack, format: None, payload: Vec::new() }
    }

    /// 66, header only.
    pub fn deleted() -> Reply {
        Reply { code: Code::AckDelete, format: None, payload: Vec::new() }
    }

    /// 69 with a payload.
    pub fn content(format: ContentFormat, payload: impl Into<Vec<u8>>) -> Reply {
        Reply { code: Code::Content, format: Some(format), payload: payload.into() }
    }

    fn into_message(self) -> Message {
        let mut m = Message::new(self.code);
        if let Some(f) = self.format {
            m = m.with_content_format(f);
        }
        m.with_payload(self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("no such resource")]
    NotFound,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unauthorised")]
    Unauthorized,
    #[error("unsupported content format")]
    UnsupportedFormat,
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> Code {
        match self {
            ServiceError::NotFound => Code::NotAcceptable,
            ServiceError::BadRequest(_) => Code::BadRequest,
            ServiceError::Unauthorized => Code::Unauthorized,
            ServiceError::UnsupportedFormat => Code::UnsupportedContentFormat,
            ServiceError::Internal(_) => Code::InternalServerError,
        }
    }
}

/// One handled request, as seen by the audit trail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub timestamp: u64,
    pub token_id: String,
    /// `None` when the frame did not decode to a request.
    pub method: Option<Code>,
    pub path: Option<String>,
    pub code: Code,
}

impl AuditRecord {
    /// `<timestamp> <token-id> <METHOD> <path> <code>`, with `-` for
    /// missing fields.
    pub fn to_line(&self) -> String {
        let method = self.method.map(|m| m.name()).unwrap_or("-");
        let path = self.path.as_deref().unwrap_or("-");
        format!("{} {} {} {} {}", self.timestamp, self.token_id, method, path, self.code.value())
    }
}

/// Resource logic plugged into a node.
pub trait Service: Send + Sync + 'static {
    fn handle(&self, req: &ServiceRequest, events: &Events<'_>) -> Result<Reply, ServiceError>;

    /// Items listed under `/cat`.
    fn catalogue(&self) -> Vec<Item>;

    /// Lets a request through without a token, based on the connection
    /// credential alone.
    fn peer_access(&self, _method: Code, _path: &str, _peer: Option<&PublicKey>) -> bool {
        false
    }

    /// Called once per inbound frame, after the response is decided.
    fn record_audit(&self, _record: &AuditRecord) {}
}

pub struct NodeConfig {
    /// Node name; tokens must carry `target = <name>`.
    pub name: String,
    pub reply: Endpoint,
    pub router: Endpoint,
    pub keys: KeyPair,
    /// Key for verifying presented tokens.
    pub root_secret: Vec<u8>,
    pub max_payload: usize,
    pub clock: Arc<dyn Clock>,
}

impl NodeConfig {
    pub fn new(name: &str, reply: Endpoint, router: Endpoint, keys: KeyPair, root_secret: &[u8]) -> NodeConfig {
        NodeConfig {
            name: name.to_string(),
            reply,
            router,
            keys,
            root_secret: root_secret.to_vec(),
            max_payload: DEFAULT_MAX_PAYLOAD,
            clock: Arc::new(SystemClock),
        }
    }

    /// In-memory endpoints `mem://<name>` and `mem://<name>-router`.
    pub fn memory(name: &str, root_secret: &[u8]) -> NodeConfig {
        NodeConfig::new(
            name,
            Endpoint::memory(name),
            Endpoint::memory(format!("{name}-router")),
            KeyPair::generate(),
            root_secret,
        )
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> NodeConfig {
        self.clock = clock;
        self
    }

    pub fn with_max_payload(mut self, max: usize) -> NodeConfig {
        self.max_payload = max;
        self
    }
}

struct Inner {
    name: String,
    root_secret: Vec<u8>,
    max_payload: usize,
    clock: Arc<dyn Clock>,
    router: Router,
    router_key: PublicKey,
    registry: Mutex<ObservationRegistry>,
    service: Arc<dyn Service>,
    draining: AtomicBool,
    authorized: AtomicU64,
    handled: AtomicU64,
}

/// Emits observation events from inside a service handler.
pub struct Events<'a> {
    inner: &'a Inner,
}

impl Events<'_> {
    pub fn emit(&self, path: &str, format: ContentFormat, data: &[u8], mode: ObserveMode) -> usize {
        self.inner.emit(path, format, data, mode)
    }

    pub fn now_ms(&self) -> u64 {
        self.inner.clock.now_ms()
    }
}

pub struct Node {
    inner: Arc<Inner>,
    reply: ReplyServer,
    stop_expiry: Mutex<Option<Sender<()>>>,
    expiry_thread: Mutex<Option<JoinHandle<()>>>,
}

impl Node {
    /// Binds both endpoints and starts the expiry task.
    pub fn start(config: NodeConfig, service: Arc<dyn Service>) -> Result<Node, TransportError> {
        let router = serve_router(&config.router, &config.keys)?;
        let inner = Arc::new(Inner {
            name: config.name,
            root_secret: config.root_secret,
            max_payload: config.max_payload,
            clock: config.clock,
            router_key: config.keys.public(),
            router,
            registry: Mutex::default(),
            service,
            draining: AtomicBool::new(false),
            authorized: AtomicU64::new(0),
            handled: AtomicU64::new(0),
        });
        let handler_inner = inner.clone();
        let handler: Handler = Arc::new(move |inbound: Inbound| handler_inner.handle_frame(&inbound.frame, inbound.peer));
        let reply = match serve_reply(&config.reply, &config.keys, handler) {
            Ok(r) => r,
            Err(e) => {
                inner.router.shutdown();
                return Err(e);
            }
        };

        let (stop_tx, stop_rx) = bounded::<()>(0);
        let weak = Arc::downgrade(&inner);
        let expiry_thread = thread::spawn(move || {
            while let Err(RecvTimeoutError::Timeout) = stop_rx.recv_timeout(EXPIRY_INTERVAL) {
                let Some(inner) = weak.upgrade() else { break };
                let now = inner.clock.now_ms();
                inner.expire(now);
            }
        });
        Ok(Node {
            inner,
            reply,
            stop_expiry: Mutex::new(Some(stop_tx)),
            expiry_thread: Mutex::new(Some(expiry_thread)),
        })
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn reply_endpoint(&self) -> &Endpoint {
        self.reply.endpoint()
    }

    pub fn router_endpoint(&self) -> &Endpoint {
        self.inner.router.endpoint()
    }

    /// The key clients need to reach either endpoint.
    pub fn public_key(&self) -> PublicKey {
        self.inner.router_key
    }

    /// Runs one frame through the pipeline without a transport.
    pub fn handle_request(&self, raw: &[u8], peer: Option<PublicKey>) -> Vec<u8> {
        self.inner.handle_frame(raw, peer)
    }

    pub fn emit_event(&self, path: &str, format: ContentFormat, data: &[u8], mode: ObserveMode) -> usize {
        self.inner.emit(path, format, data, mode)
    }

    /// Drops observations whose expiry is at or before `now_ms`.
    pub fn expire_observations(&self, now_ms: u64) -> usize {
        self.inner.expire(now_ms)
    }

    pub fn observation_count(&self) -> usize {
        self.inner.registry().len()
    }

    pub fn observation(&self, identity: &[u8]) -> Option<ObservationEntry> {
        self.inner.registry().get(identity).cloned()
    }

    /// Requests that passed the token check.
    pub fn authorized_count(&self) -> u64 {
        self.inner.authorized.load(Ordering::SeqCst)
    }

    /// Requests that reached the service.
    pub fn handled_count(&self) -> u64 {
        self.inner.handled.load(Ordering::SeqCst)
    }

    /// From now on every request is answered with 163.
    pub fn drain(&self) {
        self.inner.draining.store(true, Ordering::SeqCst);
    }

    pub fn shutdown(&self) {
        self.drain();
        self.reply.shutdown();
        self.inner.router.shutdown();
        self.stop_expiry.lock().unwrap().take();
        if let Some(t) = self.expiry_thread.lock().unwrap().take() {
            let _ = t.join();
        }
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Outcome of the pipeline before it becomes bytes.
struct Outcome {
    response: Message,
    token_id: String,
    method: Option<Code>,
    path: Option<String>,
}

impl Outcome {
    fn error(code: Code) -> Outcome {
        Outcome { response: Message::new(code), token_id: ANONYMOUS.into(), method: None, path: None }
    }
}

impl Inner {
    fn registry(&self) -> MutexGuard<'_, ObservationRegistry> {
        self.registry.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn handle_frame(&self, raw: &[u8], peer: Option<PublicKey>) -> Vec<u8> {
        let outcome = self.pipeline(raw, peer);
        let code = outcome.response.code;
        if let (Some(method), Some(path)) = (outcome.method, outcome.path.as_deref()) {
            let line = format!("{} {}", outcome.token_id, method.name());
            self.emit(path, ContentFormat::Text, line.as_bytes(), ObserveMode::Audit);
        }
        let record = AuditRecord {
            timestamp: self.clock.now_ms(),
            token_id: outcome.token_id,
            method: outcome.method,
            path: outcome.path,
            code,
        };
        self.service.record_audit(&record);
        outcome.response.encode().unwrap_or_else(|e| {
            warn!("{}: response did not encode: {e}", self.name);
            Message::new(Code::InternalServerError).encode().expect("header encodes")
        })
    }

    fn pipeline(&self, raw: &[u8], peer: Option<PublicKey>) -> Outcome {
        if self.draining.load(Ordering::SeqCst) {
            return Outcome::error(Code::ServiceUnavailable);
        }
        let msg = match Message::decode(raw) {
            Ok(m) => m,
            Err(e) => {
                debug!("{}: malformed request: {e}", self.name);
                return Outcome::error(Code::BadRequest);
            }
        };
        let Some(kind) = MessageKind::of_request(msg.code) else {
            return Outcome::error(Code::BadRequest);
        };
        let method = msg.code;
        let path = msg.uri_path().ok().flatten().map(str::to_string);
        let mut out = Outcome { response: Message::new(Code::BadRequest), token_id: ANONYMOUS.into(), method: Some(method), path };

        let code = match self.check(&msg, kind, out.path.as_deref()) {
            Err(code) => code,
            Ok(format) => {
                let path = out.path.clone().expect("checked");
                match self.authorize(&msg, method, &path, peer.as_ref()) {
                    Err(code) => code,
                    Ok(token_id) => {
                        out.token_id = token_id;
                        self.authorized.fetch_add(1, Ordering::SeqCst);
                        let req = ServiceRequest {
                            method,
                            path,
                            format,
                            payload: msg.payload.clone(),
                            token_id: out.token_id.clone(),
                            peer,
                        };
                        out.response = self.dispatch(&msg, req);
                        return out;
                    }
                }
            }
        };
        out.response = Message::new(code);
        out
    }

    /// Structural checks. Returns the request content format.
    fn check(&self, msg: &Message, kind: MessageKind, path: Option<&str>) -> Result<ContentFormat, Code> {
        if let Err(v) = validate_options(msg, kind) {
            debug!("{}: option matrix: {:?}", self.name, v);
            return Err(Code::BadRequest);
        }
        let format = match msg.content_format() {
            Ok(Some(f)) => f,
            Ok(None) => return Err(Code::BadRequest),
            Err(crate::codec::CodecError::UnsupportedContentFormat(_)) => return Err(Code::UnsupportedContentFormat),
            Err(_) => return Err(Code::BadRequest),
        };
        if msg.payload.len() > self.max_payload {
            return Err(Code::RequestEntityTooLarge);
        }
        match path {
            Some(p) if p.starts_with('/') && !p.contains(char::is_whitespace) => {}
            _ => return Err(Code::BadRequest),
        }
        if msg.uri_host().is_err() {
            return Err(Code::BadRequest);
        }
        match msg.observe() {
            Ok(None) => {}
            Ok(Some(mode)) if ObserveMode::parse(mode).is_some() => {}
            _ => return Err(Code::BadRequest),
        }
        if msg.max_age().is_err() {
            return Err(Code::BadRequest);
        }
        Ok(format)
    }

    /// Returns the identifier to audit under.
    fn authorize(&self, msg: &Message, method: Code, path: &str, peer: Option<&PublicKey>) -> Result<String, Code> {
        if msg.token.is_empty() {
            if self.service.peer_access(method, path, peer) {
                return Ok(peer.map_or_else(|| ANONYMOUS.into(), |k| format!("{PEER_PREFIX}{}", k.to_hex())));
            }
            return Err(Code::Unauthorized);
        }
        let mac = Macaroon::deserialize(&msg.token).map_err(|_| Code::Unauthorized)?;
        mac.require_scoped().map_err(|_| Code::Unauthorized)?;
        let ctx = CaveatContext::new(method, path, self.name.as_str());
        match mac.verify(&self.root_secret, &ctx) {
            Ok(()) => Ok(mac.identifier().to_string()),
            Err(e) => {
                debug!("{}: token {} rejected: {e}", self.name, mac.identifier());
                Err(Code::Unauthorized)
            }
        }
    }

    fn dispatch(&self, msg: &Message, req: ServiceRequest) -> Message {
        if req.method == Code::Get {
            if let Ok(Some(mode)) = msg.observe() {
                let mode = ObserveMode::parse(mode).expect("checked");
                let max_age = msg.max_age().ok().flatten();
                return self.observe(&req, mode, max_age);
            }
            if req.path == CATALOGUE_PATH {
                let items = catch_unwind(AssertUnwindSafe(|| self.service.catalogue()));
                return match items {
                    Ok(items) => Reply::content(ContentFormat::Json, Catalogue::new(&self.name, items).to_json()).into_message(),
                    Err(_) => Message::new(Code::InternalServerError),
                };
            }
        }
        self.handled.fetch_add(1, Ordering::SeqCst);
        let events = Events { inner: self };
        match catch_unwind(AssertUnwindSafe(|| self.service.handle(&req, &events))) {
            Ok(Ok(reply)) => reply.into_message(),
            Ok(Err(e)) => {
                debug!("{}: {} {}: {e}", self.name, req.method.name(), req.path);
                Message::new(e.code())
            }
            Err(_) => {
                warn!("{}: handler panicked on {}", self.name, req.path);
                Message::new(Code::InternalServerError)
            }
        }
    }

    fn observe(&self, req: &ServiceRequest, mode: ObserveMode, max_age: Option<u32>) -> Message {
        let identity = match mode {
            ObserveMode::Notify => req.path.clone(),
            _ => uuid::Uuid::new_v4().to_string(),
        };
        let entry = ObservationEntry {
            identity: identity.clone().into_bytes(),
            path_pattern: req.path.clone(),
            mode,
            expires_at: expiry(self.clock.now_ms(), max_age),
            format: req.format,
        };
        if self.registry().register(entry).is_err() {
            return Message::new(Code::BadRequest);
        }
        self.router.forget(identity.as_bytes());
        let payload = if mode == ObserveMode::Notify { Vec::new() } else { identity.into_bytes() };
        Message::new(Code::Content)
            .with_content_format(ContentFormat::Text)
            .with_option(OptionRecord::string(opt::PUBLIC_KEY, &self.router_key.to_z85()))
            .with_payload(payload)
    }

    fn emit(&self, path: &str, format: ContentFormat, data: &[u8], mode: ObserveMode) -> usize {
        let now = self.clock.now_ms();
        let mut registry = self.registry();
        let targets = registry.matching(path, mode, now);
        if targets.is_empty() {
            return 0;
        }
        let line = format_meta_record(&MetaRecord { timestamp: now, uri_path: path.to_string(), format, data: data.to_vec() });
        let frame = Message::new(Code::Content)
            .with_content_format(ContentFormat::Text)
            .with_payload(line.into_bytes())
            .encode()
            .expect("event frame encodes");
        let mut delivered = 0;
        for id in targets {
            match self.router.push(&id, &frame) {
                Ok(()) => delivered += 1,
                // The client has the reply but has not connected yet.
                Err(PushError::NotConnected) => {}
                Err(PushError::Disconnected) => {
                    debug!("{}: dropping observer {}", self.name, String::from_utf8_lossy(&id));
                    registry.remove(&id);
                    self.router.forget(&id);
                }
            }
        }
        delivered
    }

    fn expire(&self, now_ms: u64) -> usize {
        let removed = self.registry().expire(now_ms);
        for id in &removed {
            self.router.forget(id);
        }
        removed.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::transport::{ClientKeys, Dealer};
    use std::sync::atomic::AtomicUsize;

    const SECRET: &[u8] = b"node test secret";

    struct Echo {
        audits: Mutex<Vec<AuditRecord>>,
        calls: AtomicUsize,
    }

    impl Service for Echo {
        fn handle(&self, req: &ServiceRequest, events: &Events<'_>) -> Result<Reply, ServiceError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match (req.method, req.path.as_str()) {
                (_, "/panic") => panic!("boom"),
                (_, "/missing") => Err(ServiceError::NotFound),
                (Code::Post, p) => {
                    events.emit(p, req.format, &req.payload, ObserveMode::Data);
                    Ok(Reply::ack())
                }
                (Code::Delete, _) => Ok(Reply::deleted()),
                (_, _) => Ok(Reply::content(req.format, req.payload.clone())),
            }
        }

        fn catalogue(&self) -> Vec<Item> {
            vec![Item::new("/echo")]
        }

        fn record_audit(&self, record: &AuditRecord) {
            self.audits.lock().unwrap().push(record.clone());
        }
    }

    fn start(name: &str, clock: Option<ManualClock>) -> (Node, Arc<Echo>) {
        let svc = Arc::new(Echo { audits: Mutex::default(), calls: AtomicUsize::new(0) });
        let mut cfg = NodeConfig::memory(name, SECRET);
        if let Some(c) = clock {
            cfg = cfg.with_clock(Arc::new(c));
        }
        (Node::start(cfg, svc.clone()).unwrap(), svc)
    }

    fn token(node: &str, method: &str, path: &str) -> Vec<u8> {
        Macaroon::mint(SECRET, "tester", "arbiter")
            .unwrap()
            .add_caveat(&format!("target = {node}"))
            .unwrap()
            .add_caveat(&format!("method = {method}"))
            .unwrap()
            .add_caveat(&format!("path = {path}"))
            .unwrap()
            .serialize()
    }

    fn req(node: &str, code: Code, path: &str, tok: &[u8]) -> Message {
        Message::request(code, path, node, ContentFormat::Json).with_token(tok.to_vec())
    }

    fn send(node: &Node, m: &Message) -> Message {
        Message::decode(&node.handle_request(&m.encode().unwrap(), None)).unwrap()
    }

    #[test]
    fn success_codes() {
        let (node, _) = start("nc-success", None);
        let post = req("nc-success", Code::Post, "/a", &token("nc-success", "POST", "/a")).with_payload(b"{}".to_vec());
        assert_eq!(node.handle_request(&post.encode().unwrap(), None)[0], 0x41);
        let get = send(&node, &req("nc-success", Code::Get, "/a", &token("nc-success", "GET", "/a")));
        assert_eq!(get.code, Code::Content);
        assert_eq!(get.content_format(), Ok(Some(ContentFormat::Json)));
        let del = send(&node, &req("nc-success", Code::Delete, "/a", &token("nc-success", "DELETE", "/a")));
        assert_eq!(del, Message::new(Code::AckDelete));
    }

    #[test]
    fn rejection_codes() {
        let (node, svc) = start("nc-reject", None);
        let good = token("nc-reject", "GET", "/a");
        assert_eq!(node.handle_request(&[1, 2], None), vec![0x80, 0, 0, 0]);
        assert_eq!(send(&node, &Message::new(Code::Ack)).code, Code::BadRequest);
        let no_host = Message::new(Code::Get)
            .with_option(OptionRecord::string(opt::URI_PATH, "/a"))
            .with_content_format(ContentFormat::Json)
            .with_token(good.clone());
        assert_eq!(send(&node, &no_host).code, Code::BadRequest);
        let mut fmt7 = req("nc-reject", Code::Get, "/a", &good);
        fmt7.options[2] = OptionRecord::new(opt::CONTENT_FORMAT, 7u32.to_be_bytes());
        assert_eq!(send(&node, &fmt7).code, Code::UnsupportedContentFormat);
        let big = req("nc-reject", Code::Get, "/a", &good).with_payload(vec![0; DEFAULT_MAX_PAYLOAD + 1]);
        assert_eq!(send(&node, &big).code, Code::RequestEntityTooLarge);
        assert_eq!(send(&node, &req("nc-reject", Code::Get, "/b", &good)).code, Code::Unauthorized);
        assert_eq!(send(&node, &req("nc-reject", Code::Get, "/a", b"")).code, Code::Unauthorized);
        assert_eq!(send(&node, &req("nc-reject", Code::Get, "/a", &token("other", "GET", "/a"))).code, Code::Unauthorized);
        let mut bad_mode = req("nc-reject", Code::Get, "/a", &good);
        bad_mode.options.push(OptionRecord::string(opt::OBSERVE, "dta"));
        assert_eq!(send(&node, &bad_mode).code, Code::BadRequest);
        assert_eq!(send(&node, &req("nc-reject", Code::Get, "/missing", &token("nc-reject", "GET", "/*"))).code, Code::NotAcceptable);
        assert_eq!(send(&node, &req("nc-reject", Code::Get, "/panic", &token("nc-reject", "GET", "/*"))).code, Code::InternalServerError);
        // Unknown option codes are ignored.
        let extra = req("nc-reject", Code::Get, "/a", &good).with_option(OptionRecord::new(999, vec![1]));
        assert_eq!(send(&node, &extra).code, Code::Content);

        // The service never ran for a rejected request.
        assert_eq!(svc.calls.load(Ordering::SeqCst) as u64, node.handled_count());
        assert!(node.handled_count() <= node.authorized_count());
        assert_eq!(node.handled_count(), 3);
        assert_eq!(svc.audits.lock().unwrap().len(), 12);
        node.drain();
        assert_eq!(send(&node, &req("nc-reject", Code::Get, "/a", &good)).code, Code::ServiceUnavailable);
    }

    #[test]
    fn catalogue_needs_token() {
        let (node, _) = start("nc-cat", None);
        assert_eq!(send(&node, &req("nc-cat", Code::Get, "/cat", b"")).code, Code::Unauthorized);
        let r = send(&node, &req("nc-cat", Code::Get, "/cat", &token("nc-cat", "GET", "/cat")));
        let cat = Catalogue::from_json(&r.payload).unwrap();
        assert_eq!(cat.items, vec![Item::new("/echo")]);
    }

    #[test]
    fn observe_registers_and_expires() {
        let clock = ManualClock::new(1_000_000);
        let (node, _) = start("nc-obs", Some(clock.clone()));
        let tok = token("nc-obs", "GET", "/kv/*");
        let mut get = req("nc-obs", Code::Get, "/kv/*", &tok);
        get.options.push(OptionRecord::string(opt::OBSERVE, "data"));
        let r1 = send(&node, &get);
        let r2 = send(&node, &get);
        assert_eq!(r1.code, Code::Content);
        assert_eq!(r1.public_key(), Ok(Some(node.public_key().to_z85().as_str())));
        assert_ne!(r1.payload, r2.payload);
        let entry = node.observation(&r1.payload).unwrap();
        assert_eq!(entry.expires_at, Some(1_060_000));
        assert_eq!(node.expire_observations(1_059_900), 0);
        assert_eq!(node.expire_observations(1_060_100), 2);

        let mut forever = get.clone();
        forever.options.push(crate::codec::encode_uint_option(opt::MAX_AGE, 0).unwrap());
        let r = send(&node, &forever);
        assert_eq!(node.observation(&r.payload).unwrap().expires_at, None);
        assert_eq!(node.expire_observations(1_000_000 + 1_000_000_000), 0);
    }

    #[test]
    fn notify_identity_is_path() {
        let (node, _) = start("nc-notify", None);
        let mut get = req("nc-notify", Code::Get, "/cb/1", &token("nc-notify", "GET", "/cb/*"));
        get.options.push(OptionRecord::string(opt::OBSERVE, "notify"));
        let r = send(&node, &get);
        assert_eq!(r.code, Code::Content);
        assert!(r.payload.is_empty());
        assert_eq!(node.observation(b"/cb/1").unwrap().mode, ObserveMode::Notify);
        assert_eq!(send(&node, &get).code, Code::BadRequest);
    }

    #[test]
    fn events_reach_only_matching_observers() {
        let (node, _) = start("nc-emit", None);
        assert_eq!(node.emit_event("/kv/x", ContentFormat::Text, b"v", ObserveMode::Data), 0);
        let observe = |pattern: &str, mode: &str| {
            let mut get = req("nc-emit", Code::Get, pattern, &token("nc-emit", "GET", pattern));
            get.options.push(OptionRecord::string(opt::OBSERVE, mode));
            let r = send(&node, &get);
            Dealer::connect(node.router_endpoint(), &r.payload, &ClientKeys::ephemeral(), Duration::from_secs(1)).unwrap()
        };
        let data = observe("/kv/foo/bar", "data");
        let other = observe("/kv/other", "data");
        let audit = observe("/kv/*", "audit");

        let post = req("nc-emit", Code::Post, "/kv/foo/bar", &token("nc-emit", "POST", "/kv/foo/bar"))
            .with_payload(br#"{"room": "lounge", "value": 1}"#.to_vec());
        assert_eq!(send(&node, &post).code, Code::Ack);

        let frame = Message::decode(&data.recv(Duration::from_secs(1)).unwrap().unwrap()).unwrap();
        let line = String::from_utf8(frame.payload).unwrap();
        let (ts, rest) = line.split_once(' ').unwrap();
        assert!(ts.parse::<u64>().is_ok());
        assert_eq!(rest, r#"/kv/foo/bar json {"room": "lounge", "value": 1}"#);

        let a = Message::decode(&audit.recv(Duration::from_secs(1)).unwrap().unwrap()).unwrap();
        let rec = parse_meta_record(std::str::from_utf8(&a.payload).unwrap()).unwrap();
        assert_eq!(rec.data, b"tester POST");
        assert_eq!(audit.recv(Duration::from_millis(50)).unwrap(), None);
        assert_eq!(other.recv(Duration::from_millis(50)).unwrap(), None);

        drop(data);
        assert_eq!(node.observation_count(), 3);
        node.emit_event("/kv/foo/bar", ContentFormat::Text, b"x", ObserveMode::Data);
        assert_eq!(node.observation_count(), 2);
    }

    #[test]
    fn audit_line() {
        let r = AuditRecord {
            timestamp: 5,
            token_id: "sensor:1".into(),
            method: Some(Code::Post),
            path: Some("/kv/a".into()),
            code: Code::Ack,
        };
        assert_eq!(r.to_line(), "5 sensor:1 POST /kv/a 65");
    }
}
