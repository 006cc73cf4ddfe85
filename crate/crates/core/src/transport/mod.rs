//! Message transports.
//!
//! Every node exposes a request/reply endpoint and an identity-routed push
//! endpoint. Two implementations sit behind the same API, selected by the
//! address scheme: `mem://name` is an in-process transport for tests and
//! embedding; `tcp://host:port` speaks ZMTP 3.0 with CURVE encryption
//! (REQ/REP for replies, ROUTER/DEALER for pushes).

mod curve;
pub mod mem;
mod tcp;

use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use curve::{KeyPair, PublicKey};

pub const DEFAULT_REPLY_PORT: u16 = 5555;
pub const DEFAULT_ROUTER_PORT: u16 = 5556;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("cannot bind {0}: {1}")]
    Bind(Endpoint, String),
    #[error("timed out")]
    Timeout,
    #[error("connection closed")]
    Closed,
    #[error("network endpoints need the server public key")]
    MissingServerKey,
    #[error("identity must not be empty")]
    EmptyIdentity,
    #[error("peer rejected the connection: {0}")]
    Rejected(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for TransportError {
    fn from(e: io::Error) -> TransportError {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
            io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe => {
                TransportError::Closed
            }
            _ => TransportError::Io(e),
        }
    }
}

/// Why a push could not be delivered.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PushError {
    /// No connection has presented this identity yet.
    #[error("identity not connected")]
    NotConnected,
    /// The identity was connected and has gone away.
    #[error("identity disconnected")]
    Disconnected,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid endpoint address {0:?}")]
pub struct AddressError(String);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Memory(String),
    Tcp { host: String, port: u16 },
}

impl Endpoint {
    pub fn memory(name: impl Into<String>) -> Endpoint {
        Endpoint::Memory(name.into())
    }

    pub fn tcp(host: impl Into<String>, port: u16) -> Endpoint {
        Endpoint::Tcp { host: host.into(), port }
    }
}

impl FromStr for Endpoint {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Endpoint, AddressError> {
        let err = || AddressError(s.to_string());
        if let Some(name) = s.strip_prefix("mem://") {
            if name.is_empty() {
                return Err(err());
            }
            return Ok(Endpoint::Memory(name.to_string()));
        }
        let rest = s.strip_prefix("tcp://").ok_or_else(err)?;
        let (host, port) = rest.rsplit_once(':').ok_or_else(err)?;
        let port = port.parse().map_err(|_| err())?;
        if host.is_empty() {
            return Err(err());
        }
        Ok(Endpoint::Tcp { host: host.to_string(), port })
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Memory(name) => write!(f, "mem://{name}"),
            Endpoint::Tcp { host, port } => write!(f, "tcp://{host}:{port}"),
        }
    }
}

/// One request frame as seen by a reply handler.
#[derive(Debug, Clone)]
pub struct Inbound {
    pub frame: Vec<u8>,
    /// Long-term public key of the requester. Authenticated by the CURVE
    /// handshake on the network; declared by the client in memory.
    pub peer: Option<PublicKey>,
}

pub type Handler = Arc<dyn Fn(Inbound) -> Vec<u8> + Send + Sync>;

/// Client-side key material.
#[derive(Debug, Clone)]
pub struct ClientKeys {
    pub keys: KeyPair,
    /// Required for network endpoints.
    pub server: Option<PublicKey>,
}

impl ClientKeys {
    pub fn new(keys: KeyPair, server: Option<PublicKey>) -> Self {
        ClientKeys { keys, server }
    }

    pub fn ephemeral() -> Self {
        ClientKeys { keys: KeyPair::generate(), server: None }
    }

    pub fn with_server(mut self, server: PublicKey) -> Self {
        self.server = Some(server);
        self
    }

    fn server_key(&self) -> Result<PublicKey, TransportError> {
        self.server.ok_or(TransportError::MissingServerKey)
    }
}

enum ReplyImpl {
    Mem(mem::MemReplyServer),
    Tcp(tcp::TcpReplyServer),
}

/// A running request/reply endpoint. Stops on drop.
pub struct ReplyServer {
    endpoint: Endpoint,
    inner: ReplyImpl,
}

impl ReplyServer {
    /// The bound address; for `tcp://host:0` this carries the chosen port.
    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn shutdown(&self) {
        match &self.inner {
            ReplyImpl::Mem(s) => s.shutdown(),
            ReplyImpl::Tcp(s) => s.shutdown(),
        }
    }
}

impl Drop for ReplyServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds a request/reply endpoint; each request frame is answered with the
/// handler's output. Handlers may run concurrently.
pub fn serve_reply(addr: &Endpoint, keys: &KeyPair, handler: Handler) -> Result<ReplyServer, TransportError> {
    match addr {
        Endpoint::Memory(name) => {
            let inner = mem::MemReplyServer::bind(name, handler)?;
            Ok(ReplyServer { endpoint: addr.clone(), inner: ReplyImpl::Mem(inner) })
        }
        Endpoint::Tcp { host, port } => {
            let inner = tcp::TcpReplyServer::bind(host, *port, keys.clone(), handler)?;
            let endpoint = Endpoint::tcp(host.clone(), inner.port());
            Ok(ReplyServer { endpoint, inner: ReplyImpl::Tcp(inner) })
        }
    }
}

#[derive(Clone)]
enum RouterImpl {
    Mem(Arc<mem::MemRouter>),
    Tcp(Arc<tcp::TcpRouter>),
}

/// A running identity-routed push endpoint. Cloning shares the endpoint; it
/// stops when `shutdown` is called or the last clone is dropped.
#[derive(Clone)]
pub struct Router {
    endpoint: Endpoint,
    inner: RouterImpl,
}

impl Router {
    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// Delivers `frame` to the one connection that presented `identity`.
    /// Pushes to the same identity arrive in call order.
    pub fn push(&self, identity: &[u8], frame: &[u8]) -> Result<(), PushError> {
        match &self.inner {
            RouterImpl::Mem(r) => r.push(identity, frame),
            RouterImpl::Tcp(r) => r.push(identity, frame),
        }
    }

    pub fn is_connected(&self, identity: &[u8]) -> bool {
        match &self.inner {
            RouterImpl::Mem(r) => r.is_connected(identity),
            RouterImpl::Tcp(r) => r.is_connected(identity),
        }
    }

    /// Drops any record of a departed identity.
    pub fn forget(&self, identity: &[u8]) {
        match &self.inner {
            RouterImpl::Mem(r) => r.forget(identity),
            RouterImpl::Tcp(r) => r.forget(identity),
        }
    }

    pub fn shutdown(&self) {
        match &self.inner {
            RouterImpl::Mem(r) => r.shutdown(),
            RouterImpl::Tcp(r) => r.shutdown(),
        }
    }
}

pub fn serve_router(addr: &Endpoint, keys: &KeyPair) -> Result<Router, TransportError> {
    match addr {
        Endpoint::Memory(name) => {
            let inner = mem::MemRouter::bind(name)?;
            Ok(Router { endpoint: addr.clone(), inner: RouterImpl::Mem(inner) })
        }
        Endpoint::Tcp { host, port } => {
            let inner = tcp::TcpRouter::bind(host, *port, keys.clone())?;
            let endpoint = Endpoint::tcp(host.clone(), inner.port());
            Ok(Router { endpoint, inner: RouterImpl::Tcp(inner) })
        }
    }
}

enum ConnImpl {
    Mem(mem::MemReplyConnection),
    Tcp(tcp::TcpReplyConnection),
}

/// A client connection to a reply endpoint, reusable for many requests.
pub struct ReplyConnection {
    inner: ConnImpl,
}

impl ReplyConnection {
    pub fn connect(addr: &Endpoint, client: &ClientKeys, timeout: Duration) -> Result<Self, TransportError> {
        let inner = match addr {
            Endpoint::Memory(name) => ConnImpl::Mem(mem::MemReplyConnection::connect(name, client, timeout)?),
            Endpoint::Tcp { host, port } => {
                ConnImpl::Tcp(tcp::TcpReplyConnection::connect(host, *port, client, timeout)?)
            }
        };
        Ok(ReplyConnection { inner })
    }

    /// Sends one frame and waits for its reply. After an error the
    /// connection must not be reused.
    pub fn request(&mut self, frame: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        match &mut self.inner {
            ConnImpl::Mem(c) => c.request(frame, timeout),
            ConnImpl::Tcp(c) => c.request(frame, timeout),
        }
    }
}

/// One-shot request: connect, send, wait for the reply.
pub fn request(
    addr: &Endpoint,
    client: &ClientKeys,
    frame: &[u8],
    timeout: Duration,
) -> Result<Vec<u8>, TransportError> {
    let deadline = std::time::Instant::now() + timeout;
    let mut conn = ReplyConnection::connect(addr, client, timeout)?;
    let left = deadline.saturating_duration_since(std::time::Instant::now());
    conn.request(frame, left)
}

enum DealerImpl {
    Mem(mem::MemDealer),
    Tcp(tcp::TcpDealer),
}

/// Client end of a router endpoint, registered under one identity.
pub struct Dealer {
    identity: Vec<u8>,
    inner: DealerImpl,
}

impl Dealer {
    pub fn connect(
        addr: &Endpoint,
        identity: &[u8],
        client: &ClientKeys,
        timeout: Duration,
    ) -> Result<Dealer, TransportError> {
        if identity.is_empty() {
            return Err(TransportError::EmptyIdentity);
        }
        let inner = match addr {
            Endpoint::Memory(name) => DealerImpl::Mem(mem::MemDealer::connect(name, identity, client, timeout)?),
            Endpoint::Tcp { host, port } => {
                DealerImpl::Tcp(tcp::TcpDealer::connect(host, *port, identity, client, timeout)?)
            }
        };
        Ok(Dealer { identity: identity.to_vec(), inner })
    }

    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    /// Next pushed frame; `Ok(None)` when nothing arrives within `timeout`.
    pub fn recv(&self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        match &self.inner {
            DealerImpl::Mem(d) => d.recv(timeout),
            DealerImpl::Tcp(d) => d.recv(timeout),
        }
    }
}
