//! Client side of a node: REST requests over the reply endpoint and
//! observations over the router endpoint.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::codec::{encode_uint_option, opt, Code, CodecError, ContentFormat, Message, ObserveMode, OptionRecord};
use crate::node::{parse_meta_record, MetaError, MetaRecord, DEFAULT_MAX_AGE_SECS};
use crate::transport::{ClientKeys, Dealer, Endpoint, PublicKey, ReplyConnection, TransportError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("bad response: {0}")]
    Codec(#[from] CodecError),
    /// The node answered with a non-success code.
    #[error("rejected: {0}")]
    Rejected(Code),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("bad event: {0}")]
    Meta(#[from] MetaError),
}

/// The conventional router endpoint next to a reply endpoint: the next port
/// up on the network, `<name>-router` in memory.
pub fn default_router(reply: &Endpoint) -> Endpoint {
    match reply {
        Endpoint::Memory(name) => Endpoint::memory(format!("{name}-router")),
        Endpoint::Tcp { host, port } => Endpoint::tcp(host.clone(), port.wrapping_add(1)),
    }
}

pub struct Client {
    reply: Endpoint,
    router: Endpoint,
    keys: ClientKeys,
    host: String,
    timeout: Duration,
    conn: Mutex<Option<ReplyConnection>>,
}

impl Client {
    pub fn new(reply: Endpoint, keys: ClientKeys) -> Client {
        let host = match &reply {
            Endpoint::Memory(name) => name.clone(),
            Endpoint::Tcp { host, .. } => host.clone(),
        };
        Client { router: default_router(&reply), reply, keys, host, timeout: DEFAULT_TIMEOUT, conn: Mutex::new(None) }
    }

    pub fn with_router(mut self, router: Endpoint) -> Client {
        self.router = router;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Client {
        self.timeout = timeout;
        self
    }

    /// Value sent in the uri_host option.
    pub fn with_host(mut self, host: &str) -> Client {
        self.host = host.to_string();
        self
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.keys.public()
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    /// A request message with the mandatory options filled in.
    pub fn request(&self, code: Code, path: &str, token: &[u8], format: ContentFormat) -> Message {
        Message::request(code, path, &self.host, format).with_token(token.to_vec())
    }

    /// Sends any message and returns whatever comes back.
    pub fn send(&self, msg: &Message) -> Result<Message, ClientError> {
        let frame = msg.encode()?;
        let mut slot = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_none() {
            *slot = Some(ReplyConnection::connect(&self.reply, &self.keys, self.timeout)?);
        }
        let result = slot.as_mut().expect("connected").request(&frame, self.timeout);
        match result {
            Ok(bytes) => Ok(Message::decode(&bytes)?),
            Err(e) => {
                *slot = None;
                Err(e.into())
            }
        }
    }

    fn expect_success(&self, msg: &Message) -> Result<Message, ClientError> {
        let reply = self.send(msg)?;
        if reply.code.is_success() {
            Ok(reply)
        } else {
            Err(ClientError::Rejected(reply.code))
        }
    }

    pub fn get(&self, path: &str, token: &[u8]) -> Result<Message, ClientError> {
        self.expect_success(&self.request(Code::Get, path, token, ContentFormat::Json))
    }

    pub fn post(&self, path: &str, token: &[u8], format: ContentFormat, payload: &[u8]) -> Result<Message, ClientError> {
        self.expect_success(&self.request(Code::Post, path, token, format).with_payload(payload.to_vec()))
    }

    pub fn delete(&self, path: &str, token: &[u8]) -> Result<Message, ClientError> {
        self.expect_success(&self.request(Code::Delete, path, token, ContentFormat::Json))
    }

    /// Sets up an observation: GET with the observe option, then a dealer on
    /// the router endpoint under the identity the node hands back (a UUID,
    /// or the path itself for notify).
    pub fn observe(&self, path: &str, token: &[u8], mode: ObserveMode, max_age: Option<u32>) -> Result<Observation, ClientError> {
        let mut msg = self
            .request(Code::Get, path, token, ContentFormat::Text)
            .with_option(OptionRecord::string(opt::OBSERVE, mode.as_str()));
        if let Some(age) = max_age {
            msg = msg.with_option(encode_uint_option(opt::MAX_AGE, u64::from(age))?);
        }
        let started = Instant::now();
        let reply = self.expect_success(&msg)?;
        let key = reply
            .public_key()?
            .ok_or_else(|| ClientError::Protocol("observe response without public_key".into()))?;
        let key = PublicKey::parse(key).ok_or_else(|| ClientError::Protocol(format!("bad public_key {key:?}")))?;
        let identity = match mode {
            ObserveMode::Notify => path.as_bytes().to_vec(),
            _ if reply.payload.is_empty() => return Err(ClientError::Protocol("observe response without identity".into())),
            _ => reply.payload.clone(),
        };
        let keys = self.keys.clone().with_server(key);
        let dealer = Dealer::connect(&self.router, &identity, &keys, self.timeout)?;
        let deadline = match max_age.unwrap_or(DEFAULT_MAX_AGE_SECS) {
            0 => None,
            secs => Some(started + Duration::from_secs(u64::from(secs))),
        };
        Ok(Observation { dealer, identity, deadline })
    }
}

/// A live observation.
pub struct Observation {
    dealer: Dealer,
    identity: Vec<u8>,
    deadline: Option<Instant>,
}

impl Observation {
    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    /// When the node will drop the observation, if ever.
    pub fn deadline(&self) -> Option<Instant> {
        self.deadline
    }

    pub fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Next meta-protocol line exactly as received. `Ok(None)` on timeout or
    /// once the observation has expired.
    pub fn next_line(&self, timeout: Duration) -> Result<Option<String>, ClientError> {
        let wait = match self.deadline {
            Some(d) => timeout.min(d.saturating_duration_since(Instant::now())),
            None => timeout,
        };
        let Some(frame) = self.dealer.recv(wait)? else { return Ok(None) };
        let msg = Message::decode(&frame)?;
        String::from_utf8(msg.payload).map(Some).map_err(|_| ClientError::Protocol("event is not UTF-8".into()))
    }

    pub fn next(&self, timeout: Duration) -> Result<Option<MetaRecord>, ClientError> {
        match self.next_line(timeout)? {
            Some(line) => Ok(Some(parse_meta_record(&line)?)),
            None => Ok(None),
        }
    }
}
