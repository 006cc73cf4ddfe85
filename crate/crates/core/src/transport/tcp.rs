//! Network transport: ZMTP over TCP with CURVE. One thread per connection.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError};
use log::{debug, warn};

use super::curve::{client_handshake, server_handshake, KeyPair, SendHalf, SocketType};
use super::{ClientKeys, Endpoint, Handler, Inbound, PushError, TransportError};

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);
const PUSH_TIMEOUT: Duration = Duration::from_secs(5);

static NEXT_CONN: AtomicU64 = AtomicU64::new(1);

fn bare_host(host: &str) -> &str {
    host.strip_prefix('[').and_then(|h| h.strip_suffix(']')).unwrap_or(host)
}

fn resolve(host: &str, port: u16) -> Result<SocketAddr, TransportError> {
    (bare_host(host), port)
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| TransportError::Protocol(format!("cannot resolve {host}")))
}

fn bind(host: &str, port: u16) -> Result<TcpListener, TransportError> {
    TcpListener::bind((bare_host(host), port)).map_err(|e| TransportError::Bind(Endpoint::tcp(host, port), e.to_string()))
}

/// Connects, retrying refused attempts until `deadline` like a ZeroMQ socket
/// that reconnects in the background.
fn connect(host: &str, port: u16, deadline: Instant) -> Result<TcpStream, TransportError> {
    let addr = resolve(host, port)?;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(TransportError::Timeout);
        }
        match TcpStream::connect_timeout(&addr, left) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => debug!("connect {addr}: {e}"),
        }
        thread::sleep(Duration::from_millis(20).min(left));
    }
}

/// State shared between a listener's owner and its accept loop.
struct Listening {
    addr: SocketAddr,
    stopped: AtomicBool,
    conns: Mutex<HashMap<u64, TcpStream>>,
}

impl Listening {
    fn track(&self, id: u64, stream: &TcpStream) {
        if let Ok(clone) = stream.try_clone() {
            self.conns.lock().unwrap().insert(id, clone);
        }
    }

    fn untrack(&self, id: u64) {
        self.conns.lock().unwrap().remove(&id);
    }

    fn stop(&self) {
        if self.stopped.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        for (_, s) in self.conns.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }

    fn accept_loop(self: Arc<Self>, listener: TcpListener, on_conn: impl Fn(u64, TcpStream) + Send + Sync + 'static) {
        let on_conn = Arc::new(on_conn);
        thread::spawn(move || {
            for stream in listener.incoming() {
                if self.stopped.load(Ordering::SeqCst) {
                    break;
                }
                let stream = match stream {
                    Ok(s) => s,
                    Err(e) => {
                        warn!("accept on {}: {e}", self.addr);
                        continue;
                    }
                };
                let id = NEXT_CONN.fetch_add(1, Ordering::Relaxed);
                self.track(id, &stream);
                let on_conn = on_conn.clone();
                let shared = self.clone();
                thread::spawn(move || {
                    on_conn(id, stream);
                    shared.untrack(id);
                });
            }
        });
    }
}

fn listening(listener: &TcpListener) -> Result<Arc<Listening>, TransportError> {
    let mut addr = listener.local_addr()?;
    if addr.ip().is_unspecified() {
        addr.set_ip(if addr.is_ipv4() { [127, 0, 0, 1].into() } else { std::net::Ipv6Addr::LOCALHOST.into() });
    }
    Ok(Arc::new(Listening { addr, stopped: AtomicBool::new(false), conns: Mutex::new(HashMap::new()) }))
}

pub(crate) struct TcpReplyServer {
    shared: Arc<Listening>,
    port: u16,
}

impl TcpReplyServer {
    pub(crate) fn bind(host: &str, port: u16, keys: KeyPair, handler: Handler) -> Result<Self, TransportError> {
        let listener = bind(host, port)?;
        let port = listener.local_addr()?.port();
        let shared = listening(&listener)?;
        shared.clone().accept_loop(listener, move |_, stream| {
            if let Err(e) = serve_reply_conn(stream, &keys, &handler) {
                debug!("reply connection ended: {e}");
            }
        });
        Ok(TcpReplyServer { shared, port })
    }

    pub(crate) fn port(&self) -> u16 {
        self.port
    }

    pub(crate) fn shutdown(&self) {
        self.shared.stop();
    }
}

/// Splits a REQ envelope: everything up to and including the first empty
/// part, then the body.
fn split_envelope(mut parts: Vec<Vec<u8>>) -> Result<(Vec<Vec<u8>>, Vec<u8>), TransportError> {
    let delim = parts
        .iter()
        .position(Vec::is_empty)
        .ok_or_else(|| TransportError::Protocol("missing envelope delimiter".into()))?;
    let body = parts.split_off(delim + 1);
    Ok((parts, body.concat()))
}

fn serve_reply_conn(mut stream: TcpStream, keys: &KeyPair, handler: &Handler) -> Result<(), TransportError> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
    let (mut tx, mut rx, peer) = server_handshake(&mut stream, keys, SocketType::Rep, |_| Ok(()))?;
    stream.set_read_timeout(None)?;
    loop {
        let parts = rx.recv(&mut stream)?;
        let (envelope, body) = split_envelope(parts)?;
        let reply = handler(Inbound { frame: body, peer: Some(peer.key) });
        let mut out: Vec<&[u8]> = envelope.iter().map(Vec::as_slice).collect();
        out.push(&reply);
        tx.send(&mut stream, &out)?;
    }
}

pub(crate) struct TcpReplyConnection {
    stream: TcpStream,
    tx: SendHalf,
    rx: super::curve::RecvHalf,
    broken: bool,
}

impl TcpReplyConnection {
    pub(crate) fn connect(host: &str, port: u16, client: &ClientKeys, timeout: Duration) -> Result<Self, TransportError> {
        let server = client.server_key()?;
        let deadline = Instant::now() + timeout;
        let mut stream = connect(host, port, deadline)?;
        stream.set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1))))?;
        let (tx, rx, _) = client_handshake(&mut stream, &client.keys, &server, SocketType::Req, b"")?;
        Ok(TcpReplyConnection { stream, tx, rx, broken: false })
    }

    pub(crate) fn request(&mut self, frame: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        if self.broken {
            return Err(TransportError::Closed);
        }
        let result = self.exchange(frame, timeout);
        if result.is_err() {
            self.broken = true;
            let _ = self.stream.shutdown(Shutdown::Both);
        }
        result
    }

    fn exchange(&mut self, frame: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        self.stream.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        self.tx.send(&mut self.stream, &[b"", frame])?;
        let (_, body) = split_envelope(self.rx.recv(&mut self.stream)?)?;
        Ok(body)
    }
}

struct Peer {
    conn: u64,
    writer: Option<Arc<Mutex<(TcpStream, SendHalf)>>>,
}

#[derive(Default)]
struct RouteTable {
    live: HashMap<Vec<u8>, Peer>,
    gone: HashSet<Vec<u8>>,
}

impl RouteTable {
    fn depart(&mut self, identity: &[u8], conn: u64) {
        if self.live.get(identity).is_some_and(|p| p.conn == conn) {
            self.live.remove(identity);
            self.gone.insert(identity.to_vec());
        }
    }
}

pub(crate) struct TcpRouter {
    shared: Arc<Listening>,
    table: Arc<Mutex<RouteTable>>,
    port: u16,
}

impl TcpRouter {
    pub(crate) fn bind(host: &str, port: u16, keys: KeyPair) -> Result<Arc<TcpRouter>, TransportError> {
        let listener = bind(host, port)?;
        let port = listener.local_addr()?.port();
        let shared = listening(&listener)?;
        let table: Arc<Mutex<RouteTable>> = Default::default();
        let t = table.clone();
        shared.clone().accept_loop(listener, move |conn, stream| {
            if let Err(e) = serve_router_conn(conn, stream, &keys, &t) {
                debug!("router connection ended: {e}");
            }
        });
        Ok(Arc::new(TcpRouter { shared, table, port }))
    }

    pub(crate) fn port(&self) -> u16 {
        self.port
    }

    pub(crate) fn push(&self, identity: &[u8], frame: &[u8]) -> Result<(), PushError> {
        let (conn, writer) = {
            let table = self.table.lock().unwrap();
            match table.live.get(identity) {
                Some(Peer { conn, writer: Some(w) }) => (*conn, w.clone()),
                Some(Peer { writer: None, .. }) => return Err(PushError::NotConnected),
                None if table.gone.contains(identity) => return Err(PushError::Disconnected),
                None => return Err(PushError::NotConnected),
            }
        };
        let mut w = writer.lock().unwrap();
        let (stream, tx) = &mut *w;
        if tx.send(stream, &[frame]).is_err() {
            let _ = stream.shutdown(Shutdown::Both);
            drop(w);
            self.table.lock().unwrap().depart(identity, conn);
            return Err(PushError::Disconnected);
        }
        Ok(())
    }

    pub(crate) fn is_connected(&self, identity: &[u8]) -> bool {
        self.table.lock().unwrap().live.get(identity).is_some_and(|p| p.writer.is_some())
    }

    pub(crate) fn forget(&self, identity: &[u8]) {
        self.table.lock().unwrap().gone.remove(identity);
    }

    pub(crate) fn shutdown(&self) {
        self.shared.stop();
    }
}

impl Drop for TcpRouter {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_router_conn(
    conn: u64,
    mut stream: TcpStream,
    keys: &KeyPair,
    table: &Mutex<RouteTable>,
) -> Result<(), TransportError> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
    let handshake = server_handshake(&mut stream, keys, SocketType::Router, |peer| {
        if peer.identity.is_empty() {
            return Err("identity required".into());
        }
        let mut t = table.lock().unwrap();
        if t.live.contains_key(&peer.identity) {
            return Err("identity in use".into());
        }
        t.gone.remove(&peer.identity);
        t.live.insert(peer.identity.clone(), Peer { conn, writer: None });
        Ok(())
    });
    let (tx, mut rx, peer) = match handshake {
        Ok(h) => h,
        Err(e) => {
            // an admitted identity whose READY failed must be released
            table.lock().unwrap().live.retain(|_, p| p.conn != conn);
            return Err(e);
        }
    };
    stream.set_read_timeout(None)?;
    stream.set_write_timeout(Some(PUSH_TIMEOUT))?;
    let writer = Arc::new(Mutex::new((stream.try_clone()?, tx)));
    if let Some(p) = table.lock().unwrap().live.get_mut(&peer.identity) {
        p.writer = Some(writer);
    }
    // dealers send nothing we act on; reading detects the disconnect
    let result = loop {
        if let Err(e) = rx.recv(&mut stream) {
            break e;
        }
    };
    table.lock().unwrap().depart(&peer.identity, conn);
    Err(result)
}

pub(crate) struct TcpDealer {
    stream: TcpStream,
    rx: Receiver<Vec<u8>>,
}

impl TcpDealer {
    pub(crate) fn connect(
        host: &str,
        port: u16,
        identity: &[u8],
        client: &ClientKeys,
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let server = client.server_key()?;
        let deadline = Instant::now() + timeout;
        let mut stream = connect(host, port, deadline)?;
        stream.set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1))))?;
        let (_tx, mut rx, _) = client_handshake(&mut stream, &client.keys, &server, SocketType::Dealer, identity)?;
        stream.set_read_timeout(None)?;
        let (frames_tx, frames_rx) = unbounded();
        let mut reader = stream.try_clone()?;
        thread::spawn(move || {
            while let Ok(parts) = rx.recv(&mut reader) {
                if frames_tx.send(parts.concat()).is_err() {
                    break;
                }
            }
        });
        Ok(TcpDealer { stream, rx: frames_rx })
    }

    pub(crate) fn recv(&self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        match self.rx.recv_timeout(timeout) {
            Ok(frame) => Ok(Some(frame)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

impl Drop for TcpDealer {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
        let _ = self.stream.flush();
    }
}
