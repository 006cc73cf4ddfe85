//! In-process transport. Endpoints live in a process-wide registry keyed by
//! name, like ZeroMQ's `inproc`. No encryption; clients declare their public
//! key and servers take it on trust.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock, Mutex, Weak};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, select, unbounded, Receiver, RecvTimeoutError, Sender};

use super::{ClientKeys, Handler, Inbound, PublicKey, PushError, TransportError};

const WORKERS: usize = 4;

static REGISTRY: LazyLock<Mutex<HashMap<String, Slot>>> = LazyLock::new(Default::default);
static NEXT_ID: AtomicU64 = AtomicU64::new(1);

enum Slot {
    Reply { id: u64, jobs: Sender<Job> },
    Router { id: u64, router: Weak<MemRouter> },
}

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

fn registry() -> std::sync::MutexGuard<'static, HashMap<String, Slot>> {
    REGISTRY.lock().unwrap_or_else(|e| e.into_inner())
}

fn remove_slot(name: &str, id: u64) {
    let mut reg = registry();
    let ours = match reg.get(name) {
        Some(Slot::Reply { id: i, .. }) | Some(Slot::Router { id: i, .. }) => *i == id,
        None => false,
    };
    if ours {
        reg.remove(name);
    }
}

/// Polls the registry until `find` succeeds or `timeout` passes.
fn wait_for<T>(timeout: Duration, mut find: impl FnMut() -> Option<T>) -> Result<T, TransportError> {
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(found) = find() {
            return Ok(found);
        }
        if Instant::now() >= deadline {
            return Err(TransportError::Timeout);
        }
        thread::sleep(Duration::from_millis(1));
    }
}

/// One frame crossing an in-memory endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    /// Name of the endpoint the frame went through.
    pub endpoint: String,
    /// The client on the other side.
    pub peer: Option<PublicKey>,
    /// True for client to endpoint, false for endpoint to client.
    pub inbound: bool,
    pub len: usize,
}

type TraceBuffer = Mutex<Vec<TraceEvent>>;
type TraceLog = Arc<TraceBuffer>;

static TRACERS: LazyLock<Mutex<Vec<Weak<TraceBuffer>>>> = LazyLock::new(Default::default);
static ACTIVE_TRACERS: AtomicUsize = AtomicUsize::new(0);

/// Records every in-memory frame while alive.
pub struct Trace {
    log: TraceLog,
}

impl Trace {
    pub fn start() -> Trace {
        let log = TraceLog::default();
        TRACERS.lock().unwrap().push(Arc::downgrade(&log));
        ACTIVE_TRACERS.fetch_add(1, Ordering::SeqCst);
        Trace { log }
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.log.lock().unwrap().clone()
    }
}

impl Drop for Trace {
    fn drop(&mut self) {
        ACTIVE_TRACERS.fetch_sub(1, Ordering::SeqCst);
        TRACERS.lock().unwrap().retain(|w| w.strong_count() > 0 && !std::ptr::eq(w.as_ptr(), Arc::as_ptr(&self.log)));
    }
}

fn trace(endpoint: &str, peer: Option<PublicKey>, inbound: bool, len: usize) {
    if ACTIVE_TRACERS.load(Ordering::Relaxed) == 0 {
        return;
    }
    let event = TraceEvent { endpoint: endpoint.to_string(), peer, inbound, len };
    for log in TRACERS.lock().unwrap().iter().filter_map(Weak::upgrade) {
        log.lock().unwrap().push(event.clone());
    }
}

struct Job {
    inbound: Inbound,
    reply: Sender<Vec<u8>>,
}

pub(crate) struct MemReplyServer {
    name: String,
    id: u64,
    stop: Mutex<Option<Sender<()>>>,
}

impl MemReplyServer {
    pub(crate) fn bind(name: &str, handler: Handler) -> Result<MemReplyServer, TransportError> {
        let (jobs_tx, jobs_rx) = unbounded::<Job>();
        let (stop_tx, stop_rx) = bounded::<()>(0);
        let id = next_id();
        {
            let mut reg = registry();
            if reg.contains_key(name) {
                return Err(TransportError::Bind(super::Endpoint::memory(name), "address in use".into()));
            }
            reg.insert(name.to_string(), Slot::Reply { id, jobs: jobs_tx });
        }
        for _ in 0..WORKERS {
            let jobs = jobs_rx.clone();
            let stop = stop_rx.clone();
            let handler = handler.clone();
            let name = name.to_string();
            thread::spawn(move || loop {
                select! {
                    recv(jobs) -> job => match job {
                        Ok(job) => {
                            let peer = job.inbound.peer;
                            let h = handler.clone();
                            let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| h(job.inbound)));
                            if let Ok(out) = out {
                                trace(&name, peer, false, out.len());
                                let _ = job.reply.send(out);
                            }
                        }
                        Err(_) => break,
                    },
                    recv(stop) -> _ => break,
                }
            });
        }
        Ok(MemReplyServer { name: name.to_string(), id, stop: Mutex::new(Some(stop_tx)) })
    }

    pub(crate) fn shutdown(&self) {
        remove_slot(&self.name, self.id);
        self.stop.lock().unwrap().take();
    }
}

pub(crate) struct MemReplyConnection {
    name: String,
    jobs: Sender<Job>,
    peer: PublicKey,
}

impl MemReplyConnection {
    pub(crate) fn connect(name: &str, client: &ClientKeys, timeout: Duration) -> Result<Self, TransportError> {
        let jobs = wait_for(timeout, || match registry().get(name) {
            Some(Slot::Reply { jobs, .. }) => Some(jobs.clone()),
            _ => None,
        })?;
        Ok(MemReplyConnection { name: name.to_string(), jobs, peer: client.keys.public() })
    }

    pub(crate) fn request(&mut self, frame: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let (tx, rx) = bounded(1);
        trace(&self.name, Some(self.peer), true, frame.len());
        let job = Job { inbound: Inbound { frame: frame.to_vec(), peer: Some(self.peer) }, reply: tx };
        self.jobs.send(job).map_err(|_| TransportError::Closed)?;
        match rx.recv_timeout(timeout) {
            Ok(reply) => Ok(reply),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

struct Live {
    conn: u64,
    peer: PublicKey,
    tx: Sender<Vec<u8>>,
}

#[derive(Default)]
struct Table {
    live: HashMap<Vec<u8>, Live>,
    gone: HashSet<Vec<u8>>,
}

pub(crate) struct MemRouter {
    name: String,
    id: u64,
    stopped: AtomicBool,
    table: Mutex<Table>,
}

impl MemRouter {
    pub(crate) fn bind(name: &str) -> Result<Arc<MemRouter>, TransportError> {
        let id = next_id();
        let router =
            Arc::new(MemRouter { name: name.to_string(), id, stopped: AtomicBool::new(false), table: Default::default() });
        let mut reg = registry();
        if reg.contains_key(name) {
            return Err(TransportError::Bind(super::Endpoint::memory(name), "address in use".into()));
        }
        reg.insert(name.to_string(), Slot::Router { id, router: Arc::downgrade(&router) });
        Ok(router)
    }

    pub(crate) fn push(&self, identity: &[u8], frame: &[u8]) -> Result<(), PushError> {
        let mut table = self.table.lock().unwrap();
        match table.live.get(identity) {
            Some(live) => {
                trace(&self.name, Some(live.peer), false, frame.len());
                if live.tx.send(frame.to_vec()).is_ok() {
                    return Ok(());
                }
                table.live.remove(identity);
                table.gone.insert(identity.to_vec());
                Err(PushError::Disconnected)
            }
            None if table.gone.contains(identity) => Err(PushError::Disconnected),
            None => Err(PushError::NotConnected),
        }
    }

    pub(crate) fn is_connected(&self, identity: &[u8]) -> bool {
        self.table.lock().unwrap().live.contains_key(identity)
    }

    pub(crate) fn forget(&self, identity: &[u8]) {
        self.table.lock().unwrap().gone.remove(identity);
    }

    pub(crate) fn shutdown(&self) {
        if !self.stopped.swap(true, Ordering::SeqCst) {
            remove_slot(&self.name, self.id);
            let mut table = self.table.lock().unwrap();
            let ids: Vec<Vec<u8>> = table.live.drain().map(|(k, _)| k).collect();
            table.gone.extend(ids);
        }
    }
}

impl Drop for MemRouter {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub(crate) struct MemDealer {
    router: Weak<MemRouter>,
    identity: Vec<u8>,
    conn: u64,
    rx: Receiver<Vec<u8>>,
}

impl MemDealer {
    pub(crate) fn connect(
        name: &str,
        identity: &[u8],
        client: &ClientKeys,
        timeout: Duration,
    ) -> Result<MemDealer, TransportError> {
        let router = wait_for(timeout, || match registry().get(name) {
            Some(Slot::Router { router, .. }) => router.upgrade(),
            _ => None,
        })?;
        let (tx, rx) = unbounded();
        let conn = next_id();
        let mut table = router.table.lock().unwrap();
        if table.live.contains_key(identity) {
            return Err(TransportError::Rejected("identity in use".into()));
        }
        table.gone.remove(identity);
        table.live.insert(identity.to_vec(), Live { conn, peer: client.keys.public(), tx });
        drop(table);
        Ok(MemDealer { router: Arc::downgrade(&router), identity: identity.to_vec(), conn, rx })
    }

    pub(crate) fn recv(&self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        match self.rx.recv_timeout(timeout) {
            Ok(frame) => Ok(Some(frame)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

impl Drop for MemDealer {
    fn drop(&mut self) {
        if let Some(router) = self.router.upgrade() {
            let mut table = router.table.lock().unwrap();
            if table.live.get(&self.identity).is_some_and(|l| l.conn == self.conn) {
                table.live.remove(&self.identity);
                table.gone.insert(self.identity.clone());
            }
        }
    }
}
