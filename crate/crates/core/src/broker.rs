//! Notifications: a client and a server exchange payloads through a store's
//! `/notification/request/...` and `/notification/response/...` paths without
//! ever connecting to each other.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde_json::json;

use crate::client::{Client, ClientError, Observation};
use crate::codec::{ContentFormat, ObserveMode};
use crate::node::MetaRecord;
use crate::store::{REQUEST_PREFIX, RESPONSE_PREFIX};
use crate::transport::TransportError;

const POLL: Duration = Duration::from_millis(100);

pub fn request_path(service: &str, id: &str) -> String {
    format!("{REQUEST_PREFIX}{service}/{id}")
}

pub fn response_path(service: &str, id: &str) -> String {
    format!("{RESPONSE_PREFIX}{service}/{id}")
}

/// `/notification/request/<s>/<id>` to `/notification/response/<s>/<id>`.
pub fn response_for(request: &str) -> Option<String> {
    request.strip_prefix(REQUEST_PREFIX).map(|rest| format!("{RESPONSE_PREFIX}{rest}"))
}

/// Computes a response payload; an `Err` is sent back as `{"error": ...}`.
pub type NotificationHandler = dyn Fn(&[u8]) -> Result<Vec<u8>, String> + Send + Sync;

/// Tokens a worker needs on the store.
#[derive(Debug, Clone)]
pub struct WorkerTokens {
    /// GET on `/notification/request/<service>/*`.
    pub observe: Vec<u8>,
    /// POST on `/notification/response/<service>/*`.
    pub respond: Vec<u8>,
}

/// A running server-side worker. Stops on drop.
pub struct Worker {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Worker {
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Observes every request for `service` and answers each with
/// `handler(payload)`. The observation is renewed when it expires.
pub fn serve_notifications(
    client: Arc<Client>,
    service: &str,
    tokens: WorkerTokens,
    handler: Arc<NotificationHandler>,
    max_age: Option<u32>,
) -> Result<Worker, ClientError> {
    let pattern = format!("{REQUEST_PREFIX}{service}/*");
    let mut observation = client.observe(&pattern, &tokens.observe, ObserveMode::Data, max_age)?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            if observation.expired() {
                match client.observe(&pattern, &tokens.observe, ObserveMode::Data, max_age) {
                    Ok(o) => observation = o,
                    Err(e) => {
                        warn!("re-observing {pattern}: {e}");
                        thread::sleep(POLL);
                        continue;
                    }
                }
            }
            match observation.next(POLL) {
                Ok(Some(event)) => respond(&client, &tokens.respond, handler.as_ref(), event),
                Ok(None) => {}
                Err(e) => {
                    warn!("worker on {pattern}: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    });
    Ok(Worker { stop, thread: Some(thread) })
}

fn respond(client: &Client, token: &[u8], handler: &NotificationHandler, event: MetaRecord) {
    let Some(path) = response_for(&event.uri_path) else {
        debug!("ignoring event on {}", event.uri_path);
        return;
    };
    let (format, payload) = match catch_unwind(AssertUnwindSafe(|| handler(&event.data))) {
        Ok(Ok(out)) => (event.format, out),
        Ok(Err(text)) => (ContentFormat::Json, json!({ "error": text }).to_string().into_bytes()),
        Err(_) => (ContentFormat::Json, json!({ "error": "handler panicked" }).to_string().into_bytes()),
    };
    if let Err(e) = client.post(&path, token, format, &payload) {
        warn!("posting response to {path}: {e}");
    }
}

/// Tokens a client needs on the store.
#[derive(Debug, Clone)]
pub struct RequestTokens {
    /// GET on `/notification/response/<service>/*`.
    pub observe: Vec<u8>,
    /// POST on `/notification/request/<service>/*`.
    pub request: Vec<u8>,
}

/// One exchange: observe the response path, post the request, wait for the
/// answer. The request id is a fresh v4 UUID.
pub fn notify_request(
    client: &Client,
    service: &str,
    tokens: &RequestTokens,
    format: ContentFormat,
    payload: &[u8],
    timeout: Duration,
) -> Result<MetaRecord, ClientError> {
    let id = uuid::Uuid::new_v4().to_string();
    let observation = open_exchange(client, service, &id, tokens, timeout)?;
    client.post(&request_path(service, &id), &tokens.request, format, payload)?;
    wait(&observation, timeout)
}

/// Registers the callback for request `id` without posting anything.
pub fn open_exchange(
    client: &Client,
    service: &str,
    id: &str,
    tokens: &RequestTokens,
    timeout: Duration,
) -> Result<Observation, ClientError> {
    let max_age = timeout.as_secs().saturating_add(1).min(u64::from(u32::MAX)) as u32;
    client.observe(&response_path(service, id), &tokens.observe, ObserveMode::Notify, Some(max_age))
}

/// The first event on an exchange, or a timeout.
pub fn wait(observation: &Observation, timeout: Duration) -> Result<MetaRecord, ClientError> {
    let deadline = Instant::now() + timeout;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(TransportError::Timeout.into());
        }
        if let Some(event) = observation.next(left)? {
            return Ok(event);
        }
    }
}
