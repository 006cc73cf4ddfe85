//! Reference store: key/value and time-series resources, the notification
//! broker routes, an append-only journal and an audit log.
//!
//! Paths:
//!
//! - `/kv/<segment>+`: POST stores, GET reads, DELETE removes.
//! - `/ts/<id>`: POST appends a JSON point, GET lists every point, DELETE
//!   drops the series.
//! - `/ts/<id>/latest` and `/ts/<id>/range/<from>/<to>` (inclusive, ms).
//! - `/notification/request/<service>/<id>` and
//!   `/notification/response/<service>/<id>`: POST only, turned into events
//!   and never stored.
//!
//! # Journal format
//!
//! `journal.log` in the data directory is a sequence of records, each a
//! big-endian `u32` body length followed by the body:
//!
//! ```text
//! u64 timestamp | u16 path length | path | u32 format | u32 value length | value
//! ```
//!
//! `format` is the content format number, or `0xFFFFFFFF` for a delete. The
//! journal is replayed on open; a truncated final record is discarded.
//!
//! `audit.log` holds one [`AuditRecord::to_line`] per handled request.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use serde_json::{json, Value};
use thiserror::Error;

use crate::codec::{Code, ContentFormat, ObserveMode};
use crate::node::catalogue::REL_CONTENT_TYPE;
use crate::node::{AuditRecord, Events, Item, Reply, Service, ServiceError, ServiceRequest};

pub const JOURNAL_FILE: &str = "journal.log";
pub const AUDIT_FILE: &str = "audit.log";
pub const REQUEST_PREFIX: &str = "/notification/request/";
pub const RESPONSE_PREFIX: &str = "/notification/response/";

const TOMBSTONE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("journal i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt journal record at byte {0}")]
    Corrupt(u64),
}

/// One journal entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalRecord {
    pub timestamp: u64,
    pub path: String,
    /// `None` marks a delete.
    pub format: Option<ContentFormat>,
    pub value: Vec<u8>,
}

impl JournalRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(18 + self.path.len() + self.value.len());
        body.extend_from_slice(&self.timestamp.to_be_bytes());
        body.extend_from_slice(&(self.path.len() as u16).to_be_bytes());
        body.extend_from_slice(self.path.as_bytes());
        body.extend_from_slice(&self.format.map_or(TOMBSTONE, |f| f.value()).to_be_bytes());
        body.extend_from_slice(&(self.value.len() as u32).to_be_bytes());
        body.extend_from_slice(&self.value);
        let mut out = (body.len() as u32).to_be_bytes().to_vec();
        out.extend_from_slice(&body);
        out
    }

    /// Decodes one record body (without the length prefix).
    pub fn decode(body: &[u8]) -> Option<JournalRecord> {
        let take = |b: &mut &[u8], n: usize| -> Option<Vec<u8>> {
            if b.len() < n {
                return None;
            }
            let (head, tail) = b.split_at(n);
            *b = tail;
            Some(head.to_vec())
        };
        let mut b = body;
        let timestamp = u64::from_be_bytes(take(&mut b, 8)?.try_into().ok()?);
        let plen = u16::from_be_bytes(take(&mut b, 2)?.try_into().ok()?) as usize;
        let path = String::from_utf8(take(&mut b, plen)?).ok()?;
        let format = match u32::from_be_bytes(take(&mut b, 4)?.try_into().ok()?) {
            TOMBSTONE => None,
            v => Some(ContentFormat::from_value(v).ok()?),
        };
        let vlen = u32::from_be_bytes(take(&mut b, 4)?.try_into().ok()?) as usize;
        let value = take(&mut b, vlen)?;
        b.is_empty().then_some(JournalRecord { timestamp, path, format, value })
    }
}

/// Reads every complete record from `bytes`. Returns the records and the
/// length of the valid prefix.
fn read_journal(bytes: &[u8]) -> Result<(Vec<JournalRecord>, usize), StoreError> {
    let mut records = Vec::new();
    let mut pos = 0;
    while bytes.len() - pos >= 4 {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let Some(body) = bytes.get(pos + 4..pos + 4 + len) else { break };
        let rec = JournalRecord::decode(body).ok_or(StoreError::Corrupt(pos as u64))?;
        records.push(rec);
        pos += 4 + len;
    }
    Ok((records, pos))
}

/// A time-series point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsPoint {
    pub timestamp: u64,
    /// JSON text.
    pub value: Vec<u8>,
}

impl TsPoint {
    fn to_json(&self) -> Value {
        let data: Value = serde_json::from_slice(&self.value).unwrap_or(Value::Null);
        json!({ "timestamp": self.timestamp, "data": data })
    }
}

/// Points with `from <= timestamp <= to`, in order. `points` must be sorted.
pub fn range(points: &[TsPoint], from: u64, to: u64) -> &[TsPoint] {
    let lo = points.partition_point(|p| p.timestamp < from);
    let hi = points.partition_point(|p| p.timestamp <= to);
    &points[lo..hi.max(lo)]
}

#[derive(Default)]
struct State {
    kv: BTreeMap<String, (ContentFormat, Vec<u8>)>,
    ts: BTreeMap<String, Vec<TsPoint>>,
    journal: Option<File>,
}

impl State {
    fn apply(&mut self, rec: JournalRecord) {
        if let Some(id) = rec.path.strip_prefix("/ts/") {
            match rec.format {
                Some(_) => self.ts.entry(id.to_string()).or_default().push(TsPoint { timestamp: rec.timestamp, value: rec.value }),
                None => {
                    self.ts.remove(id);
                }
            }
        } else {
            match rec.format {
                Some(f) => {
                    self.kv.insert(rec.path, (f, rec.value));
                }
                None => {
                    self.kv.remove(&rec.path);
                }
            }
        }
    }

    /// Journals then applies.
    fn commit(&mut self, rec: JournalRecord) -> Result<(), ServiceError> {
        if let Some(file) = self.journal.as_mut() {
            file.write_all(&rec.encode())
                .and_then(|_| file.flush())
                .map_err(|e| ServiceError::Internal(format!("journal write: {e}")))?;
        }
        self.apply(rec);
        Ok(())
    }
}

enum Route<'a> {
    Kv,
    Series(&'a str),
    Latest(&'a str),
    Range(&'a str, &'a str, &'a str),
    Notification,
}

fn route(path: &str) -> Option<Route<'_>> {
    if let Some(rest) = path.strip_prefix("/kv/") {
        return (!rest.is_empty() && rest.split('/').all(|s| !s.is_empty())).then_some(Route::Kv);
    }
    if let Some(rest) = path.strip_prefix("/ts/") {
        let parts: Vec<&str> = rest.split('/').collect();
        return match parts.as_slice() {
            [id] if !id.is_empty() => Some(Route::Series(id)),
            [id, "latest"] if !id.is_empty() => Some(Route::Latest(id)),
            [id, "range", from, to] if !id.is_empty() => Some(Route::Range(id, from, to)),
            _ => None,
        };
    }
    for prefix in [REQUEST_PREFIX, RESPONSE_PREFIX] {
        if let Some(rest) = path.strip_prefix(prefix) {
            let parts: Vec<&str> = rest.split('/').collect();
            if parts.len() == 2 && parts.iter().all(|p| !p.is_empty()) {
                return Some(Route::Notification);
            }
        }
    }
    None
}

fn mime(format: ContentFormat) -> &'static str {
    match format {
        ContentFormat::Text => "text/plain",
        ContentFormat::Binary => "application/octet-stream",
        ContentFormat::Json => "application/json",
    }
}

pub struct Store {
    state: Mutex<State>,
    audit_log: Option<Mutex<File>>,
    audits: Mutex<Vec<AuditRecord>>,
}

impl Store {
    /// A store with no files.
    pub fn in_memory() -> Store {
        Store { state: Mutex::default(), audit_log: None, audits: Mutex::default() }
    }

    /// Opens (or creates) a store in `dir`, replaying its journal.
    pub fn open(dir: &Path) -> Result<Store, StoreError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(JOURNAL_FILE);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (records, valid) = read_journal(&bytes)?;
        if valid < bytes.len() {
            log::warn!("discarding {} trailing journal bytes", bytes.len() - valid);
            file.set_len(valid as u64)?;
        }
        let mut state = State::default();
        for r in records {
            state.apply(r);
        }
        state.journal = Some(file);
        let audit = OpenOptions::new().append(true).create(true).open(dir.join(AUDIT_FILE))?;
        Ok(Store { state: Mutex::new(state), audit_log: Some(Mutex::new(audit)), audits: Mutex::default() })
    }

    fn state(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Audit records of this process, oldest first.
    pub fn audit_records(&self) -> Vec<AuditRecord> {
        self.audits.lock().unwrap().clone()
    }

    pub fn kv_get(&self, path: &str) -> Option<(ContentFormat, Vec<u8>)> {
        self.state().kv.get(path).cloned()
    }

    pub fn series(&self, id: &str) -> Option<Vec<TsPoint>> {
        self.state().ts.get(id).cloned()
    }

    fn kv(&self, req: &ServiceRequest, events: &Events<'_>) -> Result<Reply, ServiceError> {
        let mut state = self.state();
        match req.method {
            Code::Post => {
                let rec = JournalRecord {
                    timestamp: events.now_ms(),
                    path: req.path.clone(),
                    format: Some(req.format),
                    value: req.payload.clone(),
                };
                state.commit(rec)?;
                events.emit(&req.path, req.format, &req.payload, ObserveMode::Data);
                Ok(Reply::ack())
            }
            Code::Get => {
                let (format, value) = state.kv.get(&req.path).ok_or(ServiceError::NotFound)?;
                Ok(Reply::content(*format, value.clone()))
            }
            _ => {
                if !state.kv.contains_key(&req.path) {
                    return Err(ServiceError::NotFound);
                }
                state.commit(JournalRecord { timestamp: events.now_ms(), path: req.path.clone(), format: None, value: Vec::new() })?;
                Ok(Reply::deleted())
            }
        }
    }

    fn series_root(&self, id: &str, req: &ServiceRequest, events: &Events<'_>) -> Result<Reply, ServiceError> {
        let mut state = self.state();
        match req.method {
            Code::Post => {
                if req.format != ContentFormat::Json {
                    return Err(ServiceError::UnsupportedFormat);
                }
                if serde_json::from_slice::<Value>(&req.payload).is_err() {
                    return Err(ServiceError::BadRequest("payload is not JSON".into()));
                }
                let last = state.ts.get(id).and_then(|p| p.last()).map_or(0, |p| p.timestamp);
                let timestamp = events.now_ms().max(last);
                state.commit(JournalRecord {
                    timestamp,
                    path: req.path.clone(),
                    format: Some(ContentFormat::Json),
                    value: req.payload.clone(),
                })?;
                events.emit(&req.path, ContentFormat::Json, &req.payload, ObserveMode::Data);
                Ok(Reply::content(ContentFormat::Json, json!({ "timestamp": timestamp }).to_string()))
            }
            Code::Get => {
                let points = state.ts.get(id).ok_or(ServiceError::NotFound)?;
                Ok(points_reply(points))
            }
            _ => {
                if !state.ts.contains_key(id) {
                    return Err(ServiceError::NotFound);
                }
                state.commit(JournalRecord { timestamp: events.now_ms(), path: req.path.clone(), format: None, value: Vec::new() })?;
                Ok(Reply::deleted())
            }
        }
    }
}

fn points_reply(points: &[TsPoint]) -> Reply {
    let list: Vec<Value> = points.iter().map(TsPoint::to_json).collect();
    Reply::content(ContentFormat::Json, Value::Array(list).to_string())
}

impl Service for Store {
    fn handle(&self, req: &ServiceRequest, events: &Events<'_>) -> Result<Reply, ServiceError> {
        match route(&req.path).ok_or(ServiceError::NotFound)? {
            Route::Kv => self.kv(req, events),
            Route::Series(id) => self.series_root(id, req, events),
            Route::Latest(id) if req.method == Code::Get => {
                let state = self.state();
                let point = state.ts.get(id).and_then(|p| p.last()).ok_or(ServiceError::NotFound)?;
                Ok(Reply::content(ContentFormat::Json, point.to_json().to_string()))
            }
            Route::Range(id, from, to) if req.method == Code::Get => {
                let bad = |_| ServiceError::BadRequest("range bounds".into());
                let from: u64 = from.parse().map_err(bad)?;
                let to: u64 = to.parse().map_err(bad)?;
                if from > to {
                    return Err(ServiceError::BadRequest("range from > to".into()));
                }
                let state = self.state();
                let points = state.ts.get(id).ok_or(ServiceError::NotFound)?;
                Ok(points_reply(range(points, from, to)))
            }
            Route::Notification if req.method == Code::Post => {
                events.emit(&req.path, req.format, &req.payload, ObserveMode::Data);
                events.emit(&req.path, req.format, &req.payload, ObserveMode::Notify);
                Ok(Reply::ack())
            }
            _ => Err(ServiceError::NotFound),
        }
    }

    fn catalogue(&self) -> Vec<Item> {
        let state = self.state();
        let kv = state.kv.iter().map(|(path, (format, _))| Item::new(path).with(REL_CONTENT_TYPE, mime(*format)));
        let ts = state.ts.keys().map(|id| Item::new(format!("/ts/{id}")).with(REL_CONTENT_TYPE, mime(ContentFormat::Json)));
        kv.chain(ts).collect()
    }

    fn record_audit(&self, record: &AuditRecord) {
        if let Some(log) = &self.audit_log {
            let mut f = log.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(e) = writeln!(f, "{}", record.to_line()) {
                log::warn!("audit log write: {e}");
            }
        }
        self.audits.lock().unwrap().push(record.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn journal_record_round_trip() {
        let r = JournalRecord { timestamp: 7, path: "/kv/a".into(), format: Some(ContentFormat::Json), value: b"{}".to_vec() };
        let bytes = r.encode();
        assert_eq!(&bytes[..4], &(bytes.len() as u32 - 4).to_be_bytes());
        assert_eq!(JournalRecord::decode(&bytes[4..]), Some(r));
        let d = JournalRecord { timestamp: 1, path: "/kv/a".into(), format: None, value: vec![] };
        assert_eq!(JournalRecord::decode(&d.encode()[4..]), Some(d));
    }

    #[test]
    fn journal_reader_stops_at_truncation() {
        let r = JournalRecord { timestamp: 1, path: "/kv/a".into(), format: Some(ContentFormat::Text), value: b"x".to_vec() };
        let mut bytes = r.encode();
        let whole = bytes.len();
        bytes.extend_from_slice(&r.encode()[..5]);
        let (records, valid) = read_journal(&bytes).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(valid, whole);
    }

    #[test]
    fn routes() {
        assert!(matches!(route("/kv/foo/bar"), Some(Route::Kv)));
        assert!(route("/kv/").is_none());
        assert!(route("/kv/a//b").is_none());
        assert!(matches!(route("/ts/t1"), Some(Route::Series("t1"))));
        assert!(matches!(route("/ts/t1/latest"), Some(Route::Latest("t1"))));
        assert!(matches!(route("/ts/t1/range/1/2"), Some(Route::Range("t1", "1", "2"))));
        assert!(route("/ts/t1/other").is_none());
        assert!(matches!(route("/notification/request/echo/1"), Some(Route::Notification)));
        assert!(route("/notification/request/echo").is_none());
        assert!(route("/elsewhere").is_none());
    }

    #[test]
    fn range_bounds_inclusive() {
        let pts: Vec<TsPoint> = [1, 2, 2, 5, 9].iter().map(|&t| TsPoint { timestamp: t, value: b"0".to_vec() }).collect();
        let ts = |s: &[TsPoint]| s.iter().map(|p| p.timestamp).collect::<Vec<_>>();
        assert_eq!(ts(range(&pts, 2, 5)), [2, 2, 5]);
        assert_eq!(ts(range(&pts, 3, 4)), Vec::<u64>::new());
        assert_eq!(ts(range(&pts, 0, u64::MAX)), [1, 2, 2, 5, 9]);
        assert_eq!(ts(range(&pts, 10, 20)), Vec::<u64>::new());
    }
}
