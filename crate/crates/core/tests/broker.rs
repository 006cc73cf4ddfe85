mod common;

use std::collections::HashSet;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use common::MemStore;
use zest::broker::{
    notify_request, open_exchange, request_path, serve_notifications, wait, NotificationHandler, RequestTokens, Worker,
    WorkerTokens,
};
use zest::client::{Client, ClientError};
use zest::codec::{Code, ContentFormat};
use zest::transport::mem::Trace;
use zest::transport::TransportError;

const WAIT: Duration = Duration::from_secs(5);

fn worker_tokens(s: &MemStore, service: &str) -> WorkerTokens {
    WorkerTokens {
        observe: s.token("server", Code::Get, &format!("/notification/request/{service}/*")),
        respond: s.token("server", Code::Post, &format!("/notification/response/{service}/*")),
    }
}

fn request_tokens(s: &MemStore, service: &str) -> RequestTokens {
    RequestTokens {
        observe: s.token("client", Code::Get, &format!("/notification/response/{service}/*")),
        request: s.token("client", Code::Post, &format!("/notification/request/{service}/*")),
    }
}

fn worker(s: &MemStore, service: &str, handler: Arc<NotificationHandler>) -> (Arc<Client>, Worker) {
    let client = Arc::new(s.client());
    let w = serve_notifications(client.clone(), service, worker_tokens(s, service), handler, None).unwrap();
    (client, w)
}

fn upper() -> Arc<NotificationHandler> {
    Arc::new(|p: &[u8]| Ok(p.to_ascii_uppercase()))
}

#[test]
fn identity_handler_round_trip() {
    let s = MemStore::start("nf-id");
    let _w = worker(&s, "echo", Arc::new(|p: &[u8]| Ok(p.to_vec())));
    let c = s.client();
    let payload = br#"{"n": [1, 2, 3]}"#;
    let reply = notify_request(&c, "echo", &request_tokens(&s, "echo"), ContentFormat::Json, payload, WAIT).unwrap();
    assert_eq!(reply.data, payload);
    assert_eq!(reply.format, ContentFormat::Json);
    assert!(reply.uri_path.starts_with("/notification/response/echo/"));
}

#[test]
fn uppercase_and_errors() {
    let s = MemStore::start("nf-up");
    let _w = worker(&s, "up", upper());
    let _f = worker(&s, "fail", Arc::new(|_: &[u8]| Err("no such thing".to_string())));
    let c = s.client();
    let r = notify_request(&c, "up", &request_tokens(&s, "up"), ContentFormat::Text, b"echo", WAIT).unwrap();
    assert_eq!((r.format, r.data), (ContentFormat::Text, b"ECHO".to_vec()));
    let r = notify_request(&c, "fail", &request_tokens(&s, "fail"), ContentFormat::Text, b"x", WAIT).unwrap();
    assert_eq!(r.format, ContentFormat::Json);
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&r.data).unwrap(), serde_json::json!({"error": "no such thing"}));
}

#[test]
fn interleaved_exchanges_are_not_crossed() {
    let s = MemStore::start("nf-mix");
    let _w = worker(&s, "up", upper());
    let c = s.client();
    let tokens = request_tokens(&s, "up");
    let first = open_exchange(&c, "up", "first", &tokens, WAIT).unwrap();
    let second = open_exchange(&c, "up", "second", &tokens, WAIT).unwrap();
    c.post(&request_path("up", "second"), &tokens.request, ContentFormat::Text, b"bbb").unwrap();
    c.post(&request_path("up", "first"), &tokens.request, ContentFormat::Text, b"aaa").unwrap();
    assert_eq!(wait(&first, WAIT).unwrap().data, b"AAA");
    assert_eq!(wait(&second, WAIT).unwrap().data, b"BBB");
    assert!(first.next(Duration::from_millis(200)).unwrap().is_none());
    assert!(second.next(Duration::from_millis(200)).unwrap().is_none());
}

#[test]
fn no_server_times_out() {
    let s = MemStore::start("nf-none");
    let c = s.client();
    let started = Instant::now();
    let err = notify_request(&c, "ghost", &request_tokens(&s, "ghost"), ContentFormat::Text, b"?", Duration::from_millis(300))
        .unwrap_err();
    assert!(matches!(err, ClientError::Transport(TransportError::Timeout)), "{err}");
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[test]
fn a_thousand_requests_with_distinct_ids() {
    let s = MemStore::start("nf-many");
    let _w = worker(&s, "up", upper());
    let tokens = request_tokens(&s, "up");
    let seen = std::sync::Mutex::new(HashSet::new());
    thread::scope(|scope| {
        for t in 0..4 {
            let (s, tokens, seen) = (&s, &tokens, &seen);
            scope.spawn(move || {
                let c = s.client();
                for i in 0..250 {
                    let body = format!("t{t}-{i}");
                    let r = notify_request(&c, "up", tokens, ContentFormat::Text, body.as_bytes(), WAIT).unwrap();
                    assert_eq!(r.data, body.to_uppercase().into_bytes());
                    assert!(seen.lock().unwrap().insert(r.uri_path));
                }
            });
        }
    });
    assert_eq!(seen.into_inner().unwrap().len(), 1000);
}

#[test]
fn client_and_server_only_talk_to_the_store() {
    let trace = Trace::start();
    let s = MemStore::start("nf-trace");
    let (server, _w) = worker(&s, "up", upper());
    let c = s.client();
    notify_request(&c, "up", &request_tokens(&s, "up"), ContentFormat::Text, b"hi", WAIT).unwrap();

    let store_endpoints = [s.name.clone(), format!("{}-router", s.name)];
    let parties = [server.public_key(), c.public_key()];
    let ours: Vec<_> = trace.events().into_iter().filter(|e| e.peer.is_some_and(|p| parties.contains(&p))).collect();
    for party in parties {
        assert!(ours.iter().any(|e| e.peer == Some(party) && e.inbound));
        assert!(ours.iter().any(|e| e.peer == Some(party) && !e.inbound && e.endpoint.ends_with("-router")));
    }
    assert!(ours.iter().all(|e| store_endpoints.contains(&e.endpoint)), "{ours:?}");
}

