//! The same contract checked against the in-memory and the TCP transport.

mod common;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use zest::codec::{Code, Message};
use zest::transport::{
    request, serve_reply, serve_router, ClientKeys, Dealer, Endpoint, Handler, KeyPair, PushError, ReplyConnection,
    TransportError,
};

const T: Duration = Duration::from_secs(5);

trait Net {
    fn fresh(&self) -> Endpoint;
    fn client(&self, server: &KeyPair) -> ClientKeys;
    /// An address nothing listens on.
    fn dead(&self) -> Endpoint;
}

struct Mem;
struct Tcp;

impl Net for Mem {
    fn fresh(&self) -> Endpoint {
        Endpoint::memory(common::unique("conf"))
    }
    fn client(&self, _server: &KeyPair) -> ClientKeys {
        ClientKeys::ephemeral()
    }
    fn dead(&self) -> Endpoint {
        Endpoint::memory(common::unique("nobody"))
    }
}

impl Net for Tcp {
    fn fresh(&self) -> Endpoint {
        Endpoint::tcp("127.0.0.1", 0)
    }
    fn client(&self, server: &KeyPair) -> ClientKeys {
        ClientKeys::ephemeral().with_server(server.public())
    }
    fn dead(&self) -> Endpoint {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = l.local_addr().unwrap().port();
        drop(l);
        Endpoint::tcp("127.0.0.1", port)
    }
}

fn echo() -> Handler {
    Arc::new(|i| i.frame)
}

fn echo_round_trip(net: &dyn Net) {
    let keys = KeyPair::generate();
    let server = serve_reply(&net.fresh(), &keys, echo()).unwrap();
    let reply = request(server.endpoint(), &net.client(&keys), b"hello zest", T).unwrap();
    assert_eq!(reply, b"hello zest");
    assert_eq!(request(server.endpoint(), &net.client(&keys), b"", T).unwrap(), b"");
}

fn internal_error_reply(net: &dyn Net) {
    let keys = KeyPair::generate();
    let handler: Handler = Arc::new(|i| match Message::decode(&i.frame) {
        Ok(_) => panic!("handler bug"),
        Err(_) => Message::new(Code::InternalServerError).encode().unwrap(),
    });
    let server = serve_reply(&net.fresh(), &keys, handler).unwrap();
    let reply = request(server.endpoint(), &net.client(&keys), b"\x00", T).unwrap();
    assert_eq!(reply[0], 0xA0);
}

fn requester_peer_key(net: &dyn Net) {
    let keys = KeyPair::generate();
    let handler: Handler = Arc::new(|i| i.peer.map(|k| k.to_hex().into_bytes()).unwrap_or_default());
    let server = serve_reply(&net.fresh(), &keys, handler).unwrap();
    let client = net.client(&keys);
    let reply = request(server.endpoint(), &client, b"who", T).unwrap();
    assert_eq!(reply, client.keys.public().to_hex().into_bytes());
}

fn concurrent_requesters(net: &dyn Net) {
    let keys = KeyPair::generate();
    let handler: Handler = Arc::new(|i| {
        thread::sleep(Duration::from_millis(2));
        i.frame
    });
    let server = serve_reply(&net.fresh(), &keys, handler).unwrap();
    let threads: Vec<_> = (0..8)
        .map(|t| {
            let addr = server.endpoint().clone();
            let client = net.client(&keys);
            thread::spawn(move || {
                let mut conn = ReplyConnection::connect(&addr, &client, T).unwrap();
                for i in 0..25 {
                    let nonce = format!("{t}:{i}:{}", uuid::Uuid::new_v4());
                    assert_eq!(conn.request(nonce.as_bytes(), T).unwrap(), nonce.as_bytes());
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
}

fn router_isolation_and_order(net: &dyn Net) {
    let keys = KeyPair::generate();
    let router = serve_router(&net.fresh(), &keys).unwrap();
    let u1 = Dealer::connect(router.endpoint(), b"U1", &net.client(&keys), T).unwrap();
    let u2 = Dealer::connect(router.endpoint(), b"U2", &net.client(&keys), T).unwrap();
    let wait_connected = |id: &[u8]| {
        let deadline = Instant::now() + T;
        while !router.is_connected(id) {
            assert!(Instant::now() < deadline);
            thread::sleep(Duration::from_millis(1));
        }
    };
    wait_connected(b"U1");
    wait_connected(b"U2");

    router.push(b"U1", b"a").unwrap();
    router.push(b"U2", b"b").unwrap();
    assert_eq!(u1.recv(T).unwrap().unwrap(), b"a");
    assert_eq!(u2.recv(T).unwrap().unwrap(), b"b");
    assert_eq!(u1.recv(Duration::from_millis(50)).unwrap(), None);
    assert_eq!(u2.recv(Duration::from_millis(50)).unwrap(), None);

    for i in 1..=100u32 {
        router.push(b"U1", &i.to_be_bytes()).unwrap();
    }
    for i in 1..=100u32 {
        assert_eq!(u1.recv(T).unwrap().unwrap(), i.to_be_bytes());
    }
    assert_eq!(u2.recv(Duration::from_millis(50)).unwrap(), None);

    assert_eq!(router.push(b"nobody", b"x"), Err(PushError::NotConnected));
    drop(u2);
    let deadline = Instant::now() + T;
    loop {
        match router.push(b"U2", b"late") {
            Err(PushError::Disconnected) => break,
            _ if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
            other => panic!("push after disconnect: {other:?}"),
        }
    }
}

fn dead_address_times_out(net: &dyn Net) {
    let keys = KeyPair::generate();
    let started = Instant::now();
    let err = request(&net.dead(), &net.client(&keys), b"x", Duration::from_millis(100)).unwrap_err();
    assert!(matches!(err, TransportError::Timeout), "{err:?}");
    assert!(started.elapsed() < Duration::from_secs(2));
}

fn soak(net: &dyn Net) {
    let keys = KeyPair::generate();
    let server = serve_reply(&net.fresh(), &keys, echo()).unwrap();
    let mut conn = ReplyConnection::connect(server.endpoint(), &net.client(&keys), T).unwrap();
    for i in 0..1000u32 {
        assert_eq!(conn.request(&i.to_le_bytes(), T).unwrap(), i.to_le_bytes());
    }
}

fn bind_collision(net: &dyn Net) {
    let keys = KeyPair::generate();
    let first = serve_reply(&net.fresh(), &keys, echo()).unwrap();
    match serve_reply(first.endpoint(), &keys, echo()) {
        Err(TransportError::Bind(..)) => {}
        Err(other) => panic!("{other:?}"),
        Ok(_) => panic!("second bind succeeded"),
    }
}

macro_rules! suite {
    ($module:ident, $net:expr) => {
        mod $module {
            use super::*;
            #[test]
            fn echo() {
                echo_round_trip(&$net)
            }
            #[test]
            fn internal_error() {
                internal_error_reply(&$net)
            }
            #[test]
            fn peer_key() {
                requester_peer_key(&$net)
            }
            #[test]
            fn concurrent() {
                concurrent_requesters(&$net)
            }
            #[test]
            fn router() {
                router_isolation_and_order(&$net)
            }
            #[test]
            fn dead_address() {
                dead_address_times_out(&$net)
            }
            #[test]
            fn soak_1000() {
                soak(&$net)
            }
            #[test]
            fn collision() {
                bind_collision(&$net)
            }
        }
    };
}

suite!(memory, Mem);
suite!(tcp, Tcp);

#[test]
fn tcp_rejects_wrong_server_key() {
    let keys = KeyPair::generate();
    let server = serve_reply(&Endpoint::tcp("127.0.0.1", 0), &keys, echo()).unwrap();
    let wrong = ClientKeys::ephemeral().with_server(KeyPair::generate().public());
    assert!(request(server.endpoint(), &wrong, b"x", Duration::from_secs(1)).is_err());
    let none = ClientKeys::ephemeral();
    assert!(matches!(request(server.endpoint(), &none, b"x", T), Err(TransportError::MissingServerKey)));
}
