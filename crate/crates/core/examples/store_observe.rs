//! A store node in memory: key/value and time-series requests, a data
//! observer, an audit observer, and the catalogue.

use std::sync::Arc;
use std::time::Duration;

use zest::client::Client;
use zest::codec::{Code, ContentFormat, ObserveMode};
use zest::node::{Node, NodeConfig};
use zest::store::Store;
use zest::tokens::Macaroon;
use zest::transport::ClientKeys;

const SECRET: &[u8] = b"store1 secret";

fn token(id: &str, method: Code, path: &str) -> Vec<u8> {
    Macaroon::mint(SECRET, id, "example").unwrap().scoped("store1", method, path).unwrap().serialize()
}

fn main() {
    let store = Arc::new(Store::in_memory());
    let node = Node::start(NodeConfig::memory("store1", SECRET), store.clone()).unwrap();
    let client = Client::new(node.reply_endpoint().clone(), ClientKeys::ephemeral());

    let data = client.observe("/kv/foo/bar", &token("dash:1", Code::Get, "/kv/*"), ObserveMode::Data, Some(10)).unwrap();
    let audit = client.observe("/audit/*", &token("logger:1", Code::Get, "/audit/*"), ObserveMode::Audit, Some(10)).unwrap();

    let post = token("sensor:1", Code::Post, "/kv/foo/bar");
    let reply = client.post("/kv/foo/bar", &post, ContentFormat::Json, br#"{"room": "lounge", "value": 1}"#).unwrap();
    println!("POST /kv/foo/bar -> {}", reply.code);
    println!("data event:  {}", data.next_line(Duration::from_secs(1)).unwrap().unwrap());
    println!("audit event: {}", audit.next_line(Duration::from_secs(1)).unwrap().unwrap());

    let reply = client.get("/kv/foo/bar", &token("dash:1", Code::Get, "/kv/*")).unwrap();
    println!("GET /kv/foo/bar -> {} {}", reply.code, String::from_utf8_lossy(&reply.payload));

    let ts = token("sensor:1", Code::Post, "/ts/temp");
    for reading in ["20.5", "20.7", "21.0"] {
        let r = client.post("/ts/temp", &ts, ContentFormat::Json, reading.as_bytes()).unwrap();
        println!("append {reading} -> {}", String::from_utf8_lossy(&r.payload));
        std::thread::sleep(Duration::from_millis(2));
    }
    let read = token("dash:1", Code::Get, "/ts/temp/*");
    let latest = client.get("/ts/temp/latest", &read).unwrap();
    println!("latest: {}", String::from_utf8_lossy(&latest.payload));
    let range = client.get("/ts/temp/range/0/99999999999999", &read).unwrap();
    println!("range:  {}", String::from_utf8_lossy(&range.payload));

    let bad = client.get("/kv/foo/bar", &token("dash:1", Code::Get, "/ts/*"));
    println!("GET with a /ts token: {}", bad.unwrap_err());

    let cat = client.get("/cat", &token("dash:1", Code::Get, "/cat")).unwrap();
    println!("catalogue: {}", String::from_utf8_lossy(&cat.payload));
    for record in store.audit_records() {
        println!("audit: {}", record.to_line());
    }
}
