//! An arbiter, a store, and four parties. The manager grants permissions,
//! the others fetch tokens from the arbiter and use them at the store.

use std::sync::Arc;
use std::time::Duration;

use zest::arbiter::{Arbiter, PermissionGrant, TokenRequest, GRANT_PATH, TOKEN_PATH};
use zest::client::Client;
use zest::codec::{Code, ContentFormat, ObserveMode};
use zest::node::{Node, NodeConfig};
use zest::store::Store;
use zest::transport::{ClientKeys, KeyPair};

struct Party {
    arbiter: Client,
    store: Client,
}

fn main() {
    let store_secret = b"store1 secret";
    let store = Node::start(NodeConfig::memory("store1", store_secret), Arc::new(Store::in_memory())).unwrap();
    let arbiter = Arc::new(Arbiter::new("arbiter", b"arbiter secret").unwrap());
    arbiter.add_target("store1", store_secret);
    let arbiter_node = Node::start(NodeConfig::memory("arbiter", b"arbiter secret"), arbiter.clone()).unwrap();

    // Parties are identified to the arbiter by their transport keys.
    let party = |name: &str| {
        let keys = KeyPair::generate();
        arbiter.register_client(keys.public(), name);
        Party {
            arbiter: Client::new(arbiter_node.reply_endpoint().clone(), ClientKeys::new(keys.clone(), None)),
            store: Client::new(store.reply_endpoint().clone(), ClientKeys::new(keys, None)),
        }
    };
    let mint = |p: &Party, method, path| {
        let body = TokenRequest::new("store1", method, path).to_json();
        p.arbiter.post(TOKEN_PATH, b"", ContentFormat::Json, &body).unwrap().payload
    };

    let manager = party("manager");
    let manager_token = arbiter.manager_token().serialize();
    for grant in [
        PermissionGrant::new("logger", "store1", Code::Get, "/audit/*").observable(),
        PermissionGrant::new("dashboard", "store1", Code::Get, "/kv/*").observable(),
        PermissionGrant::new("sensor", "store1", Code::Post, "/kv/*"),
    ] {
        let body = serde_json::to_vec(&grant).unwrap();
        manager.arbiter.post(GRANT_PATH, &manager_token, ContentFormat::Json, &body).unwrap();
    }
    let arbiter_audit = manager.arbiter.observe("/audit/*", &manager_token, ObserveMode::Audit, None).unwrap();

    let dashboard = party("dashboard");
    let data = dashboard.store.observe("/kv/temp", &mint(&dashboard, Code::Get, "/kv/*"), ObserveMode::Data, None).unwrap();

    let logger = party("logger");
    let audit = logger.store.observe("/audit/*", &mint(&logger, Code::Get, "/audit/*"), ObserveMode::Audit, None).unwrap();

    let sensor = party("sensor");
    let post = mint(&sensor, Code::Post, "/kv/temp");
    println!("sensor token:\n{}", String::from_utf8_lossy(&post));
    sensor.store.post("/kv/temp", &post, ContentFormat::Json, b"{\"celsius\": 21}").unwrap();

    let wait = Duration::from_secs(1);
    println!("dashboard sees: {}", data.next_line(wait).unwrap().unwrap());
    println!("logger sees:    {}", audit.next_line(wait).unwrap().unwrap());
    while let Some(line) = arbiter_audit.next_line(Duration::from_millis(100)).unwrap() {
        println!("manager sees:   {line}");
    }

    // The sensor's token is useless for anything else.
    let refused = sensor.store.get("/kv/temp", &post).unwrap_err();
    println!("sensor GET: {refused}");
    let refused = sensor.arbiter.post(TOKEN_PATH, b"", ContentFormat::Json, &TokenRequest::new("store1", Code::Delete, "/kv/temp").to_json());
    println!("sensor asks for DELETE: {}", refused.unwrap_err());
}
