#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use zest::client::Client;
use zest::codec::Code;
use zest::node::{Node, NodeConfig};
use zest::store::Store;
use zest::tokens::Macaroon;
use zest::transport::{ClientKeys, Endpoint, KeyPair};

static COUNTER: AtomicUsize = AtomicUsize::new(0);

/// A node name no other test in this process uses.
pub fn unique(prefix: &str) -> String {
    format!("{prefix}-{}-{}", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed))
}

pub fn token(secret: &[u8], id: &str, target: &str, method: Code, path: &str) -> Vec<u8> {
    Macaroon::mint(secret, id, "test").unwrap().scoped(target, method, path).unwrap().serialize()
}

pub struct MemStore {
    pub name: String,
    pub secret: Vec<u8>,
    pub node: Node,
    pub store: Arc<Store>,
}

impl MemStore {
    pub fn start(prefix: &str) -> MemStore {
        let name = unique(prefix);
        let secret = format!("{name} secret").into_bytes();
        let store = Arc::new(Store::in_memory());
        let node = Node::start(NodeConfig::memory(&name, &secret), store.clone()).unwrap();
        MemStore { name, secret, node, store }
    }

    pub fn client(&self) -> Client {
        Client::new(self.node.reply_endpoint().clone(), ClientKeys::ephemeral())
    }

    pub fn token(&self, id: &str, method: Code, path: &str) -> Vec<u8> {
        token(&self.secret, id, &self.name, method, path)
    }
}

/// A store on loopback TCP with ephemeral ports.
pub fn tcp_store(name: &str, secret: &[u8]) -> (Node, Arc<Store>) {
    let store = Arc::new(Store::in_memory());
    let cfg = NodeConfig::new(name, Endpoint::tcp("127.0.0.1", 0), Endpoint::tcp("127.0.0.1", 0), KeyPair::generate(), secret);
    (Node::start(cfg, store.clone()).unwrap(), store)
}

pub fn tcp_client(node: &Node) -> Client {
    Client::new(node.reply_endpoint().clone(), ClientKeys::ephemeral().with_server(node.public_key()))
        .with_router(node.router_endpoint().clone())
}
