//! A store on loopback TCP with CURVE encryption. Clients must know the
//! node's public key; observations use a second, identity-routed port.

use std::sync::Arc;
use std::time::Duration;

use zest::client::Client;
use zest::codec::{Code, ContentFormat, ObserveMode};
use zest::node::{Node, NodeConfig};
use zest::store::Store;
use zest::tokens::Macaroon;
use zest::transport::{ClientKeys, Endpoint, KeyPair};

fn main() {
    let secret = b"store1 secret";
    let node_keys = KeyPair::generate();
    let config = NodeConfig::new(
        "store1",
        Endpoint::tcp("127.0.0.1", 0),
        Endpoint::tcp("127.0.0.1", 0),
        node_keys,
        secret,
    );
    let node = Node::start(config, Arc::new(Store::in_memory())).unwrap();
    println!("reply {} router {} key {}", node.reply_endpoint(), node.router_endpoint(), node.public_key());

    let token = |method, path: &str| Macaroon::mint(secret, "app:1", "example").unwrap().scoped("store1", method, path).unwrap().serialize();
    let client = Client::new(node.reply_endpoint().clone(), ClientKeys::ephemeral().with_server(node.public_key()))
        .with_router(node.router_endpoint().clone());

    let watch = client.observe("/kv/door", &token(Code::Get, "/kv/door"), ObserveMode::Data, Some(5)).unwrap();
    client.post("/kv/door", &token(Code::Post, "/kv/door"), ContentFormat::Text, b"open").unwrap();
    println!("event: {}", watch.next_line(Duration::from_secs(2)).unwrap().unwrap());

    // A client expecting a different server key cannot complete the handshake.
    let impostor = Client::new(node.reply_endpoint().clone(), ClientKeys::ephemeral().with_server(KeyPair::generate().public()))
        .with_timeout(Duration::from_millis(500));
    println!("wrong server key: {}", impostor.get("/kv/door", &token(Code::Get, "/kv/door")).unwrap_err());
}
