//! Brokered request/response: a worker and a client exchange payloads
//! through a store without connecting to each other.

use std::sync::Arc;
use std::time::Duration;

use zest::broker::{notify_request, serve_notifications, RequestTokens, WorkerTokens};
use zest::client::Client;
use zest::codec::{Code, ContentFormat};
use zest::node::{Node, NodeConfig};
use zest::store::Store;
use zest::tokens::Macaroon;
use zest::transport::ClientKeys;

const SECRET: &[u8] = b"broker secret";

fn token(id: &str, method: Code, path: &str) -> Vec<u8> {
    Macaroon::mint(SECRET, id, "example").unwrap().scoped("broker", method, path).unwrap().serialize()
}

fn main() {
    let node = Node::start(NodeConfig::memory("broker", SECRET), Arc::new(Store::in_memory())).unwrap();
    let connect = || Client::new(node.reply_endpoint().clone(), ClientKeys::ephemeral());

    let worker_tokens = WorkerTokens {
        observe: token("worker", Code::Get, "/notification/request/image_capture/*"),
        respond: token("worker", Code::Post, "/notification/response/image_capture/*"),
    };
    let handler = Arc::new(|image: &[u8]| -> Result<Vec<u8>, String> {
        if image.is_empty() {
            return Err("empty image".into());
        }
        Ok(image.iter().rev().copied().collect())
    });
    let _worker = serve_notifications(Arc::new(connect()), "image_capture", worker_tokens, handler, None).unwrap();

    let client = connect();
    let tokens = RequestTokens {
        observe: token("camera", Code::Get, "/notification/response/image_capture/*"),
        request: token("camera", Code::Post, "/notification/request/image_capture/*"),
    };
    let image = [1u8, 2, 3, 4, 5];
    let reply = notify_request(&client, "image_capture", &tokens, ContentFormat::Binary, &image, Duration::from_secs(2)).unwrap();
    println!("{} -> {:?}", reply.uri_path, reply.data);

    let failed = notify_request(&client, "image_capture", &tokens, ContentFormat::Binary, &[], Duration::from_secs(2)).unwrap();
    println!("{} -> {}", failed.uri_path, String::from_utf8_lossy(&failed.data));
}
