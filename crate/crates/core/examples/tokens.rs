//! Minting, attenuating, serializing and verifying macaroons.

use zest::codec::Code;
use zest::tokens::{CaveatContext, Macaroon};

fn main() {
    let store_secret = b"store1 secret";
    let root = Macaroon::mint(store_secret, "logger:1", "arbiter").unwrap();
    let token = root.scoped("store1", Code::Get, "/kv/*").unwrap();
    let wire = token.serialize();
    print!("{}", String::from_utf8_lossy(&wire));

    let token = Macaroon::deserialize(&wire).unwrap();
    for (method, path, target) in [
        (Code::Get, "/kv/foo", "store1"),
        (Code::Get, "/ts/foo", "store1"),
        (Code::Post, "/kv/foo", "store1"),
        (Code::Get, "/kv/foo", "store2"),
    ] {
        let verdict = token.verify(store_secret, &CaveatContext::new(method, path, target));
        println!("{} {path} at {target}: {}", method.name(), if verdict.is_ok() { "ok".to_string() } else { format!("{verdict:?}") });
    }

    // Anyone holding a token can narrow it further, never widen it.
    let narrower = token.add_caveat("path = /kv/foo").unwrap();
    assert!(narrower.verify(store_secret, &CaveatContext::new(Code::Get, "/kv/foo", "store1")).is_ok());
    assert!(narrower.verify(store_secret, &CaveatContext::new(Code::Get, "/kv/bar", "store1")).is_err());

    let mut tampered = wire.clone();
    let last_hex = tampered.len() - 2;
    tampered[last_hex] = if tampered[last_hex] == b'0' { b'1' } else { b'0' };
    let forged = Macaroon::deserialize(&tampered).unwrap();
    assert!(forged.verify(store_secret, &CaveatContext::new(Code::Get, "/kv/foo", "store1")).is_err());
    println!("tampered signature rejected");
}
