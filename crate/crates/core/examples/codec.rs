//! Encoding and decoding Zest messages, and checking them against the
//! per-kind option rules.

use zest::codec::{opt, validate_options, Code, ContentFormat, Message, MessageKind, ObserveMode, OptionRecord};

fn main() {
    let request = Message::request(Code::Post, "/kv/foo/bar", "store1", ContentFormat::Json)
        .with_token(b"<token>".to_vec())
        .with_payload(br#"{"room": "lounge", "value": 1}"#.to_vec());
    let bytes = request.encode().unwrap();
    println!("POST request, {} bytes:\n  {}", bytes.len(), hex::encode(&bytes));

    let decoded = Message::decode(&bytes).unwrap();
    assert_eq!(decoded, request);
    println!("decoded: code {} path {:?} format {:?}", decoded.code, decoded.uri_path().unwrap(), decoded.content_format().unwrap());

    // Responses to POST may carry content_format; a DELETE ack is header only.
    println!("ack: {}", hex::encode(Message::new(Code::Ack).encode().unwrap()));
    println!("delete ack: {}", hex::encode(Message::new(Code::AckDelete).encode().unwrap()));

    let observe = Message::request(Code::Get, "/kv/foo/bar", "store1", ContentFormat::Text)
        .with_option(OptionRecord::string(opt::OBSERVE, ObserveMode::Audit.as_str()));
    assert!(validate_options(&observe, MessageKind::GetRequest).is_ok());

    let mut missing_host = observe.clone();
    missing_host.options.retain(|o| o.code != opt::URI_HOST);
    for v in validate_options(&missing_host, MessageKind::GetRequest).unwrap_err() {
        println!("violation: {v}");
    }

    // Truncated frames are errors, never panics.
    println!("truncated: {}", Message::decode(&bytes[..7]).unwrap_err());
}
