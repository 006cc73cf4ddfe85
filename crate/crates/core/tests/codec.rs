use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use zest::codec::{
    encode_uint_option, opt, validate_options, Code, ContentFormat, Message, MessageKind, OptionRecord, Violation,
};

fn fixtures() -> Vec<(String, String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "hex") {
            let text = fs::read_to_string(&path).unwrap();
            let mut lines = text.lines();
            let comment = lines.next().unwrap().trim_start_matches('#').trim().to_string();
            let hex: String = lines.flat_map(|l| l.split_whitespace()).collect();
            out.push((path.file_stem().unwrap().to_string_lossy().into_owned(), comment, hex::decode(hex).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn golden_fixtures_round_trip() {
    let all = fixtures();
    assert!(all.len() >= 12);
    for (name, _, bytes) in &all {
        let m = Message::decode(bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&m.encode().unwrap(), bytes, "{name}");
        assert_eq!(m.encoded_len(), bytes.len(), "{name}");
    }
    let codes: Vec<u8> = all.iter().map(|(_, _, b)| b[0]).collect();
    for c in Code::ALL {
        assert!(codes.contains(&c.value()), "no fixture for {c}");
    }
}

#[test]
fn golden_fixture_contents() {
    let all = fixtures();
    let get = |n: &str| Message::decode(&all.iter().find(|f| f.0 == n).unwrap().2).unwrap();

    let m = get("get_request");
    assert_eq!(m.code, Code::Get);
    assert_eq!(m.uri_path(), Ok(Some("/kv/foo")));
    assert_eq!(m.uri_host(), Ok(Some("hostA")));
    assert_eq!(m.content_format(), Ok(Some(ContentFormat::Json)));

    let m = get("observe_request");
    assert_eq!(m.observe(), Ok(Some("data")));
    assert_eq!(m.max_age(), Ok(Some(60)));
    assert_eq!(validate_options(&m, MessageKind::GetRequest), Ok(()));

    assert_eq!(get("duplicate_option").uri_path(), Ok(Some("/b")));
    assert_eq!(get("duplicate_option").options.len(), 4);

    let m = get("unknown_option");
    assert_eq!(m.payload, (0..8).collect::<Vec<u8>>());
    assert_eq!(validate_options(&m, MessageKind::PostRequest), Ok(()));
    assert_eq!(get("ack_post").encode().unwrap(), [0x41, 0, 0, 0]);
}

#[test]
fn spec_vectors() {
    assert_eq!(Message::new(Code::Ack).encode().unwrap(), hex::decode("41000000").unwrap());
    assert_eq!(Message::new(Code::BadRequest).encode().unwrap()[0], 0x80);
    assert!(Message::decode(&hex::decode("01010000000b0002").unwrap()).is_err());
    assert_eq!(encode_uint_option(opt::CONTENT_FORMAT, 50).unwrap().value, [0, 0, 0, 0x32]);
    assert_eq!(encode_uint_option(opt::MAX_AGE, 0).unwrap().value, [0, 0, 0, 0]);
    assert_eq!(encode_uint_option(opt::MAX_AGE, 60).unwrap().value, [0, 0, 0, 0x3c]);
    assert!(encode_uint_option(opt::MAX_AGE, 1 << 32).is_err());
    assert!(encode_uint_option(opt::URI_PATH, 1).is_err());
}

#[test]
fn option_matrix_examples() {
    let get = Message::request(Code::Get, "/a", "h", ContentFormat::Json);
    assert_eq!(validate_options(&get, MessageKind::GetRequest), Ok(()));
    let no_host = Message::new(Code::Get)
        .with_option(OptionRecord::string(opt::URI_PATH, "/a"))
        .with_content_format(ContentFormat::Json);
    let v = validate_options(&no_host, MessageKind::GetRequest).unwrap_err();
    assert_eq!(v, vec![Violation::Missing(opt::URI_HOST)]);
    assert_eq!(v[0].to_string(), "uri_host mandatory");
    let del = Message::new(Code::AckDelete).with_content_format(ContentFormat::Text);
    assert!(validate_options(&del, MessageKind::DeleteResponse).is_err());
    let del = Message::new(Code::AckDelete).with_payload(b"x".to_vec());
    assert_eq!(validate_options(&del, MessageKind::DeleteResponse), Err(vec![Violation::UnexpectedPayload]));
}

fn message() -> impl Strategy<Value = Message> {
    let option = (any::<u16>(), prop::collection::vec(any::<u8>(), 0..40)).prop_map(|(c, v)| OptionRecord::new(c, v));
    (
        prop::sample::select(Code::ALL.to_vec()),
        prop::collection::vec(any::<u8>(), 0..64),
        prop::collection::vec(option, 0..12),
        prop::collection::vec(any::<u8>(), 0..200),
    )
        .prop_map(|(code, token, options, payload)| Message { code, token, options, payload })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip(m in message()) {
        let bytes = m.encode().unwrap();
        let width = 4 + m.token.len() + m.options.iter().map(|o| 4 + o.value.len()).sum::<usize>() + m.payload.len();
        prop_assert_eq!(bytes.len(), width);
        prop_assert_eq!(Message::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn decoder_total(bytes in prop::collection::vec(any::<u8>(), 0..96)) {
        if let Ok(m) = Message::decode(&bytes) {
            prop_assert_eq!(m.encode().unwrap(), bytes);
        }
    }

    #[test]
    fn mutated_frames_never_crash(m in message(), flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..4), cut in any::<prop::sample::Index>()) {
        let mut bytes = m.encode().unwrap();
        for (i, v) in flips {
            let at = i.index(bytes.len());
            bytes[at] = v;
        }
        let len = cut.index(bytes.len() + 1);
        let _ = Message::decode(&bytes);
        let _ = Message::decode(&bytes[..len]);
    }
}
