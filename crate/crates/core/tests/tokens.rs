use proptest::prelude::*;
use zest::codec::Code;
use zest::tokens::{path_matches, CaveatContext, Macaroon, VerifyError};

// Reference signatures from a standalone HMAC-SHA256 implementation.
const SIG_ID: &str = "9ce89734b9c206ff7ff1d0989b28087ebd3b0743145de0b68eea44b0dd6a08fe";
const SIG_ID2: &str = "9b1dd2de0bd819f5ee7aa6525f589e71be58e1f78fb1457a4f936e7d3e13bb80";
const SIG_SCOPED: &str = "1533da662c3e9c73a8ad09f40912db7578e1c6cd49272d5c35de202a4d9aa3e0";

#[test]
fn signatures_match_reference() {
    let a = Macaroon::mint(b"s", "id", "arbiter").unwrap();
    let b = Macaroon::mint(b"s", "id2", "arbiter").unwrap();
    assert_eq!(hex::encode(a.signature()), SIG_ID);
    assert_eq!(hex::encode(b.signature()), SIG_ID2);
    assert_eq!(Macaroon::mint(b"s", "id", "arbiter").unwrap().signature(), a.signature());
    let t = Macaroon::mint(b"store1 secret", "logger:1", "arbiter").unwrap().scoped("store1", Code::Get, "/kv/*").unwrap();
    assert_eq!(hex::encode(t.signature()), SIG_SCOPED);
}

#[test]
fn serialized_form() {
    let t = Macaroon::mint(b"store1 secret", "logger:1", "arbiter").unwrap().scoped("store1", Code::Get, "/kv/*").unwrap();
    let text = String::from_utf8(t.serialize()).unwrap();
    assert_eq!(
        text,
        format!(
            "location arbiter\nidentifier logger:1\ncaveat target = store1\ncaveat method = GET\ncaveat path = /kv/*\nsignature {SIG_SCOPED}\n"
        )
    );
    assert_eq!(Macaroon::deserialize(text.as_bytes()).unwrap(), t);
}

#[test]
fn every_single_bit_flip_is_rejected() {
    let secret = b"store1 secret";
    let t = Macaroon::mint(secret, "sensor:42", "arbiter").unwrap().scoped("store1", Code::Post, "/kv/temp").unwrap();
    let ctx = CaveatContext::new(Code::Post, "/kv/temp", "store1");
    let bytes = t.serialize();
    t.verify(secret, &ctx).unwrap();
    for i in 0..bytes.len() * 8 {
        let mut b = bytes.clone();
        b[i / 8] ^= 1 << (i % 8);
        let accepted = Macaroon::deserialize(&b).map(|m| m.verify(secret, &ctx).is_ok()).unwrap_or(false);
        assert!(!accepted, "flip of bit {i} accepted");
    }
}

#[test]
fn caveat_context_matrix() {
    let secret = b"k";
    let t = Macaroon::mint(secret, "x", "arbiter").unwrap().scoped("store1", Code::Get, "/kv/foo").unwrap();
    let mut accepted = 0;
    for target in ["store1", "store2"] {
        for method in [Code::Get, Code::Post] {
            for path in ["/kv/foo", "/kv/bar"] {
                let ok = t.verify(secret, &CaveatContext::new(method, path, target)).is_ok();
                assert_eq!(ok, target == "store1" && method == Code::Get && path == "/kv/foo");
                accepted += ok as usize;
            }
        }
    }
    assert_eq!(accepted, 1);
}

#[test]
fn policy_requires_three_kinds() {
    let t = Macaroon::mint(b"k", "x", "a").unwrap().add_caveat("target = s").unwrap().add_caveat("path = /a").unwrap();
    assert!(matches!(t.require_scoped(), Err(VerifyError::MissingCaveat(_))));
    t.verify(b"k", &CaveatContext::new(Code::Get, "/a", "s")).unwrap();
}

fn caveat() -> impl Strategy<Value = String> {
    prop_oneof![
        prop::sample::select(vec!["s1", "s2"]).prop_map(|t| format!("target = {t}")),
        prop::sample::select(vec!["GET", "POST", "DELETE", "*"]).prop_map(|m| format!("method = {m}")),
        prop::sample::select(vec!["*", "/kv/*", "/kv/a", "/kv/a/*", "/ts/*"]).prop_map(|p| format!("path = {p}")),
    ]
}

fn context() -> impl Strategy<Value = CaveatContext> {
    (
        prop::sample::select(vec![Code::Get, Code::Post, Code::Delete]),
        prop::sample::select(vec!["/kv/a", "/kv/a/b", "/kv/b", "/ts/x"]),
        prop::sample::select(vec!["s1", "s2"]),
    )
        .prop_map(|(m, p, t)| CaveatContext::new(m, p, t))
}

proptest! {
    #[test]
    fn attenuation_never_widens(caveats in prop::collection::vec(caveat(), 0..5), extra in caveat(), ctx in context()) {
        let mut t = Macaroon::mint(b"root", "id", "arbiter").unwrap();
        for c in &caveats {
            t = t.add_caveat(c).unwrap();
        }
        let narrowed = t.add_caveat(&extra).unwrap();
        if narrowed.verify(b"root", &ctx).is_ok() {
            prop_assert!(t.verify(b"root", &ctx).is_ok());
        }
        prop_assert_eq!(t.caveats().len(), caveats.len());
    }

    #[test]
    fn wildcard_prefix(prefix in "/[a-z]{1,5}(/[a-z]{1,5}){0,2}", rest in "[a-z/]{0,10}") {
        let path = format!("{prefix}/{rest}");
        let pattern = format!("{prefix}/*");
        prop_assert!(path_matches(&pattern, &path));
        prop_assert!(path_matches("*", &path));
        prop_assert!(path_matches(&path, &path));
    }
}
