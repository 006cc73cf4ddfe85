//! ZMTP 3.0 framing with the CURVE security mechanism.
//!
//! Only what the two Zest socket pairs need is implemented: the greeting,
//! the HELLO / WELCOME / INITIATE / READY handshake, and MESSAGE commands
//! carrying one encrypted frame each.

use std::fmt;
use std::io::{self, Read, Write};

use crypto_box::aead::{Aead, OsRng};
use crypto_box::{SalsaBox, SecretKey};
use crypto_secretbox::{KeyInit, XSalsa20Poly1305};

use super::TransportError;

/// Upper bound on a single frame; larger frames drop the connection.
pub const MAX_FRAME: usize = 16 << 20;

const FLAG_MORE: u8 = 0x01;
const FLAG_LONG: u8 = 0x02;
const FLAG_COMMAND: u8 = 0x04;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn to_z85(&self) -> String {
        z85::encode(self.0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Accepts the 40 character Z85 form or 64 hex digits.
    pub fn parse(s: &str) -> Option<PublicKey> {
        let bytes = match s.len() {
            40 => z85::decode(s).ok()?,
            64 => hex::decode(s).ok()?,
            _ => return None,
        };
        Some(PublicKey(bytes.try_into().ok()?))
    }

    fn key(&self) -> crypto_box::PublicKey {
        crypto_box::PublicKey::from(self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_z85())
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_z85())
    }
}

/// A node's or client's long-term Curve25519 key pair.
#[derive(Clone)]
pub struct KeyPair {
    secret: SecretKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn generate() -> KeyPair {
        KeyPair::from_key(SecretKey::generate(&mut OsRng))
    }

    pub fn from_secret(bytes: [u8; 32]) -> KeyPair {
        KeyPair::from_key(SecretKey::from(bytes))
    }

    fn from_key(secret: SecretKey) -> KeyPair {
        let public = PublicKey(*secret.public_key().as_bytes());
        KeyPair { secret, public }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public()).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocketType {
    Req,
    Rep,
    Dealer,
    Router,
}

impl SocketType {
    fn name(self) -> &'static [u8] {
        match self {
            SocketType::Req => b"REQ",
            SocketType::Rep => b"REP",
            SocketType::Dealer => b"DEALER",
            SocketType::Router => b"ROUTER",
        }
    }

    fn accepts(self, peer: &[u8]) -> bool {
        let ok: &[&[u8]] = match self {
            SocketType::Req => &[b"REP", b"ROUTER"],
            SocketType::Rep => &[b"REQ", b"DEALER"],
            SocketType::Dealer => &[b"REP", b"DEALER", b"ROUTER"],
            SocketType::Router => &[b"REQ", b"DEALER", b"ROUTER"],
        };
        ok.contains(&peer)
    }
}

fn protocol(msg: impl Into<String>) -> TransportError {
    TransportError::Protocol(msg.into())
}

pub(crate) fn write_frame(w: &mut impl Write, flags: u8, body: &[u8]) -> io::Result<()> {
    let mut head = Vec::with_capacity(9);
    if body.len() > 255 {
        head.push(flags | FLAG_LONG);
        head.extend_from_slice(&(body.len() as u64).to_be_bytes());
    } else {
        head.push(flags);
        head.push(body.len() as u8);
    }
    w.write_all(&head)?;
    w.write_all(body)
}

pub(crate) fn read_frame(r: &mut impl Read) -> Result<(u8, Vec<u8>), TransportError> {
    let mut flags = [0u8; 1];
    r.read_exact(&mut flags)?;
    let flags = flags[0];
    let len = if flags & FLAG_LONG != 0 {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        u64::from_be_bytes(b)
    } else {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        u64::from(b[0])
    };
    if len > MAX_FRAME as u64 {
        return Err(protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok((flags, body))
}

fn greeting(as_server: bool) -> [u8; 64] {
    let mut g = [0u8; 64];
    g[0] = 0xff;
    g[9] = 0x7f;
    g[10] = 3;
    g[11] = 0;
    g[12..17].copy_from_slice(b"CURVE");
    g[32] = u8::from(as_server);
    g
}

fn exchange_greeting(stream: &mut (impl Read + Write), as_server: bool) -> Result<(), TransportError> {
    stream.write_all(&greeting(as_server))?;
    let mut peer = [0u8; 64];
    stream.read_exact(&mut peer)?;
    if peer[0] != 0xff || peer[9] & 1 != 1 {
        return Err(protocol("not a ZMTP peer"));
    }
    if peer[10] < 3 {
        return Err(protocol("ZMTP 3.0 or later required"));
    }
    let mech = &peer[12..32];
    if &mech[..5] != b"CURVE" || mech[5..].iter().any(|b| *b != 0) {
        return Err(protocol("peer does not use the CURVE mechanism"));
    }
    if (peer[32] == 1) == as_server {
        return Err(protocol("both peers claim the same role"));
    }
    Ok(())
}

fn command(name: &str, parts: &[&[u8]]) -> Vec<u8> {
    let mut body = vec![name.len() as u8];
    body.extend_from_slice(name.as_bytes());
    for p in parts {
        body.extend_from_slice(p);
    }
    body
}

fn send_command(w: &mut impl Write, name: &str, parts: &[&[u8]]) -> Result<(), TransportError> {
    write_frame(w, FLAG_COMMAND, &command(name, parts))?;
    Ok(())
}

/// Reads a command frame, returning its data after checking the name.
fn expect_command(r: &mut impl Read, name: &str) -> Result<Vec<u8>, TransportError> {
    let (flags, body) = read_frame(r)?;
    if flags & FLAG_COMMAND == 0 {
        return Err(protocol(format!("expected {name} command")));
    }
    let (got, data) = split_command(&body)?;
    if got == b"ERROR" {
        let reason = data.get(1..).map(String::from_utf8_lossy).unwrap_or_default();
        return Err(TransportError::Rejected(reason.into_owned()));
    }
    if got != name.as_bytes() {
        return Err(protocol(format!("expected {name}, got {}", String::from_utf8_lossy(got))));
    }
    Ok(data.to_vec())
}

fn split_command(body: &[u8]) -> Result<(&[u8], &[u8]), TransportError> {
    let n = *body.first().ok_or_else(|| protocol("empty command"))? as usize;
    if body.len() < 1 + n {
        return Err(protocol("truncated command name"));
    }
    Ok((&body[1..1 + n], &body[1 + n..]))
}

fn nonce(prefix: &[u8], tail: &[u8]) -> crypto_box::Nonce {
    let mut n = [0u8; 24];
    n[..prefix.len()].copy_from_slice(prefix);
    n[prefix.len()..].copy_from_slice(tail);
    n.into()
}

fn random_bytes<const N: usize>() -> [u8; N] {
    use crypto_box::aead::rand_core::RngCore;
    let mut b = [0u8; N];
    OsRng.fill_bytes(&mut b);
    b
}

fn seal(bx: &SalsaBox, n: &crypto_box::Nonce, plain: &[u8]) -> Vec<u8> {
    bx.encrypt(n, plain).expect("in-memory encryption does not fail")
}

fn open(bx: &SalsaBox, n: &crypto_box::Nonce, cipher: &[u8], what: &str) -> Result<Vec<u8>, TransportError> {
    bx.decrypt(n, cipher).map_err(|_| protocol(format!("{what} failed authentication")))
}

pub(crate) fn encode_metadata(props: &[(&str, &[u8])]) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, value) in props {
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.len() as u32).to_be_bytes());
        out.extend_from_slice(value);
    }
    out
}

pub(crate) fn decode_metadata(mut data: &[u8]) -> Result<Vec<(String, Vec<u8>)>, TransportError> {
    let mut props = Vec::new();
    while !data.is_empty() {
        let n = data[0] as usize;
        if data.len() < 1 + n + 4 {
            return Err(protocol("truncated metadata"));
        }
        let name = String::from_utf8_lossy(&data[1..1 + n]).into_owned();
        let len = u32::from_be_bytes(data[1 + n..5 + n].try_into().unwrap()) as usize;
        let rest = &data[5 + n..];
        if rest.len() < len {
            return Err(protocol("truncated metadata value"));
        }
        props.push((name, rest[..len].to_vec()));
        data = &rest[len..];
    }
    Ok(props)
}

fn property<'a>(props: &'a [(String, Vec<u8>)], name: &str) -> Option<&'a [u8]> {
    props.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_slice())
}

/// What the remote end of a completed handshake told us about itself.
#[derive(Debug, Clone)]
pub struct PeerInfo {
    /// The client's long-term key; for clients this is the server key.
    pub key: PublicKey,
    pub identity: Vec<u8>,
}

/// Encrypting half of an established session.
pub(crate) struct SendHalf {
    bx: SalsaBox,
    prefix: &'static [u8; 16],
    counter: u64,
}

impl SendHalf {
    /// Encrypts one message part into a MESSAGE command body.
    pub(crate) fn seal_message(&mut self, more: bool, payload: &[u8]) -> Vec<u8> {
        self.counter += 1;
        let short = self.counter.to_be_bytes();
        let mut plain = Vec::with_capacity(1 + payload.len());
        plain.push(if more { FLAG_MORE } else { 0 });
        plain.extend_from_slice(payload);
        let boxed = seal(&self.bx, &nonce(self.prefix, &short), &plain);
        command("MESSAGE", &[&short, &boxed])
    }

    pub(crate) fn send(&mut self, w: &mut impl Write, parts: &[&[u8]]) -> Result<(), TransportError> {
        let mut out = Vec::new();
        for (i, part) in parts.iter().enumerate() {
            let body = self.seal_message(i + 1 < parts.len(), part);
            write_frame(&mut out, 0, &body)?;
        }
        w.write_all(&out)?;
        w.flush()?;
        Ok(())
    }
}

/// Decrypting half of an established session.
pub(crate) struct RecvHalf {
    bx: SalsaBox,
    prefix: &'static [u8; 16],
    last: u64,
}

impl RecvHalf {
    fn open_part(&mut self, body: &[u8]) -> Result<(bool, Vec<u8>), TransportError> {
        let (name, data) = split_command(body)?;
        if name != b"MESSAGE" || data.len() < 8 + 16 + 1 {
            return Err(protocol("expected MESSAGE"));
        }
        let short = u64::from_be_bytes(data[..8].try_into().unwrap());
        if short <= self.last {
            return Err(protocol("replayed or reordered nonce"));
        }
        let plain = open(&self.bx, &nonce(self.prefix, &data[..8]), &data[8..], "MESSAGE")?;
        self.last = short;
        let more = plain[0] & FLAG_MORE != 0;
        Ok((more, plain[1..].to_vec()))
    }

    /// Reads one complete multipart message.
    pub(crate) fn recv(&mut self, r: &mut impl Read) -> Result<Vec<Vec<u8>>, TransportError> {
        let mut parts = Vec::new();
        loop {
            let (_, body) = read_frame(r)?;
            let (more, part) = self.open_part(&body)?;
            parts.push(part);
            if !more {
                return Ok(parts);
            }
        }
    }
}

fn metadata(socket: SocketType, identity: &[u8]) -> Vec<u8> {
    let mut props: Vec<(&str, &[u8])> = vec![("Socket-Type", socket.name())];
    if matches!(socket, SocketType::Req | SocketType::Dealer) {
        props.push(("Identity", identity));
    }
    encode_metadata(&props)
}

fn check_peer_metadata(local: SocketType, meta: &[u8], key: PublicKey) -> Result<PeerInfo, TransportError> {
    let props = decode_metadata(meta)?;
    let socket_type = property(&props, "Socket-Type").ok_or_else(|| protocol("peer sent no Socket-Type"))?;
    if !local.accepts(socket_type) {
        return Err(protocol(format!("incompatible peer socket {}", String::from_utf8_lossy(socket_type))));
    }
    Ok(PeerInfo {
        key,
        identity: property(&props, "Identity").unwrap_or_default().to_vec(),
    })
}

/// Client side of the handshake. `identity` is announced as the routing id.
pub(crate) fn client_handshake(
    stream: &mut (impl Read + Write),
    keys: &KeyPair,
    server: &PublicKey,
    socket: SocketType,
    identity: &[u8],
) -> Result<(SendHalf, RecvHalf, PeerInfo), TransportError> {
    exchange_greeting(stream, false)?;

    let transient = SecretKey::generate(&mut OsRng);
    let transient_pub = transient.public_key();
    let mut counter = 1u64;

    // HELLO
    let hello_box = SalsaBox::new(&server.key(), &transient);
    let short = counter.to_be_bytes();
    let signature = seal(&hello_box, &nonce(b"CurveZMQHELLO---", &short), &[0u8; 64]);
    send_command(stream, "HELLO", &[&[1, 0], &[0u8; 72], transient_pub.as_bytes(), &short, &signature])?;

    // WELCOME
    let welcome = expect_command(stream, "WELCOME")?;
    if welcome.len() != 16 + 144 {
        return Err(protocol("bad WELCOME size"));
    }
    let plain = open(&hello_box, &nonce(b"WELCOME-", &welcome[..16]), &welcome[16..], "WELCOME")?;
    let server_transient = crypto_box::PublicKey::from(<[u8; 32]>::try_from(&plain[..32]).unwrap());
    let cookie = &plain[32..128];

    // INITIATE
    let session = SalsaBox::new(&server_transient, &transient);
    let vouch_nonce: [u8; 16] = random_bytes();
    let vouch_box = SalsaBox::new(&server_transient, &keys.secret);
    let mut vouch_plain = Vec::with_capacity(64);
    vouch_plain.extend_from_slice(transient_pub.as_bytes());
    vouch_plain.extend_from_slice(&server.0);
    let vouch = seal(&vouch_box, &nonce(b"VOUCH---", &vouch_nonce), &vouch_plain);

    let mut inner = Vec::new();
    inner.extend_from_slice(&keys.public().0);
    inner.extend_from_slice(&vouch_nonce);
    inner.extend_from_slice(&vouch);
    inner.extend_from_slice(&metadata(socket, identity));
    counter += 1;
    let short = counter.to_be_bytes();
    let boxed = seal(&session, &nonce(b"CurveZMQINITIATE", &short), &inner);
    send_command(stream, "INITIATE", &[cookie, &short, &boxed])?;

    // READY
    let ready = expect_command(stream, "READY")?;
    if ready.len() < 8 + 16 {
        return Err(protocol("bad READY size"));
    }
    let server_short = u64::from_be_bytes(ready[..8].try_into().unwrap());
    let meta = open(&session, &nonce(b"CurveZMQREADY---", &ready[..8]), &ready[8..], "READY")?;
    let peer = check_peer_metadata(socket, &meta, *server)?;

    let send = SendHalf { bx: SalsaBox::new(&server_transient, &transient), prefix: b"CurveZMQMESSAGEC", counter };
    let recv = RecvHalf { bx: session, prefix: b"CurveZMQMESSAGES", last: server_short };
    Ok((send, recv, peer))
}

/// Server side of the handshake. `admit` may refuse a peer after it has
/// proven its identity; the refusal is sent as an ERROR command.
pub(crate) fn server_handshake(
    stream: &mut (impl Read + Write),
    keys: &KeyPair,
    socket: SocketType,
    admit: impl FnOnce(&PeerInfo) -> Result<(), String>,
) -> Result<(SendHalf, RecvHalf, PeerInfo), TransportError> {
    exchange_greeting(stream, true)?;

    // HELLO
    let hello = expect_command(stream, "HELLO")?;
    if hello.len() != 2 + 72 + 32 + 8 + 80 {
        return Err(protocol("bad HELLO size"));
    }
    if hello[0] != 1 || hello[1] != 0 {
        return Err(protocol("unsupported CURVE version"));
    }
    let client_transient = crypto_box::PublicKey::from(<[u8; 32]>::try_from(&hello[74..106]).unwrap());
    let hello_short = &hello[106..114];
    let hello_box = SalsaBox::new(&client_transient, &keys.secret);
    let signature = open(&hello_box, &nonce(b"CurveZMQHELLO---", hello_short), &hello[114..], "HELLO")?;
    if signature.iter().any(|b| *b != 0) {
        return Err(protocol("bad HELLO signature"));
    }
    let mut client_last = u64::from_be_bytes(hello_short.try_into().unwrap());

    // WELCOME
    let transient = SecretKey::generate(&mut OsRng);
    let cookie_key: [u8; 32] = random_bytes();
    let cookie_cipher = XSalsa20Poly1305::new(&cookie_key.into());
    let cookie_nonce: [u8; 16] = random_bytes();
    let mut cookie_plain = Vec::with_capacity(64);
    cookie_plain.extend_from_slice(client_transient.as_bytes());
    cookie_plain.extend_from_slice(&transient.to_bytes());
    let cookie_n = nonce(b"COOKIE--", &cookie_nonce);
    let cookie_box = cookie_cipher.encrypt(&cookie_n, cookie_plain.as_slice()).expect("cookie encryption");
    let mut cookie = cookie_nonce.to_vec();
    cookie.extend_from_slice(&cookie_box);

    let mut welcome_plain = transient.public_key().as_bytes().to_vec();
    welcome_plain.extend_from_slice(&cookie);
    let welcome_nonce: [u8; 16] = random_bytes();
    let welcome_box = seal(&hello_box, &nonce(b"WELCOME-", &welcome_nonce), &welcome_plain);
    send_command(stream, "WELCOME", &[&welcome_nonce, &welcome_box])?;

    // INITIATE
    let initiate = expect_command(stream, "INITIATE")?;
    if initiate.len() < 96 + 8 + 16 + 32 + 96 {
        return Err(protocol("bad INITIATE size"));
    }
    let (echoed, rest) = initiate.split_at(96);
    let reopened = cookie_cipher
        .decrypt(&nonce(b"COOKIE--", &echoed[..16]), &echoed[16..])
        .map_err(|_| protocol("cookie failed authentication"))?;
    if reopened != cookie_plain {
        return Err(protocol("cookie mismatch"));
    }
    let short = u64::from_be_bytes(rest[..8].try_into().unwrap());
    if short <= client_last {
        return Err(protocol("INITIATE nonce not increasing"));
    }
    client_last = short;
    let session = SalsaBox::new(&client_transient, &transient);
    let inner = open(&session, &nonce(b"CurveZMQINITIATE", &rest[..8]), &rest[8..], "INITIATE")?;
    if inner.len() < 32 + 16 + 80 {
        return Err(protocol("short INITIATE box"));
    }
    let client_key = PublicKey(inner[..32].try_into().unwrap());
    let vouch_box = SalsaBox::new(&client_key.key(), &transient);
    let vouch = open(&vouch_box, &nonce(b"VOUCH---", &inner[32..48]), &inner[48..128], "vouch")?;
    if vouch[..32] != client_transient.as_bytes()[..] || vouch[32..] != keys.public().0 {
        return Err(protocol("vouch does not match session"));
    }
    let peer = check_peer_metadata(socket, &inner[128..], client_key)?;

    if let Err(reason) = admit(&peer) {
        let mut data = vec![reason.len().min(255) as u8];
        data.extend_from_slice(&reason.as_bytes()[..reason.len().min(255)]);
        send_command(stream, "ERROR", &[&data])?;
        return Err(TransportError::Rejected(reason));
    }

    // READY
    let counter = 1u64;
    let short = counter.to_be_bytes();
    let ready = seal(&session, &nonce(b"CurveZMQREADY---", &short), &metadata(socket, b""));
    send_command(stream, "READY", &[&short, &ready])?;

    let send = SendHalf { bx: SalsaBox::new(&client_transient, &transient), prefix: b"CurveZMQMESSAGES", counter };
    let recv = RecvHalf { bx: session, prefix: b"CurveZMQMESSAGEC", last: client_last };
    Ok((send, recv, peer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::net::UnixStream;
    use std::thread;

    #[test]
    fn frame_lengths() {
        let mut buf = Vec::new();
        write_frame(&mut buf, 0, &[7; 10]).unwrap();
        assert_eq!(&buf[..2], &[0, 10]);
        let mut long = Vec::new();
        write_frame(&mut long, FLAG_MORE, &[7; 300]).unwrap();
        assert_eq!(long[0], FLAG_MORE | FLAG_LONG);
        assert_eq!(&long[1..9], &300u64.to_be_bytes());
        let (flags, body) = read_frame(&mut long.as_slice()).unwrap();
        assert_eq!((flags, body.len()), (FLAG_MORE | FLAG_LONG, 300));
    }

    #[test]
    fn metadata_round_trip() {
        let m = encode_metadata(&[("Socket-Type", b"DEALER"), ("Identity", b"abc")]);
        let props = decode_metadata(&m).unwrap();
        assert_eq!(property(&props, "socket-type"), Some(&b"DEALER"[..]));
        assert_eq!(property(&props, "Identity"), Some(&b"abc"[..]));
        assert!(decode_metadata(&m[..m.len() - 1]).is_err());
    }

    #[test]
    fn key_encodings() {
        let k = KeyPair::generate().public();
        assert_eq!(PublicKey::parse(&k.to_z85()), Some(k));
        assert_eq!(PublicKey::parse(&k.to_hex()), Some(k));
        assert_eq!(PublicKey::parse("short"), None);
    }

    type ServerSide = Result<(SendHalf, RecvHalf, PeerInfo), TransportError>;

    fn pair(
        server_keys: KeyPair,
        expected_server: PublicKey,
        identity: &'static [u8],
    ) -> (ServerSide, Result<PeerInfo, TransportError>, PublicKey) {
        let (mut a, mut b) = UnixStream::pair().unwrap();
        let client_keys = KeyPair::generate();
        let client_pub = client_keys.public();
        let server = thread::spawn(move || {
            server_handshake(&mut b, &server_keys, SocketType::Router, |p| {
                if p.identity.is_empty() {
                    Err("identity required".into())
                } else {
                    Ok(())
                }
            })
            .map(|(mut tx, mut rx, peer)| {
                let msg = rx.recv(&mut b).unwrap();
                tx.send(&mut b, &[&msg.concat()]).unwrap();
                peer
            })
        });
        let client = client_handshake(&mut a, &client_keys, &expected_server, SocketType::Dealer, identity)
            .map(|(mut tx, mut rx, peer)| {
                tx.send(&mut a, &[b"hel", b"lo"]).unwrap();
                assert_eq!(rx.recv(&mut a).unwrap(), vec![b"hello".to_vec()]);
                (tx, rx, peer)
            });
        (client, server.join().unwrap(), client_pub)
    }

    #[test]
    fn handshake_and_messages() {
        let server_keys = KeyPair::generate();
        let server_pub = server_keys.public();
        let (client, server, client_pub) = pair(server_keys, server_pub, b"U1");
        let (_, _, seen_server) = client.unwrap();
        assert_eq!(seen_server.key, server_pub);
        let seen_client = server.unwrap();
        assert_eq!(seen_client.key, client_pub);
        assert_eq!(seen_client.identity, b"U1");
    }

    #[test]
    fn wrong_server_key_fails() {
        let server_keys = KeyPair::generate();
        let (client, server, _) = pair(server_keys, KeyPair::generate().public(), b"U1");
        assert!(client.is_err());
        assert!(server.is_err());
    }

    #[test]
    fn admit_refusal_reaches_client() {
        let server_keys = KeyPair::generate();
        let server_pub = server_keys.public();
        let (client, server, _) = pair(server_keys, server_pub, b"");
        assert!(matches!(client, Err(TransportError::Rejected(ref r)) if r == "identity required"));
        assert!(matches!(server, Err(TransportError::Rejected(_))));
    }

    #[test]
    fn tampered_message_rejected() {
        let keys = KeyPair::generate();
        let bx = || SalsaBox::new(&keys.public().key(), &keys.secret);
        let mut tx = SendHalf { bx: bx(), prefix: b"CurveZMQMESSAGEC", counter: 0 };
        let mut rx = RecvHalf { bx: bx(), prefix: b"CurveZMQMESSAGEC", last: 0 };
        let mut wire = Vec::new();
        tx.send(&mut wire, &[b"payload"]).unwrap();
        let mut replay = wire.clone();
        assert_eq!(rx.recv(&mut wire.as_slice()).unwrap(), vec![b"payload".to_vec()]);
        assert!(rx.recv(&mut replay.as_slice()).is_err(), "replayed nonce accepted");
        let mut rx = RecvHalf { bx: bx(), prefix: b"CurveZMQMESSAGEC", last: 0 };
        let n = replay.len();
        replay[n - 1] ^= 1;
        assert!(rx.recv(&mut replay.as_slice()).is_err());
    }
}
