//! Node configuration files: flat `key=value` lines, `#` comments.
//!
//! ```text
//! name=store1
//! host=127.0.0.1
//! reply_port=5555
//! router_port=5556
//! secret_file=store1.secret
//! key_file=store1.key
//! data_dir=data/store1
//! max_payload=65536
//! # arbiter only
//! target.store1=store1.secret
//! client.logger=<64 hex digits>
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::node::DEFAULT_MAX_PAYLOAD;
use crate::transport::{KeyPair, PublicKey, DEFAULT_REPLY_PORT};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key {0:?}")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub name: String,
    pub host: String,
    pub reply_port: u16,
    /// Defaults to `reply_port + 1`.
    pub router_port: u16,
    pub secret_file: PathBuf,
    pub key_file: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub max_payload: usize,
    /// Target node name to secret file.
    pub targets: BTreeMap<String, PathBuf>,
    /// Client name to transport key.
    pub clients: BTreeMap<String, PublicKey>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Config, ConfigError> {
        let mut values = BTreeMap::new();
        let mut targets = BTreeMap::new();
        let mut clients = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(target) = key.strip_prefix("target.") {
                targets.insert(target.to_string(), base.join(value));
            } else if let Some(client) = key.strip_prefix("client.") {
                let k = PublicKey::parse(value).ok_or_else(|| syntax(format!("bad public key for {client}")))?;
                clients.insert(client.to_string(), k);
            } else if matches!(
                key,
                "name" | "host" | "reply_port" | "router_port" | "secret_file" | "key_file" | "data_dir" | "max_payload"
            ) {
                values.insert(key, value.to_string());
            } else {
                return Err(syntax(format!("unknown key {key:?}")));
            }
        }
        let port = |key: &str| -> Result<Option<u16>, ConfigError> {
            values
                .get(key)
                .map(|v| v.parse().map_err(|_| ConfigError::Invalid(format!("{key} must be a port number"))))
                .transpose()
        };
        let reply_port = port("reply_port")?.unwrap_or(DEFAULT_REPLY_PORT);
        let router_port = port("router_port")?.unwrap_or(reply_port.wrapping_add(1));
        let max_payload = match values.get("max_payload") {
            Some(v) => v.parse().map_err(|_| ConfigError::Invalid("max_payload must be a byte count".into()))?,
            None => DEFAULT_MAX_PAYLOAD,
        };
        let required = |key: &'static str| values.get(key).cloned().ok_or(ConfigError::Missing(key));
        Ok(Config {
            name: required("name")?,
            host: values.get("host").cloned().unwrap_or_else(|| "127.0.0.1".into()),
            reply_port,
            router_port,
            secret_file: base.join(required("secret_file")?),
            key_file: base.join(required("key_file")?),
            data_dir: values.get("data_dir").map(|d| base.join(d)),
            max_payload,
            targets,
            clients,
        })
    }
}

/// Reads a root secret. One trailing newline is ignored.
pub fn read_secret(path: &Path) -> Result<Vec<u8>, ConfigError> {
    let mut bytes = fs::read(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    if bytes.last() == Some(&b'\n') {
        bytes.pop();
        if bytes.last() == Some(&b'\r') {
            bytes.pop();
        }
    }
    if bytes.is_empty() {
        return Err(ConfigError::Invalid(format!("{} is empty", path.display())));
    }
    Ok(bytes)
}

/// Key files hold the secret key as 64 hex digits.
pub fn read_key(path: &Path) -> Result<KeyPair, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    let bytes = hex::decode(text.trim()).map_err(|_| ConfigError::Invalid(format!("{}: not hex", path.display())))?;
    let secret: [u8; 32] =
        bytes.try_into().map_err(|_| ConfigError::Invalid(format!("{}: expected 32 bytes", path.display())))?;
    Ok(KeyPair::from_secret(secret))
}

pub fn write_key(path: &Path, keys: &KeyPair) -> Result<(), ConfigError> {
    let io = |source| ConfigError::Io { path: path.into(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, format!("{}\n", hex::encode(keys.secret_bytes()))).map_err(io)
}

/// Loads the key file, creating it with a fresh key pair if absent.
pub fn load_or_create_key(path: &Path) -> Result<KeyPair, ConfigError> {
    if path.exists() {
        return read_key(path);
    }
    let keys = KeyPair::generate();
    write_key(path, &keys)?;
    Ok(keys)
}
