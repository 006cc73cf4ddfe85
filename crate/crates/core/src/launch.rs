//! Starting store and arbiter nodes from a [`Config`].

use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::arbiter::Arbiter;
use crate::config::{load_or_create_key, read_secret, Config, ConfigError};
use crate::node::{Node, NodeConfig};
use crate::store::{Store, StoreError};
use crate::tokens::TokenError;
use crate::transport::{Endpoint, KeyPair, TransportError};

pub const MANAGER_TOKEN_FILE: &str = "manager.token";

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn node_config(cfg: &Config, keys: KeyPair, secret: &[u8]) -> NodeConfig {
    NodeConfig::new(
        &cfg.name,
        Endpoint::tcp(cfg.host.clone(), cfg.reply_port),
        Endpoint::tcp(cfg.host.clone(), cfg.router_port),
        keys,
        secret,
    )
    .with_max_payload(cfg.max_payload)
}

/// Opens the store in `data_dir` (in memory without one) and binds it.
pub fn start_store(cfg: &Config) -> Result<(Node, Arc<Store>), LaunchError> {
    let keys = load_or_create_key(&cfg.key_file)?;
    let secret = read_secret(&cfg.secret_file)?;
    let store = Arc::new(match &cfg.data_dir {
        Some(dir) => Store::open(dir)?,
        None => Store::in_memory(),
    });
    let node = Node::start(node_config(cfg, keys, &secret), store.clone())?;
    Ok((node, store))
}

pub struct RunningArbiter {
    pub node: Node,
    pub arbiter: Arc<Arbiter>,
    /// Where the manager token was written.
    pub manager_token: PathBuf,
}

/// Starts the arbiter and writes a fresh manager token to
/// `<data_dir>/manager.token` (next to the key file without a data dir).
pub fn start_arbiter(cfg: &Config) -> Result<RunningArbiter, LaunchError> {
    let keys = load_or_create_key(&cfg.key_file)?;
    let secret = read_secret(&cfg.secret_file)?;
    let arbiter = Arc::new(Arbiter::new(&cfg.name, &secret)?);
    for (target, path) in &cfg.targets {
        arbiter.add_target(target, &read_secret(path)?);
    }
    for (client, key) in &cfg.clients {
        arbiter.register_client(*key, client);
    }
    let dir = match &cfg.data_dir {
        Some(d) => d.clone(),
        None => cfg.key_file.parent().map(PathBuf::from).unwrap_or_default(),
    };
    let manager_token = dir.join(MANAGER_TOKEN_FILE);
    let io = |source| LaunchError::Io { path: manager_token.clone(), source };
    fs::create_dir_all(&dir).map_err(io)?;
    fs::write(&manager_token, arbiter.manager_token().serialize()).map_err(io)?;
    let node = Node::start(node_config(cfg, keys, &secret), arbiter.clone())?;
    Ok(RunningArbiter { node, arbiter, manager_token })
}
