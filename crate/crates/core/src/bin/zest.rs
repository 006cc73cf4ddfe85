//! `zest`: command-line client and node launcher.
//!
//! Exit status: 0 success, 1 the node rejected the request, 2 usage or
//! configuration error, 3 transport failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use zest::client::{Client, ClientError};
use zest::codec::{Code, ContentFormat, Message, ObserveMode};
use zest::config::{load_or_create_key, read_key, write_key, Config};
use zest::launch::{start_arbiter, start_store, LaunchError};
use zest::transport::{ClientKeys, Endpoint, KeyPair, PublicKey, TransportError, DEFAULT_REPLY_PORT};

const EXIT_REJECTED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;

#[derive(Parser)]
#[command(name = "zest", version, about = "Zest protocol client and node launcher")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Target {
    /// zest://host:port/path
    uri: String,
    /// File holding a serialized token.
    #[arg(long)]
    token: Option<PathBuf>,
    /// Server public key, hex or Z85.
    #[arg(long = "server-key")]
    server_key: String,
    /// Client key file; a throwaway key is used without one.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value = "5")]
    timeout: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
    Json,
}

impl From<Format> for ContentFormat {
    fn from(f: Format) -> ContentFormat {
        match f {
            Format::Text => ContentFormat::Text,
            Format::Binary => ContentFormat::Binary,
            Format::Json => ContentFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Data,
    Audit,
    Notify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Store,
    Arbiter,
}

#[derive(Subcommand)]
enum Command {
    Get {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    Post {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Literal payload, or @FILE.
        #[arg(long)]
        payload: Option<String>,
    },
    Delete {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Print observation events until the observation expires.
    Observe {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum)]
        observe: Mode,
        /// Seconds; 0 never expires.
        #[arg(long = "max-age")]
        max_age: Option<u32>,
        /// Router port, if not reply port + 1.
        #[arg(long = "router-port")]
        router_port: Option<u16>,
    },
    /// Run a node from a config file.
    Serve {
        #[arg(value_enum)]
        kind: Kind,
        config: PathBuf,
    },
    /// Create a key file (if missing) and print its public key.
    Keygen {
        file: PathBuf,
        /// Replace an existing key.
        #[arg(long)]
        force: bool,
    },
}

struct Failure(u8, String);

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Failure {
        match e {
            ClientError::Transport(t) => transport_failure(t),
            ClientError::Rejected(code) => Failure(EXIT_REJECTED, code.to_string()),
            other => Failure(EXIT_TRANSPORT, other.to_string()),
        }
    }
}

fn transport_failure(e: TransportError) -> Failure {
    Failure(EXIT_TRANSPORT, format!("transport: {e}"))
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

/// Splits `zest://host[:port]/path`.
fn parse_uri(uri: &str) -> Result<(String, u16, String), Failure> {
    let bad = || usage(format!("malformed uri {uri:?}, expected zest://host:port/path"));
    let rest = uri.strip_prefix("zest://").ok_or_else(bad)?;
    let slash = rest.find('/').ok_or_else(bad)?;
    let (authority, path) = rest.split_at(slash);
    let (host, port) = match authority.rsplit_once(':') {
        Some((h, p)) => (h, p.parse().map_err(|_| bad())?),
        None => (authority, DEFAULT_REPLY_PORT),
    };
    if host.is_empty() || path.contains(char::is_whitespace) {
        return Err(bad());
    }
    Ok((host.to_string(), port, path.to_string()))
}

struct Prepared {
    client: Client,
    path: String,
    token: Vec<u8>,
}

fn prepare(t: &Target, router_port: Option<u16>) -> Result<Prepared, Failure> {
    let (host, port, path) = parse_uri(&t.uri)?;
    let server = PublicKey::parse(&t.server_key).ok_or_else(|| usage("--server-key must be 64 hex digits or 40 Z85 characters"))?;
    let keys = match &t.key {
        Some(file) => read_key(file).map_err(|e| usage(e.to_string()))?,
        None => KeyPair::generate(),
    };
    let token = match &t.token {
        Some(file) => std::fs::read(file).map_err(|e| usage(format!("{}: {e}", file.display())))?,
        None => Vec::new(),
    };
    let mut client = Client::new(Endpoint::tcp(host.clone(), port), ClientKeys::new(keys, Some(server)))
        .with_timeout(Duration::from_secs(t.timeout));
    if let Some(rp) = router_port {
        client = client.with_router(Endpoint::tcp(host, rp));
    }
    Ok(Prepared { client, path, token })
}

fn payload_arg(p: Option<&str>, format: ContentFormat) -> Result<Vec<u8>, Failure> {
    match p {
        None => Ok(Vec::new()),
        Some(s) => match s.strip_prefix('@') {
            Some(file) => std::fs::read(file).map_err(|e| usage(format!("{file}: {e}"))),
            None if format == ContentFormat::Binary => Err(usage("binary payloads must come from @FILE")),
            None => Ok(s.as_bytes().to_vec()),
        },
    }
}

fn print_response(reply: &Message) -> Result<(), Failure> {
    println!("{}", reply.code);
    if !reply.payload.is_empty() {
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(&reply.payload);
        if !reply.payload.ends_with(b"\n") {
            let _ = out.write_all(b"\n");
        }
    }
    if reply.code.is_success() {
        Ok(())
    } else {
        Err(Failure(EXIT_REJECTED, String::new()))
    }
}

fn request(code: Code, t: &Target, format: Format, payload: Option<&str>) -> Result<(), Failure> {
    let p = prepare(t, None)?;
    let format = ContentFormat::from(format);
    let body = payload_arg(payload, format)?;
    let msg = p.client.request(code, &p.path, &p.token, format).with_payload(body);
    let reply = p.client.send(&msg)?;
    print_response(&reply)
}

fn observe(t: &Target, mode: Mode, max_age: Option<u32>, router_port: Option<u16>) -> Result<(), Failure> {
    let p = prepare(t, router_port)?;
    let mode = match mode {
        Mode::Data => ObserveMode::Data,
        Mode::Audit => ObserveMode::Audit,
        Mode::Notify => ObserveMode::Notify,
    };
    let observation = match p.client.observe(&p.path, &p.token, mode, max_age) {
        Ok(o) => o,
        Err(ClientError::Rejected(code)) => {
            println!("{code}");
            return Err(Failure(EXIT_REJECTED, String::new()));
        }
        Err(e) => return Err(e.into()),
    };
    loop {
        if let Some(line) = observation.next_line(Duration::from_millis(200))? {
            println!("{line}");
        } else if observation.expired() {
            return Ok(());
        }
    }
}

fn serve(kind: Kind, config: &Path) -> Result<(), Failure> {
    let cfg = Config::load(config).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    let launch_failure = |e: LaunchError| match e {
        LaunchError::Transport(t) => Failure(EXIT_TRANSPORT, format!("startup: {t}")),
        other => usage(other.to_string()),
    };
    let node = match kind {
        Kind::Store => start_store(&cfg).map_err(launch_failure)?.0,
        Kind::Arbiter => {
            let running = start_arbiter(&cfg).map_err(launch_failure)?;
            println!("manager token written to {}", running.manager_token.display());
            running.node
        }
    };
    println!(
        "{} serving on {} (router {}), public key {}",
        node.name(),
        node.reply_endpoint(),
        node.router_endpoint(),
        node.public_key().to_hex()
    );
    loop {
        thread::park();
    }
}

fn keygen(file: &Path, force: bool) -> Result<(), Failure> {
    let keys = if force {
        let k = KeyPair::generate();
        write_key(file, &k).map(|_| k)
    } else {
        load_or_create_key(file)
    }
    .map_err(|e| usage(e.to_string()))?;
    println!("{}", keys.public().to_hex());
    println!("{}", keys.public().to_z85());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Get { target, format } => request(Code::Get, target, *format, None),
        Command::Post { target, format, payload } => request(Code::Post, target, *format, payload.as_deref()),
        Command::Delete { target, format } => request(Code::Delete, target, *format, None),
        Command::Observe { target, observe: mode, max_age, router_port } => observe(target, *mode, *max_age, *router_port),
        Command::Serve { kind, config } => serve(*kind, config),
        Command::Keygen { file, force } => keygen(file, *force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            if !msg.is_empty() {
                eprintln!("zest: {msg}");
            }
            ExitCode::from(code)
        }
    }
}
