//! Zest: REST-style request/reply over ZeroMQ-compatible sockets, with
//! macaroon access control, observation streams and brokered notifications.
//!
//! - [`codec`]: the binary message format.
//! - [`tokens`]: macaroons with target, method and path caveats.
//! - [`transport`]: ZMTP 3.0 with CurveZMQ over TCP, and an in-memory transport.
//! - [`node`]: the request pipeline, observations and catalogue shared by every node.
//! - [`store`]: key/value and time-series storage with an audit trail.
//! - [`broker`]: request/response between nodes that never connect directly.
//! - [`arbiter`]: permission grants and token minting.
//! - [`client`], [`config`], [`launch`]: client API and node startup.

pub mod arbiter;
pub mod broker;
pub mod client;
pub mod clock;
pub mod codec;
pub mod config;
pub mod launch;
pub mod node;
pub mod store;
pub mod tokens;
pub mod transport;
