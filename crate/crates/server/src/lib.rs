//! Live floor-detection server.
//!
//! Clients join over a UDP control channel, stream RTP µ-law audio to the
//! audio port and receive their personal mix back on the same socket. An
//! HTTP/JSON API reports status and the configuration-change log and
//! accepts pins. [`hub::Hub`] holds all the logic with explicit time so it
//! can be driven deterministically; [`service`] runs it on real sockets.

pub mod config;
pub mod http;
pub mod hub;
pub mod queue;
pub mod service;

pub use config::{ConfigError, ConfigOverrides, ServerConfig};
pub use hub::{Hub, HubConfig, HubError, Outgoing};
pub use service::{serve, Addresses, BoundServer, DynScorer, RunningServer, ServerError};
