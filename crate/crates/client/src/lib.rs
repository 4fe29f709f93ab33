//! Thin client for a floorspace server: [`ApiClient`] speaks the HTTP/JSON
//! API, [`AudioSession`] joins over UDP and streams audio.

pub mod api;
pub mod audio;

pub use api::ApiClient;
pub use audio::{AudioSession, ClientClock, JoinOptions};

use floorspace_core::transport::{ControlError, PacketError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server answered {status}: {message}")]
    Api { status: u16, message: String },
    #[error("server refused: {0}")]
    Rejected(String),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
}
