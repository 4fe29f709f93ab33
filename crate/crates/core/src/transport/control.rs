//! Control-channel messages (join, leave, pin, clock sync).
//!
//! Each UDP datagram carries one message: a big-endian `u16` byte count
//! followed by that many bytes of UTF-8 JSON. The JSON object has a `type`
//! field naming the variant; see `docs/protocol.md` for every schema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeline::Tick;

pub const MAX_MESSAGE_LEN: usize = 8 * 1024;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("control datagram of {0} bytes is too short")]
    Truncated(usize),
    #[error("length prefix says {declared} bytes but {actual} follow")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("control message of {0} bytes exceeds the {MAX_MESSAGE_LEN} byte limit")]
    TooLarge(usize),
    #[error("malformed control message: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMessage {
    /// Client asks to enter the space. `audio_ssrc` is the SSRC it will
    /// stamp on its audio packets.
    Join { name: String, audio_ssrc: u32 },
    /// Server accepts a join.
    Joined {
        participant: u8,
        audio_port: u16,
        server_tick: Tick,
    },
    Leave { participant: u8 },
    /// Fix the floor configuration. Floors list participant names;
    /// anyone unlisted is alone.
    Pin { participant: u8, floors: Vec<Vec<String>> },
    Unpin { participant: u8 },
    /// Server-initiated clock probe carrying the server send time.
    SyncProbe { probe: u32, t1: Tick },
    /// Client reply with its receive and send times.
    SyncReply {
        participant: u8,
        probe: u32,
        t1: Tick,
        t2: Tick,
        t3: Tick,
    },
    Ack,
    Error { message: String },
}

impl ControlMessage {
    pub fn encode(&self) -> Result<Vec<u8>, ControlError> {
        let body = serde_json::to_vec(self)?;
        if body.len() > MAX_MESSAGE_LEN {
            return Err(ControlError::TooLarge(body.len()));
        }
        let mut out = Vec::with_capacity(2 + body.len());
        out.extend_from_slice(&(body.len() as u16).to_be_bytes());
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, ControlError> {
        if buf.len() < 2 {
            return Err(ControlError::Truncated(buf.len()));
        }
        let declared = usize::from(u16::from_be_bytes([buf[0], buf[1]]));
        let body = &buf[2..];
        if declared > MAX_MESSAGE_LEN {
            return Err(ControlError::TooLarge(declared));
        }
        if declared != body.len() {
            return Err(ControlError::LengthMismatch {
                declared,
                actual: body.len(),
            });
        }
        Ok(serde_json::from_slice(body)?)
    }
}
