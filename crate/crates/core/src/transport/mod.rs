//! Audio transport: G.711 µ-law over RTP-style UDP framing, playout
//! buffering, clock alignment and the control channel.

pub mod clock;
pub mod control;
pub mod jitter;
pub mod loopback;
pub mod packet;
pub mod ulaw;

pub use clock::{ClockOffset, ClockSample, ClockSync, SyncError};
pub use control::{ControlError, ControlMessage};
pub use jitter::{JitterBuffer, JitterStats, PlayoutFrame};
pub use packet::{AudioPacket, PacketError, Packetizer, SAMPLES_PER_FRAME};
pub use ulaw::{decode_ulaw, encode_ulaw};
