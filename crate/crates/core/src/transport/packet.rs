//! Minimal RTP framing for 20 ms G.711 µ-law frames.
//!
//! ```text
//!  0                   1                   2                   3
//!  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |V=2|P|X|  CC   |M|     PT      |       sequence number         |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |                           timestamp                           |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |                             SSRC                              |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |                    payload (160 µ-law bytes)                  |
//! ```
//!
//! All fields big-endian; P, X, CC and M are written as zero.

use thiserror::Error;

use super::ulaw::{decode_ulaw, encode_ulaw};

pub const RTP_VERSION: u8 = 2;
pub const PAYLOAD_TYPE_PCMU: u8 = 0;
pub const HEADER_LEN: usize = 12;
pub const FRAME_MS: u32 = 20;
pub const SAMPLES_PER_FRAME: usize = 160;
pub const PACKET_LEN: usize = HEADER_LEN + SAMPLES_PER_FRAME;
/// 8000 samples/s × 8 bits per µ-law sample.
pub const WIRE_BITRATE_BPS: u32 = 64_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PacketError {
    #[error("datagram of {0} bytes is too short for an audio packet")]
    Truncated(usize),
    #[error("unsupported RTP version {0}")]
    Version(u8),
    #[error("unsupported payload type {0}")]
    PayloadType(u8),
    #[error("header padding, extensions and CSRC lists are not supported")]
    UnsupportedHeader,
    #[error("payload of {0} bytes, expected {SAMPLES_PER_FRAME}")]
    PayloadLength(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioPacket {
    pub payload_type: u8,
    pub sequence: u16,
    /// Sample clock at 8 kHz.
    pub timestamp: u32,
    pub ssrc: u32,
    /// µ-law bytes, one per sample.
    pub payload: Vec<u8>,
}

impl AudioPacket {
    pub fn from_pcm(sequence: u16, timestamp: u32, ssrc: u32, pcm: &[i16]) -> Result<Self, PacketError> {
        if pcm.len() != SAMPLES_PER_FRAME {
            return Err(PacketError::PayloadLength(pcm.len()));
        }
        Ok(Self {
            payload_type: PAYLOAD_TYPE_PCMU,
            sequence,
            timestamp,
            ssrc,
            payload: encode_ulaw(pcm),
        })
    }

    pub fn pcm(&self) -> Vec<i16> {
        decode_ulaw(&self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(RTP_VERSION << 6);
        out.push(self.payload_type & 0x7F);
        out.extend_from_slice(&self.sequence.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&self.ssrc.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn parse(buf: &[u8]) -> Result<Self, PacketError> {
        if buf.len() < HEADER_LEN {
            return Err(PacketError::Truncated(buf.len()));
        }
        let version = buf[0] >> 6;
        if version != RTP_VERSION {
            return Err(PacketError::Version(version));
        }
        if buf[0] & 0x3F != 0 {
            return Err(PacketError::UnsupportedHeader);
        }
        let payload_type = buf[1] & 0x7F;
        if payload_type != PAYLOAD_TYPE_PCMU {
            return Err(PacketError::PayloadType(payload_type));
        }
        let payload = &buf[HEADER_LEN..];
        if payload.len() != SAMPLES_PER_FRAME {
            return Err(PacketError::PayloadLength(payload.len()));
        }
        Ok(Self {
            payload_type,
            sequence: u16::from_be_bytes([buf[2], buf[3]]),
            timestamp: u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]),
            ssrc: u32::from_be_bytes([buf[8], buf[9], buf[10], buf[11]]),
            payload: payload.to_vec(),
        })
    }
}

/// Chops a PCM stream into consecutive packets for one source.
#[derive(Debug, Clone)]
pub struct Packetizer {
    ssrc: u32,
    sequence: u16,
    timestamp: u32,
}

impl Packetizer {
    pub fn new(ssrc: u32, initial_sequence: u16, initial_timestamp: u32) -> Self {
        Self {
            ssrc,
            sequence: initial_sequence,
            timestamp: initial_timestamp,
        }
    }

    pub fn packetize(&mut self, frame: &[i16]) -> Result<AudioPacket, PacketError> {
        let p = AudioPacket::from_pcm(self.sequence, self.timestamp, self.ssrc, frame)?;
        self.sequence = self.sequence.wrapping_add(1);
        self.timestamp = self.timestamp.wrapping_add(SAMPLES_PER_FRAME as u32);
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = AudioPacket {
            payload_type: 0,
            sequence: 0x1234,
            timestamp: 0xDEADBEEF,
            ssrc: 0x0102_0304,
            payload: vec![0xFF; SAMPLES_PER_FRAME],
        };
        let b = p.to_bytes();
        assert_eq!(b.len(), PACKET_LEN);
        assert_eq!(&b[..12], &[0x80, 0x00, 0x12, 0x34, 0xDE, 0xAD, 0xBE, 0xEF, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_datagrams() {
        let good = AudioPacket::from_pcm(1, 2, 3, &[0; 160]).unwrap().to_bytes();
        assert_eq!(AudioPacket::parse(&good[..8]), Err(PacketError::Truncated(8)));
        let mut v1 = good.clone();
        v1[0] = 0x40;
        assert_eq!(AudioPacket::parse(&v1), Err(PacketError::Version(1)));
        let mut pt = good.clone();
        pt[1] = 8;
        assert_eq!(AudioPacket::parse(&pt), Err(PacketError::PayloadType(8)));
        let mut cc = good.clone();
        cc[0] |= 0x01;
        assert_eq!(AudioPacket::parse(&cc), Err(PacketError::UnsupportedHeader));
        assert_eq!(
            AudioPacket::parse(&good[..100]),
            Err(PacketError::PayloadLength(88))
        );
    }

    #[test]
    fn packetizer_wraps_sequence() {
        let mut p = Packetizer::new(9, u16::MAX, u32::MAX - 100);
        let a = p.packetize(&[0; 160]).unwrap();
        let b = p.packetize(&[0; 160]).unwrap();
        assert_eq!((a.sequence, b.sequence), (u16::MAX, 0));
        assert_eq!(b.timestamp, (u32::MAX - 100).wrapping_add(160));
    }

    #[test]
    fn bitrate_is_toll_quality() {
        let bytes_per_second = SAMPLES_PER_FRAME as u32 * (1000 / FRAME_MS);
        assert_eq!(bytes_per_second * 8, WIRE_BITRATE_BPS);
    }

    proptest! {
        #[test]
        fn wire_round_trip(seq in any::<u16>(), ts in any::<u32>(), ssrc in any::<u32>(), payload in proptest::collection::vec(any::<u8>(), 160)) {
            let p = AudioPacket { payload_type: 0, sequence: seq, timestamp: ts, ssrc, payload };
            prop_assert_eq!(AudioPacket::parse(&p.to_bytes()).unwrap(), p);
        }
    }
}
