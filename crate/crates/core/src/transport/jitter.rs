//! Fixed-depth playout buffer for one audio source.
//!
//! The first packet to arrive anchors the playout clock: it is played
//! `depth_ms` after its arrival and every later sequence number one frame
//! period after its predecessor. Packets for frames that have already been
//! played are late and dropped; a missing frame plays as silence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::packet::{AudioPacket, FRAME_MS, SAMPLES_PER_FRAME};
use crate::timeline::Tick;

pub const DEFAULT_DEPTH_MS: u32 = 60;

/// Packets further than this many frames ahead of playout are treated as
/// a stream restart rather than buffered.
const MAX_AHEAD_FRAMES: i64 = 256;

/// After this many consecutive slots with nothing buffered the source is
/// taken to have stopped: playout goes idle until the next packet, which
/// anchors it afresh.
pub const IDLE_AFTER_FRAMES: u32 = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JitterStats {
    pub received: u64,
    pub played: u64,
    pub lost: u64,
    pub late: u64,
    pub duplicate: u64,
    pub resets: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayoutFrame {
    pub pcm: Vec<i16>,
    pub timestamp: u32,
    pub lost: bool,
}

#[derive(Debug, Clone)]
pub struct JitterBuffer {
    depth_ms: u32,
    /// Highest extended sequence number seen; reference for unwrapping.
    highest: Option<i64>,
    /// Extended sequence number due at the next pop.
    next: i64,
    /// Tick at which `next` may be played.
    anchor: Tick,
    started: bool,
    /// Consecutive slots played while the buffer was empty.
    starved: u32,
    /// Extended sequence number and RTP timestamp of one received packet,
    /// used to extrapolate timestamps for lost frames.
    ts_ref: (i64, u32),
    frames: BTreeMap<i64, Vec<i16>>,
    stats: JitterStats,
}

impl Default for JitterBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_DEPTH_MS)
    }
}

impl JitterBuffer {
    pub fn new(depth_ms: u32) -> Self {
        Self {
            depth_ms,
            highest: None,
            next: 0,
            anchor: 0,
            started: false,
            starved: 0,
            ts_ref: (0, 0),
            frames: BTreeMap::new(),
            stats: JitterStats::default(),
        }
    }

    pub fn depth_ms(&self) -> u32 {
        self.depth_ms
    }

    pub fn stats(&self) -> JitterStats {
        self.stats
    }

    pub fn buffered(&self) -> usize {
        self.frames.len()
    }

    fn extend(&self, seq: u16) -> i64 {
        match self.highest {
            None => i64::from(seq),
            Some(h) => {
                let delta = seq.wrapping_sub(h as u16) as i16;
                h + i64::from(delta)
            }
        }
    }

    fn reset(&mut self, ext: i64, arrival: Tick) {
        self.frames.clear();
        self.highest = Some(ext);
        self.ts_ref = (ext, 0);
        self.next = ext;
        self.anchor = arrival + Tick::from(self.depth_ms);
        self.started = false;
        self.starved = 0;
    }

    pub fn push(&mut self, packet: &AudioPacket, arrival: Tick) {
        self.stats.received += 1;
        let ext = self.extend(packet.sequence);
        if self.highest.is_none() {
            self.reset(ext, arrival);
        } else if ext - self.next > MAX_AHEAD_FRAMES || self.next - ext > MAX_AHEAD_FRAMES {
            self.stats.resets += 1;
            self.reset(ext, arrival);
        }
        if ext < self.next {
            self.stats.late += 1;
            return;
        }
        if self.frames.contains_key(&ext) {
            self.stats.duplicate += 1;
            return;
        }
        self.highest = Some(self.highest.map_or(ext, |h| h.max(ext)));
        self.ts_ref = (ext, packet.timestamp);
        self.frames.insert(ext, packet.pcm());
    }

    /// Frame for the playout slot at `playout_tick`, or `None` while the
    /// buffer is still priming (nothing received yet or depth not reached).
    pub fn pop(&mut self, playout_tick: Tick) -> Option<Vec<i16>> {
        self.pop_frame(playout_tick).map(|f| f.pcm)
    }

    /// Like [`pop`](Self::pop), but also reports the slot's RTP timestamp
    /// (extrapolated at one frame per sequence number when the packet was
    /// lost) and whether it was lost.
    pub fn pop_frame(&mut self, playout_tick: Tick) -> Option<PlayoutFrame> {
        self.highest?;
        if !self.started {
            if playout_tick < self.anchor {
                return None;
            }
            self.started = true;
        }
        let seq = self.next;
        self.next += 1;
        self.stats.played += 1;
        // anything older than the slot being played can no longer be used
        while let Some((&k, _)) = self.frames.first_key_value() {
            if k >= seq {
                break;
            }
            self.frames.pop_first();
        }
        let (ref_seq, ref_ts) = self.ts_ref;
        let timestamp = ref_ts.wrapping_add(((seq - ref_seq) * SAMPLES_PER_FRAME as i64) as u32);
        let (pcm, lost) = match self.frames.remove(&seq) {
            Some(pcm) => {
                self.starved = 0;
                (pcm, false)
            }
            None => {
                self.stats.lost += 1;
                if self.frames.is_empty() {
                    self.starved += 1;
                    if self.starved >= IDLE_AFTER_FRAMES {
                        self.highest = None;
                    }
                }
                (vec![0; SAMPLES_PER_FRAME], true)
            }
        };
        Some(PlayoutFrame { pcm, timestamp, lost })
    }

    /// Nominal playout tick of the frame due at the next pop.
    pub fn next_playout_tick(&self) -> Option<Tick> {
        self.highest?;
        Some(self.anchor)
    }

    pub fn frame_ms(&self) -> u32 {
        FRAME_MS
    }
}
