//! Two-way clock offset estimation between the server and one client.
//!
//! The server stamps a probe with its send time `t1`; the client records
//! receive time `t2` and reply time `t3` on its own clock; the server
//! records the reply's arrival `t4`. The estimate is exact when the two
//! network legs have equal delay and is biased by half their difference
//! otherwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeline::Tick;

/// Resync interval for live sessions.
pub const SYNC_INTERVAL_MS: Tick = 10_000;
pub const SYNC_TIMEOUT_MS: Tick = 2_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SyncError {
    #[error("clock probe {0} timed out")]
    Timeout(u32),
    #[error("reply for unknown clock probe {0}")]
    UnknownProbe(u32),
    #[error("reply carries inconsistent timestamps")]
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockSample {
    pub t1: Tick,
    pub t2: Tick,
    pub t3: Tick,
    pub t4: Tick,
}

impl ClockSample {
    /// Client clock minus server clock.
    pub fn offset_ms(&self) -> Tick {
        ((self.t2 - self.t1) + (self.t3 - self.t4)).div_euclid(2)
    }

    pub fn round_trip_ms(&self) -> Tick {
        (self.t4 - self.t1) - (self.t3 - self.t2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClockOffset {
    pub offset_ms: Tick,
    pub round_trip_ms: Tick,
    pub last_sync: Tick,
}

impl ClockOffset {
    pub fn to_server(&self, client_tick: Tick) -> Tick {
        client_tick - self.offset_ms
    }

    pub fn to_client(&self, server_tick: Tick) -> Tick {
        server_tick + self.offset_ms
    }
}

/// Server-side bookkeeping for one client's sync exchanges.
#[derive(Debug, Clone, Default)]
pub struct ClockSync {
    current: Option<ClockOffset>,
    pending: BTreeMap<u32, Tick>,
    next_probe: u32,
}

impl ClockSync {
    pub fn new() -> Self {
        Self::default()
    }

    /// Latest successful estimate; zero offset until one exists.
    pub fn offset(&self) -> ClockOffset {
        self.current.unwrap_or_default()
    }

    pub fn is_synced(&self) -> bool {
        self.current.is_some()
    }

    pub fn due(&self, now: Tick) -> bool {
        self.pending.is_empty()
            && self
                .current
                .is_none_or(|c| now - c.last_sync >= SYNC_INTERVAL_MS)
    }

    /// Starts an exchange; returns the probe id and `t1` to send.
    pub fn start_probe(&mut self, now: Tick) -> (u32, Tick) {
        let id = self.next_probe;
        self.next_probe = self.next_probe.wrapping_add(1);
        self.pending.insert(id, now);
        (id, now)
    }

    pub fn on_reply(&mut self, probe: u32, t2: Tick, t3: Tick, t4: Tick) -> Result<ClockOffset, SyncError> {
        let t1 = self.pending.remove(&probe).ok_or(SyncError::UnknownProbe(probe))?;
        let sample = ClockSample { t1, t2, t3, t4 };
        if t3 < t2 || sample.round_trip_ms() < 0 {
            return Err(SyncError::Inconsistent);
        }
        let est = ClockOffset {
            offset_ms: sample.offset_ms(),
            round_trip_ms: sample.round_trip_ms(),
            last_sync: t4,
        };
        self.current = Some(est);
        Ok(est)
    }

    /// Drops probes older than the timeout. The previous estimate stays in
    /// force.
    pub fn expire(&mut self, now: Tick) -> Vec<SyncError> {
        let stale: Vec<u32> = self
            .pending
            .iter()
            .filter(|(_, &t1)| now - t1 >= SYNC_TIMEOUT_MS)
            .map(|(&id, _)| id)
            .collect();
        stale
            .into_iter()
            .map(|id| {
                self.pending.remove(&id);
                SyncError::Timeout(id)
            })
            .collect()
    }
}

/// Runs one exchange arithmetically: the client clock reads
/// `server + client_skew`, the probe takes `up_ms` and the reply `down_ms`,
/// and the client turns the probe around in `hold_ms`.
pub fn simulate_exchange(server_t1: Tick, client_skew: Tick, up_ms: Tick, down_ms: Tick, hold_ms: Tick) -> ClockSample {
    let t2 = server_t1 + up_ms + client_skew;
    let t3 = t2 + hold_ms;
    let t4 = server_t1 + up_ms + hold_ms + down_ms;
    ClockSample { t1: server_t1, t2, t3, t4 }
}
