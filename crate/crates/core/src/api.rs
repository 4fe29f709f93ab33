//! JSON bodies of the server's HTTP API, shared by server and client.

use serde::{Deserialize, Serialize};

use crate::engine::ConfigChange;
use crate::timeline::Tick;
use crate::transport::JitterStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantStatus {
    pub id: u8,
    pub name: String,
    /// Spoke within the feature lookback.
    pub active: bool,
    pub synced: bool,
    /// Client clock minus server clock.
    pub offset_ms: Tick,
    pub round_trip_ms: Tick,
    pub jitter: JitterStats,
    /// VAD decisions that reached the timeline after analysis had passed them.
    pub late_decisions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationView {
    pub floors: Vec<Vec<String>>,
    pub score: f64,
    pub pinned: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub control_errors: u64,
    pub bad_packets: u64,
    pub unknown_source: u64,
    /// Inbound audio packets evicted from the full analysis queue.
    pub queue_dropped: u64,
    pub frames_mixed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    /// Server clock in ms since start.
    pub now: Tick,
    /// Next tick the floor analysis will consume.
    pub analysis_tick: Tick,
    pub eval_period_ms: Tick,
    pub evaluations: u64,
    pub participants: Vec<ParticipantStatus>,
    pub configuration: Option<ConfigurationView>,
    pub events: usize,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsPage {
    /// Index of the first event in `events` within the full log.
    pub from: usize,
    pub events: Vec<ConfigChange>,
    /// Pass as `since` to fetch only newer events.
    pub next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsView {
    pub participants: Vec<String>,
    /// `matrix[l][s]` is the gain of speaker `s` in listener `l`'s mix.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinRequest {
    /// Name of the participant who holds the pin.
    pub owner: String,
    pub floors: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpinRequest {
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
