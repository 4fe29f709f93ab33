//! Session time base, participant identity, activity streams and utterances.
//!
//! Everything downstream of the voice activity detector works on a single
//! 1 ms tick grid. A [`Tick`] is a signed millisecond count since the session
//! epoch; streams and utterances are expressed on that grid.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since the session epoch.
pub type Tick = i64;

/// Upper bound on the number of simultaneously present participants.
///
/// Exhaustive partition search scores Bell(n) configurations every
/// evaluation period; n = 10 is the largest size that stays inside budget.
pub const MAX_PARTICIPANTS: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimelineError {
    #[error("invalid range: from {from} is after to {to}")]
    InvalidRange { from: Tick, to: Tick },
    #[error("participant id {0} exceeds the maximum of {MAX_PARTICIPANTS} participants")]
    ParticipantIdOutOfRange(usize),
    #[error("invalid utterance [{start}, {end})")]
    InvalidUtterance { start: Tick, end: Tick },
}

/// Session-stable participant index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(u8);

impl ParticipantId {
    pub fn new(id: usize) -> Result<Self, TimelineError> {
        if id >= MAX_PARTICIPANTS {
            return Err(TimelineError::ParticipantIdOutOfRange(id));
        }
        Ok(Self(id as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A participant and the name shown for them in logs and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: ParticipantId,
    pub name: String,
}

/// Per-participant binary speech/non-speech signal, one bit per tick.
///
/// Bit `i` covers tick `start + i`. Reads outside the recorded range are
/// non-speech.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityStream {
    participant: ParticipantId,
    start: Tick,
    bits: Vec<bool>,
}

impl ActivityStream {
    pub fn new(participant: ParticipantId, start: Tick) -> Self {
        Self {
            participant,
            start,
            bits: Vec::new(),
        }
    }

    pub fn from_bits(participant: ParticipantId, start: Tick, bits: Vec<bool>) -> Self {
        Self {
            participant,
            start,
            bits,
        }
    }

    /// Builds a stream covering `[start, end)` that is speech exactly inside
    /// the given utterances.
    pub fn from_utterances(
        participant: ParticipantId,
        start: Tick,
        end: Tick,
        utterances: &[Utterance],
    ) -> Self {
        let len = (end - start).max(0) as usize;
        let mut bits = vec![false; len];
        for u in utterances {
            let lo = (u.start - start).clamp(0, len as i64) as usize;
            let hi = (u.end - start).clamp(0, len as i64) as usize;
            bits[lo..hi].fill(true);
        }
        Self {
            participant,
            start,
            bits,
        }
    }

    pub fn participant(&self) -> ParticipantId {
        self.participant
    }

    pub fn start(&self) -> Tick {
        self.start
    }

    /// First tick not covered by the stream.
    pub fn end(&self) -> Tick {
        self.start + self.bits.len() as Tick
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn push(&mut self, speech: bool) {
        self.bits.push(speech);
    }

    pub fn extend_from_slice(&mut self, bits: &[bool]) {
        self.bits.extend_from_slice(bits);
    }

    /// Pads with non-speech up to (but not including) `tick`.
    pub fn pad_to(&mut self, tick: Tick) {
        let target = (tick - self.start).max(0) as usize;
        if target > self.bits.len() {
            self.bits.resize(target, false);
        }
    }

    pub fn is_speech(&self, tick: Tick) -> bool {
        if tick < self.start {
            return false;
        }
        self.bits
            .get((tick - self.start) as usize)
            .copied()
            .unwrap_or(false)
    }

    pub fn speech_ticks(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Maximal runs of speech as `[start, end)` tick intervals.
    pub fn speech_runs(&self) -> Vec<(Tick, Tick)> {
        let mut runs = Vec::new();
        let mut open: Option<Tick> = None;
        for (i, &b) in self.bits.iter().enumerate() {
            let t = self.start + i as Tick;
            match (b, open) {
                (true, None) => open = Some(t),
                (false, Some(s)) => {
                    runs.push((s, t));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            runs.push((s, self.end()));
        }
        runs
    }
}

/// Returns the sub-stream covering `[from, to)`, padding with non-speech
/// outside the recorded range.
pub fn clip_stream(
    s: &ActivityStream,
    from: Tick,
    to: Tick,
) -> Result<ActivityStream, TimelineError> {
    if from > to {
        return Err(TimelineError::InvalidRange { from, to });
    }
    let bits = (from..to).map(|t| s.is_speech(t)).collect();
    Ok(ActivityStream::from_bits(s.participant, from, bits))
}

/// One participant's contiguous speech interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub participant: ParticipantId,
    pub start: Tick,
    pub end: Tick,
    pub floor_label: Option<u32>,
}

impl Utterance {
    pub fn new(participant: ParticipantId, start: Tick, end: Tick) -> Result<Self, TimelineError> {
        if start >= end {
            return Err(TimelineError::InvalidUtterance { start, end });
        }
        Ok(Self {
            participant,
            start,
            end,
            floor_label: None,
        })
    }

    pub fn labeled(mut self, label: u32) -> Self {
        self.floor_label = Some(label);
        self
    }

    pub fn duration(&self) -> Tick {
        self.end - self.start
    }
}

/// Length of the intersection of two utterances, in milliseconds.
pub fn overlap_ms(a: &Utterance, b: &Utterance) -> Tick {
    interval_overlap((a.start, a.end), (b.start, b.end))
}

pub fn interval_overlap(a: (Tick, Tick), b: (Tick, Tick)) -> Tick {
    (a.1.min(b.1) - a.0.max(b.0)).max(0)
}
