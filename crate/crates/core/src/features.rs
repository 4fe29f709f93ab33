//! Pairwise temporal features: TRP positioning and windowed simultaneous speech.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::timeline::{ActivityStream, ParticipantId, Tick, Utterance};

/// TRP gaps are clipped to `±TRP_CLIP_MS`.
pub const TRP_CLIP_MS: Tick = 5000;

/// Lookback windows as `(near, far)` offsets before `now`; window k covers
/// ticks `[now - far, now - near)`. The three windows tile the last 30 s.
pub const OVERLAP_WINDOWS: [(Tick, Tick); 3] = [(0, 1_000), (1_000, 15_000), (15_000, 30_000)];

/// Longest lookback any feature needs.
pub const MAX_LOOKBACK_MS: Tick = 30_000;

pub fn window_len(k: usize) -> Tick {
    let (near, far) = OVERLAP_WINDOWS[k];
    far - near
}

/// Feature vector for the ordered pair (A, B) at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFeatures {
    /// `None` when A has not spoken yet or B has no utterance starting before A's.
    pub trp_gap_ms: Option<Tick>,
    pub overlap_w1_ms: u32,
    pub overlap_w2_ms: u32,
    pub overlap_w3_ms: u32,
}

impl PairFeatures {
    pub fn overlaps(&self) -> [u32; 3] {
        [self.overlap_w1_ms, self.overlap_w2_ms, self.overlap_w3_ms]
    }

    pub fn with_overlaps(trp_gap_ms: Option<Tick>, w: [u32; 3]) -> Self {
        Self {
            trp_gap_ms,
            overlap_w1_ms: w[0],
            overlap_w2_ms: w[1],
            overlap_w3_ms: w[2],
        }
    }
}

/// Signed distance from the end of B's utterance preceding A's most recent
/// utterance to that utterance's start.
///
/// A's most recent utterance is the last one starting at or before `now`.
/// B's antecedent is B's latest utterance starting strictly before it; if
/// that utterance is still running at A's start the result is negative. B's
/// end is never read past `now`.
pub fn trp_gap(a_utts: &[Utterance], b_utts: &[Utterance], now: Tick) -> Option<Tick> {
    let a_idx = a_utts.partition_point(|u| u.start <= now);
    let ua = a_utts.get(a_idx.checked_sub(1)?)?;
    let b_idx = b_utts.partition_point(|u| u.start < ua.start);
    let ub = b_utts.get(b_idx.checked_sub(1)?)?;
    let gap = ua.start - ub.end.min(now);
    Some(gap.clamp(-TRP_CLIP_MS, TRP_CLIP_MS))
}

/// Ticks in each lookback window where both streams are speech.
pub fn simultaneous_speech(sa: &ActivityStream, sb: &ActivityStream, now: Tick) -> [u32; 3] {
    let mut out = [0u32; 3];
    for (k, &(near, far)) in OVERLAP_WINDOWS.iter().enumerate() {
        let lo = (now - far).max(sa.start()).max(sb.start());
        let hi = (now - near).min(sa.end()).min(sb.end());
        if lo >= hi {
            continue;
        }
        let a = &sa.bits()[(lo - sa.start()) as usize..(hi - sa.start()) as usize];
        let b = &sb.bits()[(lo - sb.start()) as usize..(hi - sb.start()) as usize];
        out[k] = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as u32;
    }
    out
}

/// Features for every ordered pair of distinct participants.
///
/// `streams[i]` and `utterances[i]` must describe the same participant.
pub fn extract_all(
    streams: &[ActivityStream],
    utterances: &[Vec<Utterance>],
    now: Tick,
) -> BTreeMap<(ParticipantId, ParticipantId), PairFeatures> {
    debug_assert_eq!(streams.len(), utterances.len());
    let mut out = BTreeMap::new();
    for i in 0..streams.len() {
        for j in (i + 1)..streams.len() {
            let w = simultaneous_speech(&streams[i], &streams[j], now);
            let (a, b) = (streams[i].participant(), streams[j].participant());
            out.insert(
                (a, b),
                PairFeatures::with_overlaps(trp_gap(&utterances[i], &utterances[j], now), w),
            );
            out.insert(
                (b, a),
                PairFeatures::with_overlaps(trp_gap(&utterances[j], &utterances[i], now), w),
            );
        }
    }
    out
}

/// Running count of jointly-active ticks for one pair, supporting O(1)
/// window queries.
#[derive(Debug, Clone)]
pub struct OverlapCounter {
    origin: Tick,
    cumulative: Vec<u32>,
}

impl OverlapCounter {
    pub fn new(origin: Tick) -> Self {
        Self {
            origin,
            cumulative: vec![0],
        }
    }

    /// First tick not yet recorded.
    pub fn end(&self) -> Tick {
        self.origin + self.cumulative.len() as Tick - 1
    }

    pub fn push(&mut self, both_speaking: bool) {
        let last = *self.cumulative.last().unwrap_or(&0);
        self.cumulative.push(last + u32::from(both_speaking));
    }

    /// Jointly-active ticks in `[lo, hi)`; ticks outside the record count as silence.
    pub fn count(&self, lo: Tick, hi: Tick) -> u32 {
        let idx = |t: Tick| (t - self.origin).clamp(0, self.cumulative.len() as Tick - 1) as usize;
        if hi <= lo {
            return 0;
        }
        self.cumulative[idx(hi)] - self.cumulative[idx(lo)]
    }

    pub fn windows(&self, now: Tick) -> [u32; 3] {
        OVERLAP_WINDOWS.map(|(near, far)| self.count(now - far, now - near))
    }
}
