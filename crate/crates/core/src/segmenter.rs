//! Turns binary activity into utterances: speech runs separated by short
//! gaps are bridged first, then runs that are still too short are dropped.

use serde::{Deserialize, Serialize};

use crate::timeline::{ActivityStream, ParticipantId, Tick, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub min_utterance_ms: u32,
    pub bridge_gap_ms: u32,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            min_utterance_ms: 100,
            bridge_gap_ms: 200,
        }
    }
}

impl SegmenterConfig {
    /// No bridging and no minimum: output is exactly the maximal speech runs.
    pub const RAW: Self = Self {
        min_utterance_ms: 0,
        bridge_gap_ms: 0,
    };
}

pub fn segment(s: &ActivityStream, cfg: SegmenterConfig) -> Vec<Utterance> {
    let bridge = Tick::from(cfg.bridge_gap_ms);
    let min = Tick::from(cfg.min_utterance_ms);

    let mut merged: Vec<(Tick, Tick)> = Vec::new();
    for (start, end) in s.speech_runs() {
        match merged.last_mut() {
            Some(last) if start - last.1 < bridge => last.1 = end,
            _ => merged.push((start, end)),
        }
    }
    merged
        .into_iter()
        .filter(|(start, end)| end - start >= min)
        .map(|(start, end)| Utterance {
            participant: s.participant(),
            start,
            end,
            floor_label: None,
        })
        .collect()
}

/// Incremental segmenter fed one tick at a time.
///
/// [`utterances`](Self::utterances) includes the utterance still in progress
/// once it has reached the minimum length; its `end` is the running end and
/// grows as speech continues.
#[derive(Debug, Clone)]
pub struct OnlineSegmenter {
    participant: ParticipantId,
    cfg: SegmenterConfig,
    next_tick: Option<Tick>,
    open: Option<(Tick, Tick)>,
    published: bool,
    utterances: Vec<Utterance>,
}

impl OnlineSegmenter {
    pub fn new(participant: ParticipantId, cfg: SegmenterConfig) -> Self {
        Self {
            participant,
            cfg,
            next_tick: None,
            open: None,
            published: false,
            utterances: Vec::new(),
        }
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    /// First tick not yet consumed.
    pub fn next_tick(&self) -> Option<Tick> {
        self.next_tick
    }

    pub fn push(&mut self, tick: Tick, speech: bool) {
        if let Some(next) = self.next_tick {
            if tick < next {
                return;
            }
        }
        self.next_tick = Some(tick + 1);
        // contiguous speech always extends, even with no bridging
        let bridge = Tick::from(self.cfg.bridge_gap_ms).max(1);
        match (speech, self.open) {
            (true, Some((start, end))) if tick - end < bridge => self.extend(start, tick + 1),
            (true, _) => {
                self.close();
                self.extend(tick, tick + 1);
            }
            (false, Some((_, end))) if tick + 1 - end >= Tick::from(self.cfg.bridge_gap_ms) => self.close(),
            (false, _) => {}
        }
    }

    pub fn push_bits(&mut self, start: Tick, bits: &[bool]) {
        for (i, &b) in bits.iter().enumerate() {
            self.push(start + i as Tick, b);
        }
    }

    /// Closes any open utterance; further input starts a new one.
    pub fn finish(&mut self) {
        self.close();
    }

    fn extend(&mut self, start: Tick, end: Tick) {
        self.open = Some((start, end));
        if self.published {
            if let Some(last) = self.utterances.last_mut() {
                last.end = end;
            }
        } else if end - start >= Tick::from(self.cfg.min_utterance_ms) {
            self.utterances.push(Utterance {
                participant: self.participant,
                start,
                end,
                floor_label: None,
            });
            self.published = true;
        }
    }

    fn close(&mut self) {
        self.open = None;
        self.published = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pid() -> ParticipantId {
        ParticipantId::new(3).unwrap()
    }

    fn stream_with(runs: &[(Tick, Tick)], len: Tick) -> ActivityStream {
        let mut bits = vec![false; len as usize];
        for &(s, e) in runs {
            bits[s as usize..e as usize].fill(true);
        }
        ActivityStream::from_bits(pid(), 0, bits)
    }

    fn spans(u: &[Utterance]) -> Vec<(Tick, Tick)> {
        u.iter().map(|u| (u.start, u.end)).collect()
    }

    #[test]
    fn continuous_speech_is_one_utterance() {
        let s = stream_with(&[(0, 1000)], 1000);
        assert_eq!(spans(&segment(&s, SegmenterConfig::default())), vec![(0, 1000)]);
    }

    #[test]
    fn short_gap_is_bridged() {
        let s = stream_with(&[(0, 300), (450, 800)], 1000);
        assert_eq!(spans(&segment(&s, SegmenterConfig::default())), vec![(0, 800)]);
    }

    #[test]
    fn gap_equal_to_bridge_splits() {
        let s = stream_with(&[(0, 300), (500, 800)], 1000);
        assert_eq!(
            spans(&segment(&s, SegmenterConfig::default())),
            vec![(0, 300), (500, 800)]
        );
    }

    #[test]
    fn lone_blip_is_dropped() {
        let s = stream_with(&[(0, 50)], 500);
        assert!(segment(&s, SegmenterConfig::default()).is_empty());
    }

    #[test]
    fn syllable_burst_survives_because_bridging_runs_first() {
        // four 40 ms syllables with 60 ms micro-pauses
        let s = stream_with(&[(0, 40), (100, 140), (200, 240), (300, 340)], 600);
        assert_eq!(spans(&segment(&s, SegmenterConfig::default())), vec![(0, 340)]);
    }

    #[test]
    fn output_is_unlabeled() {
        let s = stream_with(&[(0, 400)], 400);
        assert!(segment(&s, SegmenterConfig::default())
            .iter()
            .all(|u| u.floor_label.is_none()));
    }

    #[test]
    fn online_exposes_running_end() {
        let mut seg = OnlineSegmenter::new(pid(), SegmenterConfig::default());
        seg.push_bits(0, &[true; 50]);
        assert!(seg.utterances().is_empty());
        seg.push_bits(50, &[true; 100]);
        assert_eq!(spans(seg.utterances()), vec![(0, 150)]);
        seg.push_bits(150, &[false; 100]);
        seg.push_bits(250, &[true; 10]);
        assert_eq!(spans(seg.utterances()), vec![(0, 260)]);
        seg.push_bits(260, &[false; 300]);
        seg.push_bits(560, &[true; 120]);
        assert_eq!(spans(seg.utterances()), vec![(0, 260), (560, 680)]);
    }

    fn bits_strategy() -> impl Strategy<Value = Vec<bool>> {
        // runs of random length so gaps of every size relative to the bridge appear
        proptest::collection::vec((any::<bool>(), 1usize..300), 0..40).prop_map(|runs| {
            runs.into_iter()
                .flat_map(|(b, n)| std::iter::repeat_n(b, n))
                .collect()
        })
    }

    fn cfg_strategy() -> impl Strategy<Value = SegmenterConfig> {
        (0u32..300, 0u32..300).prop_map(|(m, b)| SegmenterConfig {
            min_utterance_ms: m,
            bridge_gap_ms: b,
        })
    }

    proptest! {
        #[test]
        fn raw_config_yields_maximal_runs(bits in bits_strategy(), start in -100i64..100) {
            let s = ActivityStream::from_bits(pid(), start, bits.clone());
            // direct run-length scan
            let mut expected = Vec::new();
            let mut i = 0;
            while i < bits.len() {
                if bits[i] {
                    let j = (i..bits.len()).find(|&j| !bits[j]).unwrap_or(bits.len());
                    expected.push((start + i as Tick, start + j as Tick));
                    i = j;
                } else {
                    i += 1;
                }
            }
            prop_assert_eq!(spans(&segment(&s, SegmenterConfig::RAW)), expected);
        }

        #[test]
        fn utterances_are_ordered_and_grounded(bits in bits_strategy(), cfg in cfg_strategy()) {
            let s = ActivityStream::from_bits(pid(), 0, bits);
            let out = segment(&s, cfg);
            for w in out.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            for u in &out {
                prop_assert!(u.start < u.end);
                prop_assert!(s.is_speech(u.start));
                prop_assert!(s.is_speech(u.end - 1));
                prop_assert!(u.duration() >= Tick::from(cfg.min_utterance_ms));
            }
            // every speech tick inside an utterance, every gap inside one is short
            for u in &out {
                let mut gap = 0;
                for t in u.start..u.end {
                    if s.is_speech(t) { gap = 0 } else { gap += 1 }
                    prop_assert!(gap < Tick::from(cfg.bridge_gap_ms).max(1));
                }
            }
        }

        #[test]
        fn resegmenting_is_idempotent(bits in bits_strategy(), cfg in cfg_strategy()) {
            let s = ActivityStream::from_bits(pid(), 0, bits);
            let out = segment(&s, cfg);
            let rebuilt = ActivityStream::from_utterances(pid(), s.start(), s.end(), &out);
            prop_assert_eq!(segment(&rebuilt, cfg), out);
        }

        #[test]
        fn online_matches_batch(bits in bits_strategy(), cfg in cfg_strategy()) {
            let s = ActivityStream::from_bits(pid(), 5, bits.clone());
            let mut seg = OnlineSegmenter::new(pid(), cfg);
            seg.push_bits(5, &bits);
            seg.finish();
            let batch = segment(&s, cfg);
            prop_assert_eq!(seg.utterances(), batch.as_slice());
        }
    }
}
