//! Line-oriented corpus files.
//!
//! ```text
//! #floorspace-corpus v1
//! participants ann bob cy
//! duration_ms 60000
//! turn participant=ann start_ms=0 end_ms=1800 floor=0
//! turn participant=bob start_ms=2010 end_ms=3500 floor=0
//! ```
//!
//! The first line is the header. `participants` must precede any `turn`;
//! `duration_ms` is optional and defaults to the last turn end. Other lines
//! starting with `#` and blank lines are ignored. A turn's `floor` is
//! optional, but training needs every turn labeled. Labels in use must be
//! exactly `0..k`. Turns of one participant must be separated by at least
//! one millisecond of silence so that their activity segments back into the
//! same intervals.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::timeline::{ActivityStream, ParticipantId, Tick, Utterance, MAX_PARTICIPANTS};

pub const HEADER: &str = "#floorspace-corpus v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub participant: String,
    pub start_ms: Tick,
    pub end_ms: Tick,
    pub floor_label: Option<u32>,
}

/// A validated corpus with turns in canonical order (start, end, participant).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    participants: Vec<String>,
    duration_ms: Option<Tick>,
    turns: Vec<TurnRecord>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.contains(|c: char| c.is_whitespace() || c == '=' || c == ',')
}

impl Corpus {
    pub fn new(
        participants: Vec<String>,
        duration_ms: Option<Tick>,
        mut turns: Vec<TurnRecord>,
    ) -> Result<Self, CorpusError> {
        if participants.len() > MAX_PARTICIPANTS {
            return Err(CorpusError::Invalid(format!(
                "{} participants exceeds the limit of {MAX_PARTICIPANTS}",
                participants.len()
            )));
        }
        let mut names = BTreeSet::new();
        for p in &participants {
            if !valid_name(p) {
                return Err(CorpusError::Invalid(format!("bad participant name {p:?}")));
            }
            if !names.insert(p.as_str()) {
                return Err(CorpusError::Invalid(format!("participant {p:?} listed twice")));
            }
        }
        let index = |name: &str| participants.iter().position(|p| p == name);
        for t in &turns {
            if index(&t.participant).is_none() {
                return Err(CorpusError::Invalid(format!("turn by unlisted participant {:?}", t.participant)));
            }
            if t.start_ms < 0 || t.start_ms >= t.end_ms {
                return Err(CorpusError::Invalid(format!(
                    "turn by {} has empty or negative interval [{}, {})",
                    t.participant, t.start_ms, t.end_ms
                )));
            }
        }
        turns.sort_by_key(|t| (t.start_ms, t.end_ms, index(&t.participant)));
        for (k, p) in participants.iter().enumerate() {
            let mut last_end: Option<Tick> = None;
            for t in turns.iter().filter(|t| index(&t.participant) == Some(k)) {
                if let Some(end) = last_end {
                    if t.start_ms <= end {
                        return Err(CorpusError::Overlap {
                            participant: p.clone(),
                            at: t.start_ms,
                        });
                    }
                }
                last_end = Some(t.end_ms);
            }
        }
        let labels: BTreeSet<u32> = turns.iter().filter_map(|t| t.floor_label).collect();
        if labels.iter().enumerate().any(|(i, &l)| i as u32 != l) {
            return Err(CorpusError::Invalid(format!(
                "floor labels must be contiguous from 0, found {labels:?}"
            )));
        }
        let last = turns.iter().map(|t| t.end_ms).max().unwrap_or(0);
        if let Some(d) = duration_ms {
            if d < last {
                return Err(CorpusError::Invalid(format!("duration_ms {d} ends before the last turn ({last})")));
            }
        }
        Ok(Self {
            participants,
            duration_ms,
            turns,
        })
    }

    pub fn participants(&self) -> &[String] {
        &self.participants
    }

    pub fn participant_id(&self, name: &str) -> Option<ParticipantId> {
        let k = self.participants.iter().position(|p| p == name)?;
        ParticipantId::new(k).ok()
    }

    pub fn ids(&self) -> Vec<ParticipantId> {
        (0..self.participants.len())
            .map(|k| ParticipantId::new(k).expect("validated"))
            .collect()
    }

    pub fn turns(&self) -> &[TurnRecord] {
        &self.turns
    }

    pub fn duration_ms(&self) -> Option<Tick> {
        self.duration_ms
    }

    /// End of the recorded period.
    pub fn end(&self) -> Tick {
        self.duration_ms
            .unwrap_or_else(|| self.turns.iter().map(|t| t.end_ms).max().unwrap_or(0))
    }

    pub fn is_labeled(&self) -> bool {
        self.turns.iter().all(|t| t.floor_label.is_some())
    }

    pub fn label_count(&self) -> usize {
        self.turns
            .iter()
            .filter_map(|t| t.floor_label)
            .max()
            .map_or(0, |m| m as usize + 1)
    }

    /// Each participant's turns as utterances, ordered.
    pub fn utterances(&self) -> Vec<Vec<Utterance>> {
        let ids = self.ids();
        let mut out = vec![Vec::new(); ids.len()];
        for t in &self.turns {
            let id = self.participant_id(&t.participant).expect("validated");
            out[id.index()].push(Utterance {
                participant: id,
                start: t.start_ms,
                end: t.end_ms,
                floor_label: t.floor_label,
            });
        }
        out
    }

    /// Activity over `[0, end)`: speech exactly during turns.
    pub fn streams(&self) -> Vec<ActivityStream> {
        let end = self.end();
        self.utterances()
            .iter()
            .zip(self.ids())
            .map(|(u, id)| ActivityStream::from_utterances(id, 0, end, u))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        out.push_str("participants");
        for p in &self.participants {
            out.push(' ');
            out.push_str(p);
        }
        out.push('\n');
        if let Some(d) = self.duration_ms {
            out.push_str(&format!("duration_ms {d}\n"));
        }
        for t in &self.turns {
            out.push_str(&format!(
                "turn participant={} start_ms={} end_ms={}",
                t.participant, t.start_ms, t.end_ms
            ));
            if let Some(l) = t.floor_label {
                out.push_str(&format!(" floor={l}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == HEADER => {}
            Some((_, h)) if h.starts_with("#floorspace-corpus") => {
                return Err(CorpusError::Version(h.trim().to_string()))
            }
            _ => return Err(CorpusError::Parse { line: 1, message: format!("missing header {HEADER:?}") }),
        }
        let mut participants: Option<Vec<String>> = None;
        let mut duration = None;
        let mut turns = Vec::new();
        for (i, raw) in lines {
            let line_no = i + 1;
            let err = |message: String| CorpusError::Parse { line: line_no, message };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut words = line.split_whitespace();
            match words.next() {
                Some("participants") => {
                    if participants.is_some() {
                        return Err(err("participants given twice".into()));
                    }
                    participants = Some(words.map(str::to_string).collect());
                }
                Some("duration_ms") => {
                    let v = words.next().ok_or_else(|| err("duration_ms needs a value".into()))?;
                    duration = Some(v.parse::<Tick>().map_err(|_| err(format!("bad duration {v:?}")))?);
                    if let Some(extra) = words.next() {
                        return Err(err(format!("unexpected {extra:?} after duration")));
                    }
                }
                Some("turn") => {
                    if participants.is_none() {
                        return Err(err("turn before participants line".into()));
                    }
                    turns.push(parse_turn(words).map_err(err)?);
                }
                Some(other) => return Err(err(format!("unknown record {other:?}"))),
                None => unreachable!("blank lines skipped"),
            }
        }
        let participants = participants.ok_or(CorpusError::Parse {
            line: 0,
            message: "no participants line".into(),
        })?;
        Self::new(participants, duration, turns)
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, CorpusError> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_text(&s)
    }

    pub fn save_to_path(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load_from_path(path: &Path) -> Result<Self, CorpusError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_turn<'a>(fields: impl Iterator<Item = &'a str>) -> Result<TurnRecord, String> {
    let (mut participant, mut start, mut end, mut floor) = (None, None, None, None);
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| format!("expected key=value, found {f:?}"))?;
        let num = || v.parse::<i64>().map_err(|_| format!("bad number in {f:?}"));
        let slot_taken = match k {
            "participant" => participant.replace(v.to_string()).is_some(),
            "start_ms" => start.replace(num()?).is_some(),
            "end_ms" => end.replace(num()?).is_some(),
            "floor" => floor
                .replace(v.parse::<u32>().map_err(|_| format!("bad floor label in {f:?}"))?)
                .is_some(),
            other => return Err(format!("unknown field {other:?}")),
        };
        if slot_taken {
            return Err(format!("field {k:?} repeated"));
        }
    }
    Ok(TurnRecord {
        participant: participant.ok_or("turn without participant")?,
        start_ms: start.ok_or("turn without start_ms")?,
        end_ms: end.ok_or("turn without end_ms")?,
        floor_label: floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::{segment, SegmenterConfig};
    use proptest::prelude::*;

    fn turn(p: &str, s: Tick, e: Tick, f: Option<u32>) -> TurnRecord {
        TurnRecord {
            participant: p.into(),
            start_ms: s,
            end_ms: e,
            floor_label: f,
        }
    }

    #[test]
    fn empty_corpus_has_empty_streams() {
        let c = Corpus::from_text("#floorspace-corpus v1\nparticipants a b\n").unwrap();
        assert_eq!(c.end(), 0);
        assert!(c.streams().iter().all(|s| s.is_empty()));
    }

    #[test]
    fn single_turn_stream() {
        let c = Corpus::new(vec!["a".into()], None, vec![turn("a", 0, 1000, Some(0))]).unwrap();
        let s = &c.streams()[0];
        assert_eq!((s.len(), s.speech_ticks()), (1000, 1000));
    }

    #[test]
    fn parse_errors() {
        let cases = [
            ("participants a\n", "header"),
            ("#floorspace-corpus v9\nparticipants a\n", "version"),
            ("#floorspace-corpus v1\nparticipants a\nturn participant=a start_ms=0 end_ms=5 color=red\n", "unknown field"),
            ("#floorspace-corpus v1\nparticipants a\nspeech a 0 5\n", "unknown record"),
            ("#floorspace-corpus v1\nturn participant=a start_ms=0 end_ms=5\n", "before participants"),
            ("#floorspace-corpus v1\nparticipants a\nturn participant=a start_ms=0 end_ms=50\nturn participant=a start_ms=40 end_ms=60\n", "overlap"),
            ("#floorspace-corpus v1\nparticipants a\nturn participant=a start_ms=0 end_ms=50\nturn participant=a start_ms=50 end_ms=60\n", "touching"),
            ("#floorspace-corpus v1\nparticipants a\nturn participant=a start_ms=0 end_ms=50 floor=1\n", "labels"),
            ("#floorspace-corpus v1\nparticipants a\nturn participant=b start_ms=0 end_ms=50\n", "unlisted"),
            ("#floorspace-corpus v1\nparticipants a\nturn participant=a start_ms=9 end_ms=9\n", "empty"),
            ("#floorspace-corpus v1\nparticipants a a\n", "duplicate"),
        ];
        for (text, what) in cases {
            assert!(Corpus::from_text(text).is_err(), "{what} should fail");
        }
        let e = Corpus::from_text(cases[5].0).unwrap_err();
        assert!(matches!(e, CorpusError::Overlap { ref participant, at: 40 } if participant == "a"), "{e}");
    }

    #[test]
    fn comments_and_canonical_order() {
        let text = "#floorspace-corpus v1\n# made by hand\nparticipants a b\n\nturn participant=b start_ms=10 end_ms=20 floor=0\nturn participant=a start_ms=0 end_ms=5 floor=0\n";
        let c = Corpus::from_text(text).unwrap();
        assert_eq!(c.turns()[0].participant, "a");
        assert!(c.to_text().starts_with("#floorspace-corpus v1\nparticipants a b\nturn participant=a"));
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        (1usize..5, proptest::collection::vec((0usize..4, 1i64..500, 1i64..800, 0u32..3, any::<bool>()), 0..40), any::<bool>())
            .prop_map(|(n, raw, with_duration)| {
                let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
                let mut cursor = vec![0i64; n];
                let mut turns = Vec::new();
                for (p, gap, dur, label, labeled) in raw {
                    let p = p % n;
                    let start = cursor[p] + gap;
                    cursor[p] = start + dur;
                    turns.push(turn(&names[p], start, start + dur, labeled.then_some(label)));
                }
                // make labels contiguous
                let used: BTreeSet<u32> = turns.iter().filter_map(|t| t.floor_label).collect();
                let used: Vec<u32> = used.into_iter().collect();
                for t in &mut turns {
                    t.floor_label = t.floor_label.map(|l| used.iter().position(|u| *u == l).unwrap() as u32);
                }
                let end = cursor.iter().copied().max().unwrap_or(0);
                Corpus::new(names, with_duration.then_some(end + 7), turns).unwrap()
            })
    }

    proptest! {
        #[test]
        fn save_load_round_trip(c in arb_corpus()) {
            let mut buf = Vec::new();
            c.save(&mut buf).unwrap();
            prop_assert_eq!(Corpus::load(buf.as_slice()).unwrap(), c);
        }

        #[test]
        fn streams_segment_back_to_turns(c in arb_corpus()) {
            for (s, utts) in c.streams().iter().zip(c.utterances()) {
                let back: Vec<(Tick, Tick)> = segment(s, SegmenterConfig::RAW).iter().map(|u| (u.start, u.end)).collect();
                let orig: Vec<(Tick, Tick)> = utts.iter().map(|u| (u.start, u.end)).collect();
                prop_assert_eq!(back, orig);
            }
        }
    }
}
