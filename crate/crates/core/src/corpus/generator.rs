//! Synthetic multi-floor conversations.
//!
//! A schedule assigns participants to floors over time. Every floor with at
//! least two members runs its own turn-taking process for as long as its
//! membership is unchanged: the floor passes the turn to another member at
//! the end of each turn after a pause, occasionally starting early so the
//! two turns overlap. Floors know nothing of each other, so turns on
//! different floors are unaligned and overlap often. Participants alone on
//! a floor stay silent.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::format::{Corpus, TurnRecord};
use super::CorpusError;
use crate::timeline::{Tick, MAX_PARTICIPANTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub at_ms: Tick,
    /// Floors by participant index; unlisted participants are alone.
    pub floors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    pub pause_mean_ms: f64,
    pub pause_sd_ms: f64,
    /// Pauses are redrawn until at least this long (negative = overlap).
    pub pause_min_ms: f64,
    pub turn_median_ms: f64,
    pub turn_sigma: f64,
    pub turn_min_ms: Tick,
    pub turn_max_ms: Tick,
    /// Chance that the next speaker starts before the current turn ends.
    pub overlap_prob: f64,
    pub overlap_min_ms: Tick,
    pub overlap_max_ms: Tick,
    /// Each floor starts talking within this long of forming.
    pub start_jitter_ms: Tick,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            pause_mean_ms: 250.0,
            pause_sd_ms: 200.0,
            pause_min_ms: -200.0,
            turn_median_ms: 2000.0,
            turn_sigma: 0.8,
            turn_min_ms: 300,
            turn_max_ms: 20_000,
            overlap_prob: 0.1,
            overlap_min_ms: 50,
            overlap_max_ms: 500,
            start_jitter_ms: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub duration_ms: Tick,
    pub participants: usize,
    /// Defaults to `p0`, `p1`, ...
    #[serde(default)]
    pub names: Option<Vec<String>>,
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub timing: Timing,
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CorpusError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_from_path(path: &Path) -> Result<Self, CorpusError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn names(&self) -> Vec<String> {
        self.names
            .clone()
            .unwrap_or_else(|| (0..self.participants).map(|i| format!("p{i}")).collect())
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Config(m));
        if self.participants == 0 || self.participants > MAX_PARTICIPANTS {
            return bad(format!("participants must be 1..={MAX_PARTICIPANTS}"));
        }
        if self.names.as_ref().is_some_and(|n| n.len() != self.participants) {
            return bad("names must list every participant".into());
        }
        if self.duration_ms <= 0 {
            return bad("duration_ms must be positive".into());
        }
        match self.schedule.first() {
            Some(e) if e.at_ms == 0 => {}
            _ => return bad("schedule must start with an entry at 0 ms".into()),
        }
        for w in self.schedule.windows(2) {
            if w[1].at_ms <= w[0].at_ms {
                return bad("schedule times must increase".into());
            }
        }
        for e in &self.schedule {
            let mut seen = BTreeSet::new();
            for p in e.floors.iter().flatten() {
                if *p >= self.participants || !seen.insert(*p) {
                    return bad(format!("floors at {} ms are not a partition", e.at_ms));
                }
            }
            if e.floors.iter().any(Vec::is_empty) {
                return bad(format!("empty floor at {} ms", e.at_ms));
            }
        }
        let t = &self.timing;
        if !(0.0..=1.0).contains(&t.overlap_prob)
            || t.pause_sd_ms <= 0.0
            || t.turn_median_ms <= 0.0
            || t.turn_sigma <= 0.0
            || t.turn_min_ms <= 0
            || t.turn_max_ms < t.turn_min_ms
            || t.overlap_min_ms <= 0
            || t.overlap_max_ms < t.overlap_min_ms
            || t.start_jitter_ms < 0
            || t.pause_min_ms > t.pause_mean_ms
        {
            return bad("timing parameters out of range".into());
        }
        Ok(())
    }
}

/// A floor with fixed membership over `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Episode {
    members: Vec<usize>,
    start: Tick,
    end: Tick,
}

fn episodes(cfg: &GeneratorConfig) -> Vec<Episode> {
    let mut open: BTreeMap<Vec<usize>, Tick> = BTreeMap::new();
    let mut out = Vec::new();
    for (k, entry) in cfg.schedule.iter().enumerate() {
        let end = cfg.schedule.get(k + 1).map_or(cfg.duration_ms, |e| e.at_ms).min(cfg.duration_ms);
        let now: BTreeSet<Vec<usize>> = entry
            .floors
            .iter()
            .filter(|f| f.len() >= 2)
            .map(|f| {
                let mut f = f.clone();
                f.sort_unstable();
                f
            })
            .collect();
        let closing: Vec<Vec<usize>> = open.keys().filter(|m| !now.contains(*m)).cloned().collect();
        for m in closing {
            let start = open.remove(&m).expect("open");
            out.push(Episode { members: m, start, end: entry.at_ms });
        }
        for m in now {
            open.entry(m).or_insert(entry.at_ms);
        }
        if end >= cfg.duration_ms {
            break;
        }
    }
    for (m, start) in open {
        out.push(Episode { members: m, start, end: cfg.duration_ms });
    }
    out.retain(|e| e.start < e.end);
    out.sort_by(|a, b| (a.start, &a.members).cmp(&(b.start, &b.members)));
    out
}

struct Sampler {
    pause: Normal<f64>,
    turn: LogNormal<f64>,
    timing: Timing,
}

impl Sampler {
    fn new(t: &Timing) -> Self {
        Self {
            pause: Normal::new(t.pause_mean_ms, t.pause_sd_ms).expect("validated"),
            turn: LogNormal::new(t.turn_median_ms.ln(), t.turn_sigma).expect("validated"),
            timing: t.clone(),
        }
    }

    fn pause(&self, rng: &mut ChaCha8Rng) -> Tick {
        loop {
            let x = self.pause.sample(rng);
            if x >= self.timing.pause_min_ms {
                return x.round() as Tick;
            }
        }
    }

    fn turn(&self, rng: &mut ChaCha8Rng) -> Tick {
        (self.turn.sample(rng).round() as Tick).clamp(self.timing.turn_min_ms, self.timing.turn_max_ms)
    }

    fn gap(&self, rng: &mut ChaCha8Rng) -> Tick {
        if rng.random_bool(self.timing.overlap_prob) {
            -rng.random_range(self.timing.overlap_min_ms..=self.timing.overlap_max_ms)
        } else {
            self.pause(rng)
        }
    }
}

/// Generates a labeled corpus; identical configs give identical corpora.
pub fn generate(cfg: &GeneratorConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let names = cfg.names();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sampler = Sampler::new(&cfg.timing);
    let min_turn = cfg.timing.turn_min_ms;
    let mut last_end: Vec<Tick> = vec![Tick::MIN / 2; cfg.participants];
    let mut turns = Vec::new();
    for (label, ep) in episodes(cfg).iter().enumerate() {
        let mut t = ep.start + rng.random_range(0..=cfg.timing.start_jitter_ms);
        let mut speaker = ep.members[rng.random_range(0..ep.members.len())];
        loop {
            t = t.max(last_end[speaker] + 1);
            let end = (t + sampler.turn(&mut rng)).min(ep.end);
            if end - t < min_turn {
                break;
            }
            turns.push(TurnRecord {
                participant: names[speaker].clone(),
                start_ms: t,
                end_ms: end,
                floor_label: Some(label as u32),
            });
            last_end[speaker] = end;
            let others: Vec<usize> = ep.members.iter().copied().filter(|m| *m != speaker).collect();
            let next = others[rng.random_range(0..others.len())];
            // an early start still comes after the current turn began
            t = (end + sampler.gap(&mut rng)).max(t + 1);
            speaker = next;
        }
    }
    Corpus::new(names.clone(), Some(cfg.duration_ms), relabel(turns, &names))
}

/// Renumbers labels by first appearance in canonical turn order.
fn relabel(mut turns: Vec<TurnRecord>, names: &[String]) -> Vec<TurnRecord> {
    let index = |n: &str| names.iter().position(|p| p == n);
    turns.sort_by_key(|t| (t.start_ms, t.end_ms, index(&t.participant)));
    let mut map = BTreeMap::new();
    for t in &mut turns {
        if let Some(l) = t.floor_label {
            let next = map.len() as u32;
            t.floor_label = Some(*map.entry(l).or_insert(next));
        }
    }
    turns
}

/// Joint-speech share for same-floor and cross-floor pairs.
///
/// At each tick every participant carries the label of their latest turn
/// started at or before it. For each pair with both labels defined, the
/// tick counts toward the pair's class (same label or not) when either
/// speaks, and as overlap when both do. Each fraction is overlap over
/// those speech ticks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct OverlapStats {
    pub within_speech_ms: u64,
    pub within_overlap_ms: u64,
    pub cross_speech_ms: u64,
    pub cross_overlap_ms: u64,
}

impl OverlapStats {
    pub fn within_fraction(&self) -> f64 {
        ratio(self.within_overlap_ms, self.within_speech_ms)
    }

    pub fn cross_fraction(&self) -> f64 {
        ratio(self.cross_overlap_ms, self.cross_speech_ms)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn overlap_fractions(corpus: &Corpus) -> OverlapStats {
    let streams = corpus.streams();
    let utts = corpus.utterances();
    let n = streams.len();
    let mut stats = OverlapStats::default();
    let mut cursor = vec![0usize; n];
    let mut label: Vec<Option<u32>> = vec![None; n];
    for t in 0..corpus.end() {
        for p in 0..n {
            while cursor[p] < utts[p].len() && utts[p][cursor[p]].start <= t {
                label[p] = utts[p][cursor[p]].floor_label;
                cursor[p] += 1;
            }
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let (Some(la), Some(lb)) = (label[a], label[b]) else {
                    continue;
                };
                let (sa, sb) = (streams[a].is_speech(t), streams[b].is_speech(t));
                let (speech, overlap) = if la == lb {
                    (&mut stats.within_speech_ms, &mut stats.within_overlap_ms)
                } else {
                    (&mut stats.cross_speech_ms, &mut stats.cross_overlap_ms)
                };
                *speech += u64::from(sa || sb);
                *overlap += u64::from(sa && sb);
            }
        }
    }
    stats
}

/// A tone per participant wherever they speak, for end-to-end audio tests.
pub fn render_tones(corpus: &Corpus, amplitude: f64) -> Vec<Vec<i16>> {
    use crate::vad::SAMPLES_PER_MS;
    corpus
        .streams()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let freq = 300.0 + 110.0 * k as f64;
            let sr = (SAMPLES_PER_MS * 1000) as f64;
            let mut out = Vec::with_capacity(s.len() * SAMPLES_PER_MS);
            for (tick, &on) in s.bits().iter().enumerate() {
                for j in 0..SAMPLES_PER_MS {
                    let i = tick * SAMPLES_PER_MS + j;
                    let v = if on {
                        amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / sr).sin()
                    } else {
                        0.0
                    };
                    out.push(v.round() as i16);
                }
            }
            out
        })
        .collect()
}
