//! Detection accuracy of a scorer on a labeled corpus.
//!
//! Ground truth at instant `t` puts each participant on the floor named by
//! their latest turn started before `t`. A participant with no such turn,
//! or whose latest turn ended a full lookback (30 s) before `t`, is alone.
//! Only steady-state evaluation periods are scored: past the warm-up and
//! at least `exclusion_ms` from any change in the ground truth.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::format::Corpus;
use super::replay::replay;
use crate::engine::{ConfigChange, EngineConfig, EngineError, FnScorer, PairScorer};
use crate::features::MAX_LOOKBACK_MS;
use crate::partition::Partition;
use crate::timeline::{ParticipantId, Tick, Utterance};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus lasts {duration_ms} ms, shorter than the {warmup_ms} ms warm-up")]
    TooShort { duration_ms: Tick, warmup_ms: Tick },
    #[error("corpus has unlabeled turns; evaluation needs floor labels")]
    Unlabeled,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSettings {
    pub engine: EngineConfig,
    pub warmup_ms: Tick,
    pub exclusion_ms: Tick,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            warmup_ms: 30_000,
            exclusion_ms: 2_000,
        }
    }
}

/// Ground-truth floors derived from turn labels.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    utterances: Vec<Vec<Utterance>>,
}

impl GroundTruth {
    pub fn new(corpus: &Corpus) -> Self {
        Self {
            utterances: corpus.utterances(),
        }
    }

    fn label(&self, p: usize, t: Tick) -> Option<u32> {
        let u = &self.utterances[p];
        let idx = u.partition_point(|u| u.start < t);
        let last = &u[idx.checked_sub(1)?];
        (last.end > t - MAX_LOOKBACK_MS).then_some(last.floor_label).flatten()
    }

    pub fn partition_at(&self, t: Tick) -> Partition {
        // absent labels become distinct singletons
        let labels: Vec<(u32, usize)> = (0..self.utterances.len())
            .map(|p| match self.label(p, t) {
                Some(l) => (l, usize::MAX),
                None => (u32::MAX, p),
            })
            .collect();
        Partition::from_labels(&labels)
    }

    pub fn same_floor(&self, a: ParticipantId, b: ParticipantId, t: Tick) -> bool {
        matches!((self.label(a.index(), t), self.label(b.index(), t)), (Some(x), Some(y)) if x == y)
    }
}

/// Counts over scored (period, pair) cells, by truth then prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub same_predicted_same: u64,
    pub same_predicted_diff: u64,
    pub diff_predicted_same: u64,
    pub diff_predicted_diff: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.same_predicted_same + self.same_predicted_diff + self.diff_predicted_same + self.diff_predicted_diff
    }

    pub fn correct(&self) -> u64 {
        self.same_predicted_same + self.diff_predicted_diff
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineRow {
    pub tick: Tick,
    pub chosen: String,
    pub truth: String,
    pub steady: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: String,
    pub participants: Vec<String>,
    pub duration_ms: Tick,
    pub settings: EvalSettings,
    pub periods: u64,
    pub steady_periods: u64,
    pub configuration_accuracy: f64,
    pub pairwise_accuracy: f64,
    pub confusion: Confusion,
    pub truth_changes: Vec<Tick>,
    pub events: Vec<ConfigChange>,
    #[serde(skip)]
    pub timeline: Vec<TimelineRow>,
}

fn named(p: &Partition, names: &[String]) -> String {
    p.blocks()
        .iter()
        .map(|b| format!("{{{}}}", b.iter().map(|&i| names[i].as_str()).collect::<Vec<_>>().join(",")))
        .collect()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary_line(&self) -> String {
        format!(
            "configuration accuracy {:.4}  pairwise accuracy {:.4}  ({} steady periods of {})",
            self.configuration_accuracy, self.pairwise_accuracy, self.steady_periods, self.periods
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.confusion;
        let _ = writeln!(s, "evaluation ({})", self.mode);
        let _ = writeln!(s, "participants: {}", self.participants.join(" "));
        let _ = writeln!(s, "duration: {} ms", self.duration_ms);
        let _ = writeln!(
            s,
            "steady state: warm-up {} ms, +/-{} ms around {} ground-truth changes",
            self.settings.warmup_ms,
            self.settings.exclusion_ms,
            self.truth_changes.len()
        );
        let _ = writeln!(s, "periods: {} total, {} scored", self.periods, self.steady_periods);
        let _ = writeln!(s, "configuration accuracy: {:.4}", self.configuration_accuracy);
        let _ = writeln!(s, "pairwise accuracy: {:.4}", self.pairwise_accuracy);
        let _ = writeln!(s, "pair confusion (truth / predicted):");
        let _ = writeln!(s, "  same/same {:>10}  same/diff {:>10}", c.same_predicted_same, c.same_predicted_diff);
        let _ = writeln!(s, "  diff/same {:>10}  diff/diff {:>10}", c.diff_predicted_same, c.diff_predicted_diff);
        let _ = writeln!(s, "configuration changes: {}", self.events.len());
        for e in &self.events {
            let floors: Vec<String> = e.floors.iter().map(|f| format!("{{{}}}", f.join(","))).collect();
            let _ = writeln!(s, "  {:>9} ms  {}  score {:.4}", e.tick, floors.concat(), e.score);
        }
        s
    }

    /// One row per evaluation period, for plotting.
    pub fn timeline_tsv(&self) -> String {
        let mut s = String::from("tick_ms\tchosen\ttruth\tsteady\n");
        for r in &self.timeline {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", r.tick, r.chosen, r.truth, u8::from(r.steady));
        }
        s
    }
}

pub fn evaluate<S: PairScorer>(scorer: S, corpus: &Corpus, settings: &EvalSettings) -> Result<EvalReport, EvalError> {
    run(scorer, corpus, settings, "model")
}

/// Evaluation with ground truth fed in as posteriors: 1 for same-floor
/// pairs, 0 otherwise.
pub fn evaluate_oracle(corpus: &Corpus, settings: &EvalSettings) -> Result<EvalReport, EvalError> {
    let truth = GroundTruth::new(corpus);
    let oracle = FnScorer(move |a, b, now| if truth.same_floor(a, b, now) { 1.0 } else { 0.0 });
    run(oracle, corpus, settings, "oracle")
}

fn run<S: PairScorer>(scorer: S, corpus: &Corpus, settings: &EvalSettings, mode: &str) -> Result<EvalReport, EvalError> {
    let duration_ms = corpus.end();
    if duration_ms <= settings.warmup_ms {
        return Err(EvalError::TooShort {
            duration_ms,
            warmup_ms: settings.warmup_ms,
        });
    }
    if !corpus.is_labeled() {
        return Err(EvalError::Unlabeled);
    }
    let truth = GroundTruth::new(corpus);
    let period = settings.engine.assigner.eval_period_ms.max(1);
    let instants: Vec<Tick> = (1..).map(|k| k * period).take_while(|t| *t <= duration_ms).collect();
    let truths: Vec<Partition> = instants.iter().map(|&t| truth.partition_at(t)).collect();
    let mut truth_changes = Vec::new();
    for k in 1..truths.len() {
        if truths[k] != truths[k - 1] {
            truth_changes.push(instants[k]);
        }
    }
    let steady = |t: Tick| {
        t >= settings.warmup_ms && {
            let k = truth_changes.partition_point(|c| *c < t - settings.exclusion_ms);
            truth_changes.get(k).is_none_or(|c| *c > t + settings.exclusion_ms)
        }
    };

    let names = corpus.participants().to_vec();
    let mut confusion = Confusion::default();
    let (mut periods, mut steady_periods, mut config_hits) = (0u64, 0u64, 0u64);
    let mut timeline = Vec::with_capacity(instants.len());
    let events = replay(corpus, scorer, settings.engine, |ev| {
        let k = periods as usize;
        periods += 1;
        debug_assert_eq!(instants[k], ev.now);
        let t = &truths[k];
        let chosen = &ev.configuration.partition;
        let is_steady = steady(ev.now);
        timeline.push(TimelineRow {
            tick: ev.now,
            chosen: named(chosen, &names),
            truth: named(t, &names),
            steady: is_steady,
        });
        if !is_steady {
            return;
        }
        steady_periods += 1;
        config_hits += u64::from(chosen == t);
        for i in 0..t.len() {
            for j in (i + 1)..t.len() {
                match (t.same_block(i, j), chosen.same_block(i, j)) {
                    (true, true) => confusion.same_predicted_same += 1,
                    (true, false) => confusion.same_predicted_diff += 1,
                    (false, true) => confusion.diff_predicted_same += 1,
                    (false, false) => confusion.diff_predicted_diff += 1,
                }
            }
        }
    })?;
    let frac = |a: u64, b: u64| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    Ok(EvalReport {
        mode: mode.to_string(),
        participants: names,
        duration_ms,
        settings: *settings,
        periods,
        steady_periods,
        configuration_accuracy: frac(config_hits, steady_periods),
        pairwise_accuracy: frac(confusion.correct(), confusion.total()),
        confusion,
        truth_changes,
        events,
        timeline,
    })
}
