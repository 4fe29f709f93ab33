//! Tick-driven floor detection pipeline shared by live serving and replay.
//!
//! The engine consumes one speech/non-speech bit per present participant
//! per millisecond. It keeps each participant's last 30 s of activity and
//! an online segmentation, maintains per-pair overlap window counts
//! incrementally, and every evaluation period scores all pairs and asks the
//! assigner for the best configuration. Nothing here reads a wall clock, so
//! identical input produces identical output regardless of speed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assigner::{
    gains, AssignerConfig, AssignerError, AssignerState, FloorConfiguration, GainMatrix, GainPolicy,
    PairPosteriors,
};
use crate::features::{trp_gap, PairFeatures, MAX_LOOKBACK_MS, OVERLAP_WINDOWS};
use crate::learner::FloorModel;
use crate::partition::Partition;
use crate::segmenter::{OnlineSegmenter, SegmenterConfig};
use crate::timeline::{ParticipantId, Tick, Utterance, MAX_PARTICIPANTS};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Assigner(#[from] AssignerError),
    #[error("expected activity for {expected} participants, got {found}")]
    Width { expected: usize, found: usize },
    #[error("participant {0} is already present")]
    AlreadyPresent(ParticipantId),
    #[error("participant {0} is not present")]
    NotPresent(ParticipantId),
    #[error("no participant named {0:?}")]
    UnknownName(String),
}

/// Source of same-floor edge weights.
pub trait PairScorer {
    /// Posterior that `a` and `b` share a floor at `now`, given the
    /// features of both orderings.
    fn pair_posterior(
        &self,
        a: ParticipantId,
        b: ParticipantId,
        ab: &PairFeatures,
        ba: &PairFeatures,
        now: Tick,
    ) -> f64;
}

impl PairScorer for FloorModel {
    fn pair_posterior(&self, _: ParticipantId, _: ParticipantId, ab: &PairFeatures, ba: &PairFeatures, _: Tick) -> f64 {
        FloorModel::pair_posterior(self, ab, ba)
    }
}

impl<T: PairScorer + ?Sized> PairScorer for Arc<T> {
    fn pair_posterior(&self, a: ParticipantId, b: ParticipantId, ab: &PairFeatures, ba: &PairFeatures, now: Tick) -> f64 {
        (**self).pair_posterior(a, b, ab, ba, now)
    }
}

impl<T: PairScorer + ?Sized> PairScorer for Box<T> {
    fn pair_posterior(&self, a: ParticipantId, b: ParticipantId, ab: &PairFeatures, ba: &PairFeatures, now: Tick) -> f64 {
        (**self).pair_posterior(a, b, ab, ba, now)
    }
}

impl<T: PairScorer + ?Sized> PairScorer for &T {
    fn pair_posterior(&self, a: ParticipantId, b: ParticipantId, ab: &PairFeatures, ba: &PairFeatures, now: Tick) -> f64 {
        (**self).pair_posterior(a, b, ab, ba, now)
    }
}

/// Wraps a closure `(a, b, now) -> posterior` that ignores features, for
/// oracle and constant scoring.
pub struct FnScorer<F>(pub F);

impl<F: Fn(ParticipantId, ParticipantId, Tick) -> f64> PairScorer for FnScorer<F> {
    fn pair_posterior(&self, a: ParticipantId, b: ParticipantId, _: &PairFeatures, _: &PairFeatures, now: Tick) -> f64 {
        (self.0)(a, b, now)
    }
}

/// Grid the pair posteriors are rounded to before assignment.
pub const DEFAULT_POSTERIOR_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub segmenter: SegmenterConfig,
    pub assigner: AssignerConfig,
    pub gains: GainPolicy,
    /// Posteriors are rounded to multiples of this before the assigner sees
    /// them; 0 disables rounding. A mean can never beat its best edge, so
    /// without rounding a lone pair plus singletons outscores any larger
    /// floor. Rounding makes confident edges tie and lets the fewer-floors
    /// tie-break choose the larger floor.
    pub posterior_step: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            segmenter: SegmenterConfig::default(),
            assigner: AssignerConfig::default(),
            gains: GainPolicy::default(),
            posterior_step: DEFAULT_POSTERIOR_STEP,
        }
    }
}

/// Rounds `p` to the nearest multiple of `step` inside [0, 1].
pub fn quantize_posterior(p: f64, step: f64) -> f64 {
    if step > 0.0 {
        ((p / step).round() * step).clamp(0.0, 1.0)
    } else {
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigChange {
    /// Evaluation instant at which the new configuration took effect.
    pub tick: Tick,
    /// Floors as participant names, in canonical order.
    pub floors: Vec<Vec<String>>,
    pub score: f64,
}

/// Result of one evaluation period.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub now: Tick,
    pub configuration: FloorConfiguration,
    pub posteriors: PairPosteriors,
    pub changed: bool,
}

const RING: usize = MAX_LOOKBACK_MS as usize + 1;

#[derive(Debug, Clone)]
struct Slot {
    name: String,
    /// Activity for the last `RING` ticks, indexed by tick modulo `RING`.
    history: Vec<bool>,
    segmenter: OnlineSegmenter,
    last_speech: Option<Tick>,
}

pub struct Engine<S> {
    cfg: EngineConfig,
    scorer: S,
    /// Next tick to be consumed.
    next: Tick,
    slots: Vec<Option<Slot>>,
    /// Jointly active ticks per window, indexed `[a][b]` with `a < b`.
    windows: Vec<[u32; 3]>,
    assigner: AssignerState,
    current: Option<FloorConfiguration>,
    gains: Arc<GainMatrix>,
    events: Vec<ConfigChange>,
    evaluations: u64,
}

fn pair_slot(a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    a * MAX_PARTICIPANTS + b
}

impl<S: PairScorer> Engine<S> {
    pub fn new(cfg: EngineConfig, scorer: S, start: Tick) -> Self {
        let assigner = AssignerState::new(cfg.assigner, Vec::new()).expect("empty set fits");
        let mut e = Self {
            cfg,
            scorer,
            next: start,
            slots: vec![None; MAX_PARTICIPANTS],
            windows: vec![[0; 3]; MAX_PARTICIPANTS * MAX_PARTICIPANTS],
            assigner,
            current: None,
            gains: Arc::new(gains(&empty_config(), &cfg.gains)),
            events: Vec::new(),
            evaluations: 0,
        };
        e.refresh_idle_gains();
        e
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn scorer(&self) -> &S {
        &self.scorer
    }

    /// Next tick `step` will consume.
    pub fn now(&self) -> Tick {
        self.next
    }

    pub fn participants(&self) -> Vec<ParticipantId> {
        self.assigner.participants().to_vec()
    }

    pub fn name(&self, id: ParticipantId) -> Option<&str> {
        self.slots.get(id.index())?.as_ref().map(|s| s.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<ParticipantId> {
        self.participants()
            .into_iter()
            .find(|id| self.name(*id) == Some(name))
    }

    pub fn current(&self) -> Option<&FloorConfiguration> {
        self.current.as_ref()
    }

    pub fn gain_matrix(&self) -> Arc<GainMatrix> {
        Arc::clone(&self.gains)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn pinned(&self) -> Option<&crate::assigner::Pin> {
        self.assigner.pinned()
    }

    /// Configuration changes since the last call.
    pub fn take_events(&mut self) -> Vec<ConfigChange> {
        std::mem::take(&mut self.events)
    }

    pub fn utterances(&self, id: ParticipantId) -> Option<&[Utterance]> {
        Some(self.slot(id)?.segmenter.utterances())
    }

    fn slot(&self, id: ParticipantId) -> Option<&Slot> {
        self.slots.get(id.index())?.as_ref()
    }

    pub fn join(&mut self, id: ParticipantId, name: impl Into<String>) -> Result<(), EngineError> {
        if self.slot(id).is_some() {
            return Err(EngineError::AlreadyPresent(id));
        }
        let mut ids = self.participants();
        ids.push(id);
        self.assigner.set_participants(ids)?;
        let segmenter = OnlineSegmenter::new(id, self.cfg.segmenter);
        self.slots[id.index()] = Some(Slot {
            name: name.into(),
            history: vec![false; RING],
            segmenter,
            last_speech: None,
        });
        for other in 0..MAX_PARTICIPANTS {
            self.windows[pair_slot(id.index(), other)] = [0; 3];
        }
        self.after_membership_change();
        Ok(())
    }

    pub fn leave(&mut self, id: ParticipantId) -> Result<(), EngineError> {
        if self.slot(id).is_none() {
            return Err(EngineError::NotPresent(id));
        }
        self.slots[id.index()] = None;
        let ids: Vec<ParticipantId> = self.participants().into_iter().filter(|p| *p != id).collect();
        self.assigner.set_participants(ids)?;
        self.after_membership_change();
        Ok(())
    }

    fn after_membership_change(&mut self) {
        self.current = None;
        self.refresh_idle_gains();
    }

    /// Gains before the first evaluation with the current members: the
    /// carried-over partition if any, otherwise everyone alone.
    fn refresh_idle_gains(&mut self) {
        let participants = self.participants();
        let partition = self
            .assigner
            .previous()
            .cloned()
            .unwrap_or_else(|| Partition::singletons(participants.len()));
        let cfg = FloorConfiguration {
            participants,
            partition,
            score: f64::NAN,
        };
        self.gains = Arc::new(gains(&cfg, &self.cfg.gains));
    }

    /// Fixes the configuration on behalf of `owner`. `floors` name
    /// participants; anyone unnamed is alone.
    pub fn pin(&mut self, owner: ParticipantId, floors: &[Vec<String>]) -> Result<(), EngineError> {
        let ids = self.participants();
        let mut labels: Vec<usize> = (0..ids.len()).map(|k| floors.len() + k).collect();
        for (f, floor) in floors.iter().enumerate() {
            for name in floor {
                let id = self.id_of(name).ok_or_else(|| EngineError::UnknownName(name.clone()))?;
                let k = ids.iter().position(|p| *p == id).expect("present");
                labels[k] = f;
            }
        }
        self.assigner.pin(Partition::from_labels(&labels), owner)?;
        Ok(())
    }

    pub fn unpin(&mut self, owner: ParticipantId) -> Result<(), EngineError> {
        self.assigner.unpin(owner)?;
        Ok(())
    }

    /// Consumes one tick. `speech[k]` belongs to the k-th present
    /// participant in id order. Returns the evaluation if this tick closes
    /// an evaluation period.
    pub fn step(&mut self, speech: &[bool]) -> Result<Option<Evaluation>, EngineError> {
        let ids = self.participants();
        if speech.len() != ids.len() {
            return Err(EngineError::Width {
                expected: ids.len(),
                found: speech.len(),
            });
        }
        let t = self.next;
        let ring = |tick: Tick| tick.rem_euclid(RING as Tick) as usize;
        for (id, &s) in ids.iter().zip(speech) {
            let slot = self.slots[id.index()].as_mut().expect("present");
            slot.history[ring(t)] = s;
            slot.segmenter.push(t, s);
            if s {
                slot.last_speech = Some(t);
            }
        }
        // window k gains tick t - near and loses tick t - far
        for (x, &a) in ids.iter().enumerate() {
            for &b in &ids[x + 1..] {
                let (ha, hb) = (
                    &self.slots[a.index()].as_ref().expect("present").history,
                    &self.slots[b.index()].as_ref().expect("present").history,
                );
                let w = &mut self.windows[pair_slot(a.index(), b.index())];
                for (k, &(near, far)) in OVERLAP_WINDOWS.iter().enumerate() {
                    let enter = ring(t - near);
                    let leave = ring(t - far);
                    if ha[enter] && hb[enter] {
                        w[k] += 1;
                    }
                    if ha[leave] && hb[leave] {
                        w[k] -= 1;
                    }
                }
            }
        }
        self.next = t + 1;
        let period = self.cfg.assigner.eval_period_ms.max(1);
        if self.next.rem_euclid(period) != 0 {
            return Ok(None);
        }
        self.evaluate().map(Some)
    }

    /// Features of the ordered pair `(a, b)` at the current instant.
    pub fn pair_features(&self, a: ParticipantId, b: ParticipantId) -> Option<PairFeatures> {
        let (sa, sb) = (self.slot(a)?, self.slot(b)?);
        let w = self.windows[pair_slot(a.index(), b.index())];
        Some(PairFeatures::with_overlaps(
            trp_gap(sa.segmenter.utterances(), sb.segmenter.utterances(), self.next),
            w,
        ))
    }

    /// Spoke within the feature lookback before the current instant.
    pub fn is_active(&self, id: ParticipantId) -> bool {
        self.slot(id)
            .and_then(|s| s.last_speech)
            .is_some_and(|t| t >= self.next - MAX_LOOKBACK_MS)
    }

    /// Pair posteriors at the current instant, rounded to the configured
    /// step. A pair with a member who has been silent for the whole
    /// lookback has no evidence of sharing a floor and gets weight zero.
    pub fn posteriors(&self) -> PairPosteriors {
        let ids = self.participants();
        let now = self.next;
        let active: Vec<bool> = ids.iter().map(|id| self.is_active(*id)).collect();
        let step = self.cfg.posterior_step;
        PairPosteriors::from_fn(ids.len(), |i, j| {
            if !(active[i] && active[j]) {
                return 0.0;
            }
            let (a, b) = (ids[i], ids[j]);
            let ab = self.pair_features(a, b).expect("present");
            let ba = self.pair_features(b, a).expect("present");
            quantize_posterior(self.scorer.pair_posterior(a, b, &ab, &ba, now), step)
        })
    }

    fn evaluate(&mut self) -> Result<Evaluation, EngineError> {
        let now = self.next;
        let posteriors = self.posteriors();
        let configuration = self.assigner.assign(&posteriors, now)?;
        self.evaluations += 1;
        let changed = self
            .current
            .as_ref()
            .is_none_or(|c| c.partition != configuration.partition);
        if changed {
            self.gains = Arc::new(gains(&configuration, &self.cfg.gains));
            self.events.push(ConfigChange {
                tick: now,
                floors: configuration
                    .floors()
                    .iter()
                    .map(|f| f.iter().map(|id| self.name(*id).unwrap_or("?").to_string()).collect())
                    .collect(),
                score: configuration.score,
            });
        }
        self.current = Some(configuration.clone());
        Ok(Evaluation {
            now,
            configuration,
            posteriors,
            changed,
        })
    }
}

fn empty_config() -> FloorConfiguration {
    FloorConfiguration {
        participants: Vec::new(),
        partition: Partition::singletons(0),
        score: f64::NAN,
    }
}
