//! Floor assignment: pick the set partition of present participants with
//! the highest mean within-floor pairwise posterior, then derive gains.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::{pair_index, Partition, PartitionError, PartitionTable};
use crate::timeline::{ParticipantId, Tick, MAX_PARTICIPANTS};

/// Floor evaluation period.
pub const EVAL_PERIOD_MS: Tick = 30;
pub const NORMAL_GAIN: f64 = 1.0;
/// Gain between participants on different floors, relative to normal.
pub const QUIET_GAIN: f64 = 0.2;
/// Score of a partition with no within-floor pairs.
pub const NEUTRAL_SCORE: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum AssignerError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("configuration does not cover the present participants: {0}")]
    InvalidConfiguration(String),
    #[error("participant {0} does not hold the pin")]
    PermissionDenied(ParticipantId),
    #[error("no configuration is pinned")]
    NotPinned,
    #[error("posteriors cover {found} participants, session has {expected}")]
    PosteriorSize { expected: usize, found: usize },
}

/// Unordered-pair posteriors for participants `0..n`, stored by [`pair_index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPosteriors {
    n: usize,
    values: Vec<f64>,
}

impl PairPosteriors {
    pub fn new(n: usize, fill: f64) -> Self {
        Self {
            n,
            values: vec![fill; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut p = Self::new(n, 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                p.set(i, j, f(i, j));
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[pair_index(self.n, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, p: f64) {
        let k = pair_index(self.n, i, j);
        self.values[k] = p;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean posterior over all within-block pairs, or [`NEUTRAL_SCORE`] when
/// there are none. Pairs are summed in ascending (i, j) order.
pub fn score(partition: &Partition, posteriors: &PairPosteriors) -> f64 {
    let n = partition.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if partition.same_block(i, j) {
                sum += posteriors.get(i, j);
                count += 1;
            }
        }
    }
    if count == 0 {
        NEUTRAL_SCORE
    } else {
        sum / count as f64
    }
}

fn table_score(edges: &[u8], values: &[f64]) -> f64 {
    if edges.is_empty() {
        return NEUTRAL_SCORE;
    }
    let mut sum = 0.0;
    for &e in edges {
        sum += values[e as usize];
    }
    sum / edges.len() as f64
}

/// A chosen partition over a concrete participant list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorConfiguration {
    /// Element i of the partition is `participants[i]`.
    pub participants: Vec<ParticipantId>,
    pub partition: Partition,
    pub score: f64,
}

impl FloorConfiguration {
    pub fn floors(&self) -> Vec<Vec<ParticipantId>> {
        self.partition
            .blocks()
            .into_iter()
            .map(|b| b.into_iter().map(|i| self.participants[i]).collect())
            .collect()
    }

    pub fn same_floor(&self, a: ParticipantId, b: ParticipantId) -> Option<bool> {
        let i = self.participants.iter().position(|p| *p == a)?;
        let j = self.participants.iter().position(|p| *p == b)?;
        Some(self.partition.same_block(i, j))
    }
}

/// Exhaustive argmax with the documented tie-break: among best-scoring
/// partitions prefer fewer floors, then `previous`, then the
/// lexicographically smallest canonical form. Fewer floors comes first
/// because every split of a floor whose edges all share one weight ties
/// with it, and inertia would otherwise hold a stale split after a merge.
/// Returns the partition and its score.
pub fn best_partition(
    posteriors: &PairPosteriors,
    previous: Option<&Partition>,
) -> Result<(Partition, f64), AssignerError> {
    let table = PartitionTable::get(posteriors.len())?;
    let values = posteriors.values();
    let mut best_k = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_blocks = usize::MAX;
    // table order is lexicographic, so the first hit wins remaining ties
    for (k, p) in table.partitions.iter().enumerate() {
        let s = table_score(table.edges(k), values);
        if s > best_score || (s == best_score && p.num_blocks() < best_blocks) {
            best_k = k;
            best_score = s;
            best_blocks = p.num_blocks();
        }
    }
    if let Some(prev) = previous.filter(|p| p.len() == posteriors.len()) {
        if prev.num_blocks() == best_blocks && score(prev, posteriors) == best_score {
            return Ok((prev.clone(), best_score));
        }
    }
    Ok((table.partitions[best_k].clone(), best_score))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignerConfig {
    pub eval_period_ms: Tick,
    /// A new configuration must win continuously this long before it is adopted.
    pub dwell_ms: Tick,
}

impl Default for AssignerConfig {
    fn default() -> Self {
        Self {
            eval_period_ms: EVAL_PERIOD_MS,
            dwell_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pin {
    pub partition: Partition,
    pub owners: BTreeSet<ParticipantId>,
}

/// Per-session assigner state.
#[derive(Debug, Clone)]
pub struct AssignerState {
    cfg: AssignerConfig,
    participants: Vec<ParticipantId>,
    previous: Option<Partition>,
    pinned: Option<Pin>,
    pending: Option<(Partition, Tick)>,
}

impl AssignerState {
    pub fn new(cfg: AssignerConfig, participants: Vec<ParticipantId>) -> Result<Self, AssignerError> {
        let mut participants = participants;
        participants.sort();
        participants.dedup();
        if participants.len() > MAX_PARTICIPANTS {
            return Err(PartitionError::Capacity(participants.len()).into());
        }
        Ok(Self {
            cfg,
            participants,
            previous: None,
            pinned: None,
            pending: None,
        })
    }

    pub fn config(&self) -> &AssignerConfig {
        &self.cfg
    }

    pub fn participants(&self) -> &[ParticipantId] {
        &self.participants
    }

    pub fn previous(&self) -> Option<&Partition> {
        self.previous.as_ref()
    }

    pub fn pinned(&self) -> Option<&Pin> {
        self.pinned.as_ref()
    }

    /// Updates the present participant set. Any change dissolves a pin; the
    /// previous partition carries over for members that remain, newcomers
    /// start alone.
    pub fn set_participants(&mut self, ids: Vec<ParticipantId>) -> Result<(), AssignerError> {
        let mut ids = ids;
        ids.sort();
        ids.dedup();
        if ids.len() > MAX_PARTICIPANTS {
            return Err(PartitionError::Capacity(ids.len()).into());
        }
        if ids == self.participants {
            return Ok(());
        }
        // the pinned configuration was the one in force; carry it forward
        if let Some(pin) = self.pinned.take() {
            self.previous = Some(pin.partition);
        }
        self.pending = None;
        self.previous = self.previous.as_ref().map(|prev| {
            let labels: Vec<usize> = ids
                .iter()
                .enumerate()
                .map(|(k, id)| match self.participants.iter().position(|p| p == id) {
                    Some(old) => prev.labels()[old] as usize,
                    None => MAX_PARTICIPANTS + k,
                })
                .collect();
            Partition::from_labels(&labels)
        });
        self.participants = ids;
        Ok(())
    }

    fn check_covers(&self, partition: &Partition) -> Result<(), AssignerError> {
        if partition.len() != self.participants.len() {
            return Err(AssignerError::InvalidConfiguration(format!(
                "partition has {} elements, {} participants present",
                partition.len(),
                self.participants.len()
            )));
        }
        Ok(())
    }

    /// Holds `partition` until unpinned or membership changes.
    pub fn pin(&mut self, partition: Partition, owner: ParticipantId) -> Result<(), AssignerError> {
        self.check_covers(&partition)?;
        if !self.participants.contains(&owner) {
            return Err(AssignerError::PermissionDenied(owner));
        }
        match &mut self.pinned {
            Some(pin) if pin.partition == partition => {
                pin.owners.insert(owner);
            }
            Some(pin) if !pin.owners.contains(&owner) => {
                return Err(AssignerError::PermissionDenied(owner));
            }
            _ => {
                self.pinned = Some(Pin {
                    partition,
                    owners: BTreeSet::from([owner]),
                });
            }
        }
        Ok(())
    }

    pub fn unpin(&mut self, owner: ParticipantId) -> Result<(), AssignerError> {
        let pin = self.pinned.as_ref().ok_or(AssignerError::NotPinned)?;
        if !pin.owners.contains(&owner) {
            return Err(AssignerError::PermissionDenied(owner));
        }
        let pin = self.pinned.take().expect("checked above");
        self.previous = Some(pin.partition);
        self.pending = None;
        Ok(())
    }

    /// Chooses the configuration for this evaluation period at `now`.
    pub fn assign(
        &mut self,
        posteriors: &PairPosteriors,
        now: Tick,
    ) -> Result<FloorConfiguration, AssignerError> {
        if posteriors.len() != self.participants.len() {
            return Err(AssignerError::PosteriorSize {
                expected: self.participants.len(),
                found: posteriors.len(),
            });
        }
        let (partition, s) = if let Some(pin) = &self.pinned {
            (pin.partition.clone(), score(&pin.partition, posteriors))
        } else {
            let (best, s) = best_partition(posteriors, self.previous.as_ref())?;
            self.apply_dwell(best, s, posteriors, now)
        };
        self.previous = Some(partition.clone());
        Ok(FloorConfiguration {
            participants: self.participants.clone(),
            partition,
            score: s,
        })
    }

    fn apply_dwell(
        &mut self,
        best: Partition,
        s: f64,
        posteriors: &PairPosteriors,
        now: Tick,
    ) -> (Partition, f64) {
        let Some(prev) = self.previous.clone() else {
            return (best, s);
        };
        if self.cfg.dwell_ms <= 0 || best == prev {
            self.pending = None;
            return (best, s);
        }
        let since = match &self.pending {
            Some((p, since)) if *p == best => *since,
            _ => {
                self.pending = Some((best.clone(), now));
                now
            }
        };
        if now - since >= self.cfg.dwell_ms {
            self.pending = None;
            (best, s)
        } else {
            let prev_score = score(&prev, posteriors);
            (prev, prev_score)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainPolicy {
    pub normal: f64,
    pub quiet: f64,
}

impl Default for GainPolicy {
    fn default() -> Self {
        Self {
            normal: NORMAL_GAIN,
            quiet: QUIET_GAIN,
        }
    }
}

/// `gain(listener, speaker)` for every present pair; self-gain is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    participants: Vec<ParticipantId>,
    gains: Vec<f64>,
}

impl GainMatrix {
    pub fn participants(&self) -> &[ParticipantId] {
        &self.participants
    }

    fn position(&self, id: ParticipantId) -> Option<usize> {
        self.participants.iter().position(|p| *p == id)
    }

    /// Gain applied to `speaker` in `listener`'s mix; 0 for unknown participants.
    pub fn gain(&self, listener: ParticipantId, speaker: ParticipantId) -> f64 {
        match (self.position(listener), self.position(speaker)) {
            (Some(l), Some(s)) => self.gains[l * self.participants.len() + s],
            _ => 0.0,
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.gains
            .chunks(self.participants.len().max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }
}

pub fn gains(config: &FloorConfiguration, policy: &GainPolicy) -> GainMatrix {
    let n = config.participants.len();
    let mut g = vec![0.0; n * n];
    for l in 0..n {
        for s in 0..n {
            if l != s {
                g[l * n + s] = if config.partition.same_block(l, s) {
                    policy.normal
                } else {
                    policy.quiet
                };
            }
        }
    }
    GainMatrix {
        participants: config.participants.clone(),
        gains: g,
    }
}
