//! Naive Bayes floor model: discretized likelihood lookup tables for the
//! SAME-FLOOR and DIFFERENT-FLOOR classes, trained offline from labeled
//! turns and evaluated online per ordered pair.
//!
//! # Model file
//!
//! Models are stored as UTF-8 text, one record per line:
//!
//! ```text
//! floorspace-model
//! format_version 1
//! binning trp_bin_width_ms 100 trp_clip_ms 5000 overlap_bins 20 windows_ms 1000 14000 15000
//! priors <P(same)> <P(diff)>
//! table <feature> <same|diff> <n> <v0> ... <v(n-1)>
//! end
//! ```
//!
//! There is one `table` line per (feature, class), features in the order
//! `trp_gap overlap_w1 overlap_w2 overlap_w3`. Numbers use the shortest
//! decimal form that parses back to the identical `f64`, so a save/load
//! round trip is bit-exact.

use std::fmt::Write as _;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{window_len, OverlapCounter, PairFeatures, MAX_LOOKBACK_MS, TRP_CLIP_MS};
use crate::timeline::{ActivityStream, Tick, Utterance};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "floorspace-model";

pub const FEATURE_NAMES: [&str; 4] = ["trp_gap", "overlap_w1", "overlap_w2", "overlap_w3"];
pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

/// Default spacing of training sample instants.
pub const DEFAULT_SAMPLE_PERIOD_MS: Tick = 1000;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("corpus error: utterance of participant {participant} at [{start}, {end}) has no floor label")]
    Unlabeled {
        participant: usize,
        start: Tick,
        end: Tick,
    },
    #[error("insufficient training data: no {0} instances")]
    InsufficientData(FloorClass),
    #[error("model format version {found} is not supported (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloorClass {
    Same,
    Diff,
}

impl FloorClass {
    pub const ALL: [FloorClass; 2] = [FloorClass::Same, FloorClass::Diff];

    fn index(self) -> usize {
        match self {
            FloorClass::Same => 0,
            FloorClass::Diff => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FloorClass::Same => "same",
            FloorClass::Diff => "diff",
        }
    }
}

impl std::fmt::Display for FloorClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FloorClass::Same => "SAME",
            FloorClass::Diff => "DIFF",
        })
    }
}

/// Discretization of the four features.
///
/// The TRP gap uses fixed-width bins over `[-trp_clip_ms, +trp_clip_ms]`
/// (the top edge folds into the last bin) plus a trailing MISSING bin.
/// Each overlap window uses `overlap_bins` equal bins over `[0, window_len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBinning {
    pub trp_bin_width_ms: Tick,
    pub trp_clip_ms: Tick,
    pub overlap_bins: usize,
}

impl Default for FeatureBinning {
    fn default() -> Self {
        Self {
            trp_bin_width_ms: 100,
            trp_clip_ms: TRP_CLIP_MS,
            overlap_bins: 20,
        }
    }
}

impl FeatureBinning {
    fn validate(&self) -> Result<(), LearnerError> {
        if self.trp_bin_width_ms <= 0
            || self.trp_clip_ms <= 0
            || (2 * self.trp_clip_ms) % self.trp_bin_width_ms != 0
        {
            return Err(LearnerError::InvalidModel(
                "TRP bin width must evenly tile the clip range".into(),
            ));
        }
        if self.overlap_bins == 0 {
            return Err(LearnerError::InvalidModel("overlap_bins must be positive".into()));
        }
        Ok(())
    }

    fn trp_value_bins(&self) -> usize {
        (2 * self.trp_clip_ms / self.trp_bin_width_ms) as usize
    }

    pub fn trp_missing_bin(&self) -> usize {
        self.trp_value_bins()
    }

    pub fn bin_count(&self, feature: usize) -> usize {
        if feature == 0 {
            self.trp_value_bins() + 1
        } else {
            self.overlap_bins
        }
    }

    pub fn trp_bin(&self, gap: Option<Tick>) -> usize {
        match gap {
            None => self.trp_missing_bin(),
            Some(v) => {
                let v = v.clamp(-self.trp_clip_ms, self.trp_clip_ms);
                (((v + self.trp_clip_ms) / self.trp_bin_width_ms) as usize).min(self.trp_value_bins() - 1)
            }
        }
    }

    /// Bin of overlap window `k` (0-based).
    pub fn overlap_bin(&self, k: usize, ms: u32) -> usize {
        let len = window_len(k) as u64;
        let v = u64::from(ms).min(len);
        ((v * self.overlap_bins as u64 / len) as usize).min(self.overlap_bins - 1)
    }

    pub fn bins(&self, f: &PairFeatures) -> [usize; NUM_FEATURES] {
        let w = f.overlaps();
        [
            self.trp_bin(f.trp_gap_ms),
            self.overlap_bin(0, w[0]),
            self.overlap_bin(1, w[1]),
            self.overlap_bin(2, w[2]),
        ]
    }
}

/// Likelihood rows for one feature: `rows[class][bin]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub rows: [Vec<f64>; 2],
}

impl LookupTable {
    pub fn uniform(bins: usize) -> Self {
        let row = vec![1.0 / bins as f64; bins];
        Self {
            rows: [row.clone(), row],
        }
    }

    pub fn row(&self, class: FloorClass) -> &[f64] {
        &self.rows[class.index()]
    }

    pub fn likelihood(&self, class: FloorClass, bin: usize) -> f64 {
        self.rows[class.index()][bin]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorModel {
    pub format_version: u32,
    pub binning: FeatureBinning,
    /// `[P(SAME), P(DIFF)]`.
    pub priors: [f64; 2],
    pub tables: [LookupTable; NUM_FEATURES],
}

impl FloorModel {
    /// Builds a model after checking every structural invariant.
    pub fn new(
        binning: FeatureBinning,
        priors: [f64; 2],
        tables: [LookupTable; NUM_FEATURES],
    ) -> Result<Self, LearnerError> {
        let model = Self {
            format_version: FORMAT_VERSION,
            binning,
            priors,
            tables,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model whose tables carry no evidence; the posterior equals the SAME prior.
    pub fn uniform(p_same: f64) -> Self {
        let binning = FeatureBinning::default();
        let tables = std::array::from_fn(|f| LookupTable::uniform(binning.bin_count(f)));
        Self {
            format_version: FORMAT_VERSION,
            binning,
            priors: [p_same, 1.0 - p_same],
            tables,
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        self.binning.validate()?;
        let [ps, pd] = self.priors;
        if !(ps > 0.0 && pd > 0.0 && ((ps + pd) - 1.0).abs() <= 1e-9) {
            return Err(LearnerError::InvalidModel(format!(
                "priors must be positive and sum to 1, got ({ps}, {pd})"
            )));
        }
        for (f, table) in self.tables.iter().enumerate() {
            for class in FloorClass::ALL {
                let row = table.row(class);
                if row.len() != self.binning.bin_count(f) {
                    return Err(LearnerError::InvalidModel(format!(
                        "{} {} row has {} bins, expected {}",
                        FEATURE_NAMES[f],
                        class.name(),
                        row.len(),
                        self.binning.bin_count(f)
                    )));
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|v| !(*v > 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(LearnerError::InvalidModel(format!(
                        "{} {} row must be positive and sum to 1 (sum = {sum})",
                        FEATURE_NAMES[f],
                        class.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Unnormalized log joint `ln P(class) + Σ ln L(bin | class)`.
    fn log_joint(&self, class: FloorClass, bins: &[usize; NUM_FEATURES]) -> f64 {
        let mut acc = self.priors[class.index()].ln();
        for (table, &bin) in self.tables.iter().zip(bins) {
            acc += table.likelihood(class, bin).ln();
        }
        acc
    }

    /// `P(SAME | f)` for one ordered pair, evaluated in log space.
    pub fn posterior(&self, f: &PairFeatures) -> f64 {
        let bins = self.binning.bins(f);
        let same = self.log_joint(FloorClass::Same, &bins);
        let diff = self.log_joint(FloorClass::Diff, &bins);
        // logistic of the log-odds, arranged so exp never overflows
        let d = diff - same;
        if d <= 0.0 {
            1.0 / (1.0 + d.exp())
        } else {
            let e = (-d).exp();
            e / (1.0 + e)
        }
    }

    pub fn posterior_of(&self, class: FloorClass, f: &PairFeatures) -> f64 {
        match class {
            FloorClass::Same => self.posterior(f),
            FloorClass::Diff => 1.0 - self.posterior(f),
        }
    }

    /// Edge weight for the unordered pair: mean of both directions.
    pub fn pair_posterior(&self, ab: &PairFeatures, ba: &PairFeatures) -> f64 {
        0.5 * (self.posterior(ab) + self.posterior(ba))
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), LearnerError> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn save_to_path(&self, path: &Path) -> Result<(), LearnerError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, LearnerError> {
        let mut text = String::new();
        r.read_to_string(&mut text)
            .map_err(|e| LearnerError::Malformed(format!("unreadable: {e}")))?;
        Self::from_text(&text)
    }

    pub fn load_from_path(path: &Path) -> Result<Self, LearnerError> {
        Self::load(std::fs::File::open(path)?)
    }

    pub fn to_text(&self) -> String {
        let b = &self.binning;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "format_version {}", self.format_version);
        let _ = writeln!(
            out,
            "binning trp_bin_width_ms {} trp_clip_ms {} overlap_bins {} windows_ms {} {} {}",
            b.trp_bin_width_ms,
            b.trp_clip_ms,
            b.overlap_bins,
            window_len(0),
            window_len(1),
            window_len(2)
        );
        let _ = writeln!(out, "priors {:?} {:?}", self.priors[0], self.priors[1]);
        for (f, table) in self.tables.iter().enumerate() {
            for class in FloorClass::ALL {
                let row = table.row(class);
                let _ = write!(out, "table {} {} {}", FEATURE_NAMES[f], class.name(), row.len());
                for v in row {
                    let _ = write!(out, " {v:?}");
                }
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LearnerError> {
        let malformed = |m: &str| LearnerError::Malformed(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());

        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(malformed("missing header line"));
        }
        let version_line = lines.next().ok_or_else(|| malformed("missing format_version"))?;
        let version = match version_line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["format_version", v] => v.parse::<u32>().map_err(|_| malformed("bad format_version"))?,
            _ => return Err(malformed("missing format_version")),
        };
        if version != FORMAT_VERSION {
            return Err(LearnerError::VersionMismatch { found: version });
        }

        let binning_line = lines.next().ok_or_else(|| malformed("missing binning"))?;
        let binning = match binning_line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["binning", "trp_bin_width_ms", w, "trp_clip_ms", c, "overlap_bins", n, "windows_ms", w1, w2, w3] => {
                let windows = [w1, w2, w3].map(|v| v.parse::<Tick>().ok());
                if windows != [0, 1, 2].map(|k| Some(window_len(k))) {
                    return Err(malformed("window lengths do not match this build"));
                }
                FeatureBinning {
                    trp_bin_width_ms: w.parse().map_err(|_| malformed("bad trp_bin_width_ms"))?,
                    trp_clip_ms: c.parse().map_err(|_| malformed("bad trp_clip_ms"))?,
                    overlap_bins: n.parse().map_err(|_| malformed("bad overlap_bins"))?,
                }
            }
            _ => return Err(malformed("bad binning line")),
        };
        binning
            .validate()
            .map_err(|e| LearnerError::Malformed(e.to_string()))?;

        let priors_line = lines.next().ok_or_else(|| malformed("missing priors"))?;
        let priors = match priors_line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["priors", s, d] => [parse_f64(s)?, parse_f64(d)?],
            _ => return Err(malformed("bad priors line")),
        };

        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(2 * NUM_FEATURES);
        for f in 0..NUM_FEATURES {
            for class in FloorClass::ALL {
                let line = lines.next().ok_or_else(|| malformed("truncated table section"))?;
                let mut tok = line.split_whitespace();
                let head: Vec<_> = tok.by_ref().take(4).collect();
                if head.len() != 4
                    || head[0] != "table"
                    || head[1] != FEATURE_NAMES[f]
                    || head[2] != class.name()
                {
                    return Err(LearnerError::Malformed(format!(
                        "expected table {} {}",
                        FEATURE_NAMES[f],
                        class.name()
                    )));
                }
                let n: usize = head[3].parse().map_err(|_| malformed("bad table length"))?;
                let row = tok.map(parse_f64).collect::<Result<Vec<_>, _>>()?;
                if row.len() != n || n != binning.bin_count(f) {
                    return Err(LearnerError::Malformed(format!(
                        "table {} {} has {} values, expected {}",
                        FEATURE_NAMES[f],
                        class.name(),
                        row.len(),
                        binning.bin_count(f)
                    )));
                }
                rows.push(row);
            }
        }
        if lines.next().map(str::trim) != Some("end") {
            return Err(malformed("missing end marker"));
        }
        if lines.next().is_some() {
            return Err(malformed("trailing data after end marker"));
        }

        let mut it = rows.into_iter();
        let tables = std::array::from_fn(|_| LookupTable {
            rows: [it.next().unwrap_or_default(), it.next().unwrap_or_default()],
        });
        let model = Self {
            format_version: version,
            binning,
            priors,
            tables,
        };
        model
            .validate()
            .map_err(|e| LearnerError::Malformed(e.to_string()))?;
        Ok(model)
    }
}

fn parse_f64(s: &str) -> Result<f64, LearnerError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| LearnerError::Malformed(format!("bad number {s:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub features: PairFeatures,
    pub class: FloorClass,
}

/// Samples labeled training instances from per-participant utterance lists.
///
/// `utterances[i]` holds participant i's ordered, labeled utterances;
/// activity streams are derived from them over `[0, end)`. At every sample
/// instant `t = k * sample_period_ms` (k ≥ 1, `t ≤ end`), each ordered pair
/// whose members both spoke in `[t - 30 s, t)` yields one instance, labeled
/// SAME when the members' most recent utterances carry the same floor label.
pub fn make_training_instances(
    utterances: &[Vec<Utterance>],
    end: Tick,
    sample_period_ms: Tick,
) -> Result<Vec<TrainingInstance>, LearnerError> {
    for u in utterances.iter().flatten() {
        if u.floor_label.is_none() {
            return Err(LearnerError::Unlabeled {
                participant: u.participant.index(),
                start: u.start,
                end: u.end,
            });
        }
    }
    let period = sample_period_ms.max(1);
    let n = utterances.len();
    let activity: Vec<Vec<bool>> = utterances
        .iter()
        .map(|u| {
            let p = u.first().map(|u| u.participant);
            match p {
                Some(p) => ActivityStream::from_utterances(p, 0, end, u).bits().to_vec(),
                None => vec![false; end.max(0) as usize],
            }
        })
        .collect();

    // only i < j counters are filled; lookups normalize the pair order
    let mut counters = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut c = OverlapCounter::new(0);
            if i < j {
                for (a, b) in activity[i].iter().zip(&activity[j]) {
                    c.push(*a && *b);
                }
            }
            counters.push(c);
        }
    }
    let counter = |i: usize, j: usize| &counters[i.min(j) * n + i.max(j)];

    let mut out = Vec::new();
    let mut t = period;
    while t <= end {
        // most recent utterance started before t, and whether it reaches into the lookback
        let recent: Vec<Option<&Utterance>> = utterances
            .iter()
            .map(|u| {
                let idx = u.partition_point(|u| u.start < t);
                idx.checked_sub(1).map(|k| &u[k])
            })
            .collect();
        let active: Vec<bool> = recent
            .iter()
            .map(|u| u.is_some_and(|u| u.end > t - MAX_LOOKBACK_MS))
            .collect();
        for a in 0..n {
            for b in 0..n {
                if a == b || !active[a] || !active[b] {
                    continue;
                }
                let (ua, ub) = (recent[a].expect("active"), recent[b].expect("active"));
                let class = if ua.floor_label == ub.floor_label {
                    FloorClass::Same
                } else {
                    FloorClass::Diff
                };
                let features = PairFeatures::with_overlaps(
                    crate::features::trp_gap(&utterances[a], &utterances[b], t),
                    counter(a, b).windows(t),
                );
                out.push(TrainingInstance { features, class });
            }
        }
        t += period;
    }
    Ok(out)
}

/// Class counts and per-feature bin occupancy of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    /// `[SAME, DIFF]`.
    pub class_counts: [u64; 2],
    /// `occupancy[feature][class][bin]` raw counts.
    pub occupancy: Vec<[Vec<u64>; 2]>,
}

impl TrainingSummary {
    pub fn from_instances(binning: &FeatureBinning, instances: &[TrainingInstance]) -> Self {
        let mut class_counts = [0u64; 2];
        let mut occupancy: Vec<[Vec<u64>; 2]> = (0..NUM_FEATURES)
            .map(|f| [vec![0; binning.bin_count(f)], vec![0; binning.bin_count(f)]])
            .collect();
        for inst in instances {
            let c = inst.class.index();
            class_counts[c] += 1;
            for (f, bin) in binning.bins(&inst.features).into_iter().enumerate() {
                occupancy[f][c][bin] += 1;
            }
        }
        Self {
            class_counts,
            occupancy,
        }
    }

    /// Number of non-empty bins per feature and class.
    pub fn occupied_bins(&self) -> Vec<[usize; 2]> {
        self.occupancy
            .iter()
            .map(|rows| rows.each_ref().map(|r| r.iter().filter(|c| **c > 0).count()))
            .collect()
    }
}

/// Trains with the default binning.
pub fn train(instances: &[TrainingInstance]) -> Result<FloorModel, LearnerError> {
    train_with_binning(instances, FeatureBinning::default())
}

/// Priors are class frequencies; each likelihood row is the add-one
/// smoothed bin histogram of that class.
pub fn train_with_binning(
    instances: &[TrainingInstance],
    binning: FeatureBinning,
) -> Result<FloorModel, LearnerError> {
    binning.validate()?;
    let summary = TrainingSummary::from_instances(&binning, instances);
    for class in FloorClass::ALL {
        if summary.class_counts[class.index()] == 0 {
            return Err(LearnerError::InsufficientData(class));
        }
    }
    let total = (summary.class_counts[0] + summary.class_counts[1]) as f64;
    let priors = [
        summary.class_counts[0] as f64 / total,
        summary.class_counts[1] as f64 / total,
    ];
    let tables = std::array::from_fn(|f| LookupTable {
        rows: std::array::from_fn(|c| {
            let counts = &summary.occupancy[f][c];
            let denom = (summary.class_counts[c] + counts.len() as u64) as f64;
            counts.iter().map(|&k| (k + 1) as f64 / denom).collect()
        }),
    });
    FloorModel::new(binning, priors, tables)
}
