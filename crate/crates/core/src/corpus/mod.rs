//! Labeled corpora: file format, synthetic generation, replay and evaluation.

pub mod evaluate;
pub mod format;
pub mod generator;
pub mod replay;

use thiserror::Error;

pub use evaluate::{evaluate, evaluate_oracle, EvalError, EvalReport, EvalSettings, GroundTruth};
pub use format::{Corpus, TurnRecord};
pub use generator::{generate, overlap_fractions, GeneratorConfig, OverlapStats};
pub use replay::{replay, replay_mixed};

use crate::timeline::Tick;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported corpus version {0:?}")]
    Version(String),
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("overlapping turns for {participant} at {at} ms")]
    Overlap { participant: String, at: Tick },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
