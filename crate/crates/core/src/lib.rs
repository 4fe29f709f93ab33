//! Conversational floor detection and per-listener mixing for a multi-party
//! audio space.
//!
//! Each participant's audio is reduced to a 1 ms speech/non-speech stream
//! ([`vad`]), segmented into utterances ([`segmenter`]), and compared
//! pairwise ([`features`]). A Naive Bayes model ([`learner`]) turns pair
//! features into same-floor posteriors; the [`assigner`] picks the most
//! likely partition of participants into floors every evaluation period and
//! the [`mixer`] renders each listener's mix with co-floor speakers at
//! normal gain and everyone else attenuated. [`engine`] ties these together
//! on a tick-driven clock for both live serving and offline replay.

pub mod api;
pub mod assigner;
pub mod corpus;
pub mod engine;
pub mod features;
pub mod learner;
pub mod mixer;
pub mod partition;
pub mod segmenter;
pub mod timeline;
pub mod transport;
pub mod vad;
pub mod wav;

pub use assigner::{AssignerConfig, AssignerState, FloorConfiguration, GainMatrix, GainPolicy, PairPosteriors};
pub use learner::{FloorClass, FloorModel};
pub use partition::Partition;
pub use timeline::{ActivityStream, Participant, ParticipantId, Tick, Utterance};
