//! Faster-than-real-time replay of a corpus through the live pipeline.

use crate::engine::{ConfigChange, Engine, EngineConfig, EngineError, Evaluation, PairScorer};
use crate::mixer::{Mixer, MixerConfig, MixerError};
use crate::timeline::{ParticipantId, Tick};
use crate::vad::SAMPLES_PER_MS;

use super::format::Corpus;

/// Builds an engine with every corpus participant present from tick 0.
pub fn engine_for<S: PairScorer>(corpus: &Corpus, scorer: S, cfg: EngineConfig) -> Result<Engine<S>, EngineError> {
    let mut engine = Engine::new(cfg, scorer, 0);
    for (id, name) in corpus.ids().into_iter().zip(corpus.participants()) {
        engine.join(id, name.clone())?;
    }
    Ok(engine)
}

/// Runs the corpus streams through the engine tick by tick, calling
/// `on_eval` after every evaluation. Returns the configuration-change log.
pub fn replay<S: PairScorer>(
    corpus: &Corpus,
    scorer: S,
    cfg: EngineConfig,
    mut on_eval: impl FnMut(&Evaluation),
) -> Result<Vec<ConfigChange>, EngineError> {
    let mut engine = engine_for(corpus, scorer, cfg)?;
    let streams = corpus.streams();
    let mut col = vec![false; streams.len()];
    let mut events = Vec::new();
    for t in 0..corpus.end() {
        for (c, s) in col.iter_mut().zip(&streams) {
            *c = s.is_speech(t);
        }
        if let Some(ev) = engine.step(&col)? {
            on_eval(&ev);
            if ev.changed {
                events.append(&mut engine.take_events());
            }
        }
    }
    events.append(&mut engine.take_events());
    Ok(events)
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Mixer(#[from] MixerError),
    #[error("expected audio for {expected} participants, got {found}")]
    AudioCount { expected: usize, found: usize },
}

/// Replays with audio: every 20 ms frame each listener in `listeners`
/// gets a mix of everyone else's PCM under the gains in force at the
/// frame's start. `pcm[k]` is participant k's 8 kHz audio from tick 0;
/// short inputs are padded with silence.
pub fn replay_mixed<S: PairScorer>(
    corpus: &Corpus,
    scorer: S,
    cfg: EngineConfig,
    mixer_cfg: MixerConfig,
    pcm: &[Vec<i16>],
    listeners: &[ParticipantId],
) -> Result<(Vec<ConfigChange>, Vec<Vec<i16>>), ReplayError> {
    let ids = corpus.ids();
    if pcm.len() != ids.len() {
        return Err(ReplayError::AudioCount {
            expected: ids.len(),
            found: pcm.len(),
        });
    }
    let mut engine = engine_for(corpus, scorer, cfg)?;
    let mut mixer = Mixer::new(mixer_cfg);
    let streams = corpus.streams();
    let frame_ms = Tick::from(mixer_cfg.frame_ms.max(1));
    let frame_len = mixer_cfg.frame_samples();
    let end = corpus.end();
    let frames = (end + frame_ms - 1) / frame_ms;
    let mut outputs = vec![Vec::with_capacity(frames as usize * frame_len); listeners.len()];
    let mut events = Vec::new();
    let mut col = vec![false; streams.len()];
    let mut scratch: Vec<Vec<i16>> = vec![vec![0; frame_len]; ids.len()];
    for f in 0..frames {
        let t0 = f * frame_ms;
        let gains = engine.gain_matrix();
        for (k, buf) in scratch.iter_mut().enumerate() {
            let from = (t0 as usize * SAMPLES_PER_MS).min(pcm[k].len());
            let to = (from + frame_len).min(pcm[k].len());
            buf.fill(0);
            buf[..to - from].copy_from_slice(&pcm[k][from..to]);
        }
        let inputs: Vec<(ParticipantId, &[i16])> =
            ids.iter().copied().zip(scratch.iter().map(Vec::as_slice)).collect();
        for (out, &listener) in outputs.iter_mut().zip(listeners) {
            out.extend(mixer.mix_frame(listener, &inputs, &gains)?);
        }
        for t in t0..(t0 + frame_ms).min(end) {
            for (c, s) in col.iter_mut().zip(&streams) {
                *c = s.is_speech(t);
            }
            engine.step(&col)?;
        }
        events.append(&mut engine.take_events());
    }
    let samples = end as usize * SAMPLES_PER_MS;
    for out in &mut outputs {
        out.truncate(samples);
    }
    Ok((events, outputs))
}
