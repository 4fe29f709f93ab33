//! Per-listener mix-minus with linearly ramped gains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assigner::GainMatrix;
use crate::timeline::ParticipantId;
use crate::vad::SAMPLES_PER_MS;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MixerError {
    #[error("frame from {speaker} has {found} samples, expected {expected}")]
    FrameLength {
        speaker: ParticipantId,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixerConfig {
    pub frame_ms: u32,
    pub ramp_ms: u32,
}

impl Default for MixerConfig {
    fn default() -> Self {
        Self {
            frame_ms: 20,
            ramp_ms: 250,
        }
    }
}

impl MixerConfig {
    pub fn frame_samples(&self) -> usize {
        self.frame_ms as usize * SAMPLES_PER_MS
    }

    pub fn ramp_samples(&self) -> usize {
        self.ramp_ms as usize * SAMPLES_PER_MS
    }
}

/// A gain that moves linearly toward its target at a fixed per-sample step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampedGain {
    current: f64,
    target: f64,
    step: f64,
}

impl RampedGain {
    pub fn steady(g: f64) -> Self {
        Self {
            current: g,
            target: g,
            step: 0.0,
        }
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Retargets; the full distance is covered in `ramp_samples`.
    pub fn set_target(&mut self, target: f64, ramp_samples: usize) {
        if target == self.target {
            return;
        }
        self.target = target;
        if ramp_samples == 0 {
            self.current = target;
            self.step = 0.0;
        } else {
            self.step = (target - self.current).abs() / ramp_samples as f64;
        }
    }

    /// Advances one sample and returns the gain to apply to it.
    pub fn next_sample(&mut self) -> f64 {
        if self.current < self.target {
            self.current = (self.current + self.step).min(self.target);
        } else if self.current > self.target {
            self.current = (self.current - self.step).max(self.target);
        }
        self.current
    }
}

fn saturate(v: f64) -> i16 {
    v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

/// Ramp state for one listener's view of every speaker.
#[derive(Debug, Clone)]
pub struct ListenerMix {
    listener: ParticipantId,
    cfg: MixerConfig,
    gains: BTreeMap<ParticipantId, RampedGain>,
}

impl ListenerMix {
    pub fn new(listener: ParticipantId, cfg: MixerConfig) -> Self {
        Self {
            listener,
            cfg,
            gains: BTreeMap::new(),
        }
    }

    pub fn listener(&self) -> ParticipantId {
        self.listener
    }

    pub fn gain_state(&self, speaker: ParticipantId) -> Option<&RampedGain> {
        self.gains.get(&speaker)
    }

    /// Mixes one frame: `out[n] = sat(Σ g(listener, s, n) · x_s[n])`, the
    /// listener's own frame excluded. A speaker seen for the first time
    /// starts at its target gain.
    pub fn mix_frame(
        &mut self,
        frames: &[(ParticipantId, &[i16])],
        matrix: &GainMatrix,
    ) -> Result<Vec<i16>, MixerError> {
        let len = self.cfg.frame_samples();
        for (speaker, frame) in frames {
            if frame.len() != len {
                return Err(MixerError::FrameLength {
                    speaker: *speaker,
                    expected: len,
                    found: frame.len(),
                });
            }
        }
        let ramp = self.cfg.ramp_samples();
        let mut acc = vec![0.0f64; len];
        for (speaker, frame) in frames {
            if *speaker == self.listener {
                continue;
            }
            let target = matrix.gain(self.listener, *speaker);
            let g = self
                .gains
                .entry(*speaker)
                .or_insert_with(|| RampedGain::steady(target));
            g.set_target(target, ramp);
            for (a, &x) in acc.iter_mut().zip(frame.iter()) {
                *a += g.next_sample() * f64::from(x);
            }
        }
        Ok(acc.into_iter().map(saturate).collect())
    }
}

/// Ramp state for every listener in a session.
#[derive(Debug, Clone, Default)]
pub struct Mixer {
    cfg: MixerConfig,
    listeners: BTreeMap<ParticipantId, ListenerMix>,
}

impl Mixer {
    pub fn new(cfg: MixerConfig) -> Self {
        Self {
            cfg,
            listeners: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &MixerConfig {
        &self.cfg
    }

    pub fn mix_frame(
        &mut self,
        listener: ParticipantId,
        frames: &[(ParticipantId, &[i16])],
        matrix: &GainMatrix,
    ) -> Result<Vec<i16>, MixerError> {
        let cfg = self.cfg;
        self.listeners
            .entry(listener)
            .or_insert_with(|| ListenerMix::new(listener, cfg))
            .mix_frame(frames, matrix)
    }

    pub fn remove_listener(&mut self, listener: ParticipantId) {
        self.listeners.remove(&listener);
    }
}
