//! Energy-based voice activity detection with an adaptive noise floor and
//! hangover, producing decisions on the 1 ms tick grid.
//!
//! Decisions are made once per analysis frame (10 ms by default) and fanned
//! out to every tick the frame covers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeline::{ActivityStream, ParticipantId, Tick};

/// The only supported capture rate (toll quality).
pub const SAMPLE_RATE_HZ: u32 = 8000;
pub const SAMPLES_PER_MS: usize = (SAMPLE_RATE_HZ / 1000) as usize;

const FULL_SCALE: f64 = 32768.0;

#[derive(Debug, Error, PartialEq)]
pub enum VadError {
    #[error("unsupported sample rate {0} Hz (only 8000 Hz is supported)")]
    UnsupportedFormat(u32),
    #[error("{samples} samples is not a whole number of {frame_samples}-sample frames")]
    PartialFrame { samples: usize, frame_samples: usize },
    #[error("invalid VAD configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    pub frame_ms: u32,
    /// Absolute level (dBFS) a frame must exceed to count as speech.
    pub energy_floor_db: f64,
    /// Margin above the adapted noise floor a frame must exceed.
    pub snr_threshold_db: f64,
    pub hangover_ms: u32,
    /// Per-frame exponential smoothing coefficient for the noise floor.
    pub noise_adapt_rate: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 10,
            energy_floor_db: -60.0,
            snr_threshold_db: 10.0,
            hangover_ms: 200,
            noise_adapt_rate: 0.05,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), VadError> {
        if self.frame_ms == 0 {
            return Err(VadError::InvalidConfig("frame_ms must be positive"));
        }
        if !(0.0..=1.0).contains(&self.noise_adapt_rate) {
            return Err(VadError::InvalidConfig("noise_adapt_rate must lie in [0, 1]"));
        }
        if !self.energy_floor_db.is_finite() || !self.snr_threshold_db.is_finite() {
            return Err(VadError::InvalidConfig("thresholds must be finite"));
        }
        Ok(())
    }

    pub fn frame_samples(&self) -> usize {
        self.frame_ms as usize * SAMPLES_PER_MS
    }
}

/// RMS level of a block of samples in dBFS. Silence is `-inf`.
pub fn rms_dbfs(samples: &[i16]) -> f64 {
    if samples.is_empty() {
        return f64::NEG_INFINITY;
    }
    let sum_sq: f64 = samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    let rms = (sum_sq / samples.len() as f64).sqrt();
    20.0 * (rms / FULL_SCALE).log10()
}

/// Stateful detector for one participant's stream.
#[derive(Debug, Clone)]
pub struct VoiceActivityDetector {
    cfg: VadConfig,
    noise_floor_db: f64,
    hangover_left_ms: u32,
    adapt: bool,
}

impl VoiceActivityDetector {
    pub fn new(cfg: VadConfig) -> Result<Self, VadError> {
        cfg.validate()?;
        Ok(Self {
            noise_floor_db: cfg.energy_floor_db,
            cfg,
            hangover_left_ms: 0,
            adapt: true,
        })
    }

    /// Pins the noise floor at `db` and stops adapting it.
    pub fn with_frozen_noise_floor(mut self, db: f64) -> Self {
        self.noise_floor_db = db;
        self.adapt = false;
        self
    }

    pub fn config(&self) -> &VadConfig {
        &self.cfg
    }

    pub fn noise_floor_db(&self) -> f64 {
        self.noise_floor_db
    }

    fn frame_is_loud(&self, level_db: f64) -> bool {
        level_db > self.cfg.energy_floor_db
            && level_db > self.noise_floor_db + self.cfg.snr_threshold_db
    }

    /// Classifies one analysis frame, updating the noise floor and hangover.
    pub fn push_frame(&mut self, frame: &[i16]) -> bool {
        let level = rms_dbfs(frame);
        if self.frame_is_loud(level) {
            self.hangover_left_ms = self.cfg.hangover_ms;
            return true;
        }
        if self.hangover_left_ms > 0 {
            self.hangover_left_ms = self.hangover_left_ms.saturating_sub(self.cfg.frame_ms);
            return true;
        }
        if self.adapt && level.is_finite() {
            let a = self.cfg.noise_adapt_rate;
            self.noise_floor_db = (1.0 - a) * self.noise_floor_db + a * level;
        }
        false
    }

    /// Classifies a block of whole frames and returns one decision per 1 ms tick.
    pub fn process(&mut self, pcm: &[i16]) -> Result<Vec<bool>, VadError> {
        let frame_samples = self.cfg.frame_samples();
        if pcm.len() % frame_samples != 0 {
            return Err(VadError::PartialFrame {
                samples: pcm.len(),
                frame_samples,
            });
        }
        let mut ticks = Vec::with_capacity(pcm.len() / SAMPLES_PER_MS);
        for frame in pcm.chunks_exact(frame_samples) {
            let speech = self.push_frame(frame);
            ticks.extend(std::iter::repeat_n(speech, self.cfg.frame_ms as usize));
        }
        Ok(ticks)
    }
}

/// Runs a fresh detector over `pcm` and returns the activity stream starting at `start`.
pub fn detect(
    participant: ParticipantId,
    pcm: &[i16],
    sample_rate: u32,
    start: Tick,
    cfg: &VadConfig,
) -> Result<ActivityStream, VadError> {
    if sample_rate != SAMPLE_RATE_HZ {
        return Err(VadError::UnsupportedFormat(sample_rate));
    }
    let mut vad = VoiceActivityDetector::new(cfg.clone())?;
    let bits = vad.process(pcm)?;
    Ok(ActivityStream::from_bits(participant, start, bits))
}
