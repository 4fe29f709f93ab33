//! Server configuration: a TOML file with command-line overrides on top.

use std::net::IpAddr;
use std::path::{Path, PathBuf};

use floorspace_core::assigner::{EVAL_PERIOD_MS, NORMAL_GAIN, QUIET_GAIN};
use floorspace_core::timeline::{Tick, MAX_PARTICIPANTS};
use floorspace_core::transport::jitter::DEFAULT_DEPTH_MS;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    pub normal: f64,
    pub quiet: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            normal: NORMAL_GAIN,
            quiet: QUIET_GAIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub address: IpAddr,
    /// HTTP API port. Port 0 picks a free port (as do the two below).
    pub port: u16,
    /// UDP port for RTP audio in both directions.
    pub audio_port: u16,
    /// UDP port for the control channel.
    pub control_port: u16,
    /// Trained model file. Relative paths resolve against the config file.
    pub model: Option<PathBuf>,
    pub gains: Gains,
    pub eval_period_ms: Tick,
    pub max_participants: usize,
    pub jitter_depth_ms: u32,
    /// How far floor analysis runs behind the server clock, so that audio
    /// still in flight or in jitter buffers reaches the timeline first.
    pub analysis_delay_ms: Tick,
    /// Capacity of the inbound audio queue; the oldest packet is dropped
    /// when it is full.
    pub queue_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            address: IpAddr::from([127, 0, 0, 1]),
            port: 7400,
            audio_port: 7401,
            control_port: 7402,
            model: None,
            gains: Gains::default(),
            eval_period_ms: EVAL_PERIOD_MS,
            max_participants: MAX_PARTICIPANTS,
            jitter_depth_ms: DEFAULT_DEPTH_MS,
            analysis_delay_ms: 200,
            queue_capacity: 1024,
        }
    }
}

/// Values given on the command line; each one that is set wins over the file.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub address: Option<IpAddr>,
    pub port: Option<u16>,
    pub audio_port: Option<u16>,
    pub control_port: Option<u16>,
    pub model: Option<PathBuf>,
    pub normal_gain: Option<f64>,
    pub quiet_gain: Option<f64>,
    pub eval_period_ms: Option<Tick>,
    pub max_participants: Option<usize>,
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads `path`, resolving a relative model path against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if let (Some(model), Some(dir)) = (&cfg.model, path.parent()) {
            if model.is_relative() {
                cfg.model = Some(dir.join(model));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        if let Some(v) = o.address {
            self.address = v;
        }
        if let Some(v) = o.port {
            self.port = v;
        }
        if let Some(v) = o.audio_port {
            self.audio_port = v;
        }
        if let Some(v) = o.control_port {
            self.control_port = v;
        }
        if let Some(v) = &o.model {
            self.model = Some(v.clone());
        }
        if let Some(v) = o.normal_gain {
            self.gains.normal = v;
        }
        if let Some(v) = o.quiet_gain {
            self.gains.quiet = v;
        }
        if let Some(v) = o.eval_period_ms {
            self.eval_period_ms = v;
        }
        if let Some(v) = o.max_participants {
            self.max_participants = v;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(1..=MAX_PARTICIPANTS).contains(&self.max_participants) {
            return bad(format!("max_participants must be in 1..={MAX_PARTICIPANTS}"));
        }
        if self.eval_period_ms < 1 {
            return bad("eval_period_ms must be positive".into());
        }
        for (name, g) in [("normal", self.gains.normal), ("quiet", self.gains.quiet)] {
            if !(g.is_finite() && g >= 0.0) {
                return bad(format!("gains.{name} must be a non-negative number"));
            }
        }
        if self.analysis_delay_ms < 0 {
            return bad("analysis_delay_ms must not be negative".into());
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut cfg = ServerConfig::from_toml(
            "port = 9000\nmodel = \"m.fsm\"\neval_period_ms = 60\n[gains]\nquiet = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.gains, Gains { normal: 1.0, quiet: 0.5 });
        assert_eq!(cfg.audio_port, 7401);
        cfg.apply(&ConfigOverrides {
            port: Some(9100),
            quiet_gain: Some(0.2),
            ..Default::default()
        });
        assert_eq!((cfg.port, cfg.gains.quiet, cfg.eval_period_ms), (9100, 0.2, 60));
        cfg.validate().unwrap();
    }

    #[test]
    fn defaults_round_trip_and_reject_unknown_fields() {
        let cfg = ServerConfig::default();
        assert_eq!(ServerConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(ServerConfig::from_toml("prot = 1\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ServerConfig {
            max_participants: 11,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.max_participants = 4;
        cfg.gains.quiet = -0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_model_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("serve.toml");
        std::fs::write(&path, "model = \"model.fsm\"\n").unwrap();
        let cfg = ServerConfig::load(&path).unwrap();
        assert_eq!(cfg.model.unwrap(), dir.path().join("model.fsm"));
    }
}
