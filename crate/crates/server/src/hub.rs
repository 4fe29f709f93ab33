//! The server's state machine, free of sockets and clocks.
//!
//! Every input carries the server tick it happened at, so a scripted run
//! is reproducible. Playout runs on 20 ms slots: each slot pops one frame
//! per participant from its jitter buffer, mixes those frames for every
//! listener, and feeds them to that participant's VAD. VAD decisions are
//! placed on the server timeline at the frame's capture time (the RTP
//! timestamp mapped through the participant's clock offset), and the floor
//! engine consumes that timeline `analysis_delay_ms` behind the clock.

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;

use floorspace_core::api::{ConfigurationView, Counters, GainsView, ParticipantStatus, StatusReport};
use floorspace_core::assigner::GainPolicy;
use floorspace_core::engine::{ConfigChange, Engine, EngineConfig, EngineError, PairScorer};
use floorspace_core::mixer::{Mixer, MixerConfig};
use floorspace_core::timeline::{ParticipantId, Tick, MAX_PARTICIPANTS};
use floorspace_core::transport::control::ControlMessage;
use floorspace_core::transport::packet::{AudioPacket, FRAME_MS};
use floorspace_core::transport::{ClockSync, JitterBuffer, Packetizer};
use floorspace_core::vad::{VadConfig, VoiceActivityDetector, SAMPLES_PER_MS};
use thiserror::Error;

use crate::config::ServerConfig;

/// VAD decisions further than this ahead of the analysis cursor are
/// discarded; they can only come from a wild clock offset.
const MAX_AHEAD_MS: Tick = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum HubError {
    #[error("no participant named {0:?}")]
    UnknownName(String),
    #[error("participant {0} is not connected")]
    UnknownParticipant(u8),
    #[error("participant {0} belongs to another control address")]
    NotOwner(u8),
    #[error("the name {0:?} is already taken")]
    NameTaken(String),
    #[error("audio SSRC {0:#010x} is already in use")]
    SsrcTaken(u32),
    #[error("participant names must be non-empty and contain no whitespace")]
    BadName,
    #[error("server is full ({0} participants)")]
    Full(usize),
    #[error("unexpected {0} message from a client")]
    Unexpected(&'static str),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubConfig {
    pub engine: EngineConfig,
    pub max_participants: usize,
    pub jitter_depth_ms: u32,
    pub analysis_delay_ms: Tick,
    /// Advertised to joining clients.
    pub audio_port: u16,
}

impl HubConfig {
    pub fn from_server(cfg: &ServerConfig, audio_port: u16) -> Self {
        let mut engine = EngineConfig::default();
        engine.assigner.eval_period_ms = cfg.eval_period_ms;
        engine.gains = GainPolicy {
            normal: cfg.gains.normal,
            quiet: cfg.gains.quiet,
        };
        Self {
            engine,
            max_participants: cfg.max_participants,
            jitter_depth_ms: cfg.jitter_depth_ms,
            analysis_delay_ms: cfg.analysis_delay_ms,
            audio_port,
        }
    }
}

impl Default for HubConfig {
    fn default() -> Self {
        Self::from_server(&ServerConfig::default(), 0)
    }
}

/// A datagram the driver should send.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Audio { to: SocketAddr, bytes: Vec<u8> },
    Control { to: SocketAddr, bytes: Vec<u8> },
}

struct Session {
    name: String,
    control_addr: SocketAddr,
    ssrc: u32,
    audio_addr: Option<SocketAddr>,
    jitter: JitterBuffer,
    clock: ClockSync,
    vad: VoiceActivityDetector,
    out: Packetizer,
    /// Decisions for ticks from the analysis cursor onward.
    activity: VecDeque<Option<bool>>,
    late_decisions: u64,
}

impl Session {
    /// Client capture time in ms of an RTP timestamp, taking the wrap of
    /// the 32-bit sample clock nearest to the client time `expected_ms`.
    fn capture_ms(ts: u32, expected_ms: Tick) -> Tick {
        let reference = expected_ms * SAMPLES_PER_MS as i64;
        let ext = reference + i64::from(ts.wrapping_sub(reference as u32) as i32);
        ext.div_euclid(SAMPLES_PER_MS as i64)
    }

    fn record(&mut self, start: Tick, decisions: &[bool], cursor: Tick) {
        for (k, &d) in decisions.iter().enumerate() {
            let t = start + k as Tick;
            if t < cursor {
                self.late_decisions += 1;
                continue;
            }
            let i = (t - cursor) as usize;
            if t - cursor >= MAX_AHEAD_MS {
                continue;
            }
            if self.activity.len() <= i {
                self.activity.resize(i + 1, None);
            }
            self.activity[i] = Some(d);
        }
    }
}

pub struct Hub<S> {
    cfg: HubConfig,
    engine: Engine<S>,
    mixer: Mixer,
    sessions: BTreeMap<ParticipantId, Session>,
    /// Start of the next playout slot.
    next_slot: Tick,
    now: Tick,
    events: Vec<ConfigChange>,
    counters: Counters,
}

impl<S: PairScorer> Hub<S> {
    pub fn new(cfg: HubConfig, scorer: S, now: Tick) -> Self {
        Self {
            engine: Engine::new(cfg.engine, scorer, now),
            mixer: Mixer::new(MixerConfig::default()),
            sessions: BTreeMap::new(),
            next_slot: now,
            now,
            events: Vec::new(),
            counters: Counters::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &HubConfig {
        &self.cfg
    }

    pub fn engine(&self) -> &Engine<S> {
        &self.engine
    }

    pub fn events(&self) -> &[ConfigChange] {
        &self.events
    }

    pub fn set_queue_dropped(&mut self, n: u64) {
        self.counters.queue_dropped = n;
    }

    pub fn on_audio(&mut self, from: SocketAddr, bytes: &[u8], arrival: Tick) {
        let packet = match AudioPacket::parse(bytes) {
            Ok(p) => p,
            Err(e) => {
                self.counters.bad_packets += 1;
                tracing::debug!(%from, "dropping audio datagram: {e}");
                return;
            }
        };
        let Some(s) = self.sessions.values_mut().find(|s| s.ssrc == packet.ssrc) else {
            self.counters.unknown_source += 1;
            return;
        };
        s.audio_addr = Some(from);
        s.jitter.push(&packet, arrival);
    }

    pub fn on_control(&mut self, from: SocketAddr, bytes: &[u8], now: Tick) -> Vec<Outgoing> {
        let reply = match ControlMessage::decode(bytes) {
            Ok(msg) => match self.handle(from, msg, now) {
                Ok(out) => return out,
                Err(e) => e.to_string(),
            },
            Err(e) => e.to_string(),
        };
        self.counters.control_errors += 1;
        tracing::debug!(%from, "control error: {reply}");
        vec![control(from, &ControlMessage::Error { message: reply })]
    }

    fn owned(&self, from: SocketAddr, participant: u8) -> Result<ParticipantId, HubError> {
        let id = ParticipantId::new(usize::from(participant)).map_err(|_| HubError::UnknownParticipant(participant))?;
        let s = self.sessions.get(&id).ok_or(HubError::UnknownParticipant(participant))?;
        if s.control_addr != from {
            return Err(HubError::NotOwner(participant));
        }
        Ok(id)
    }

    fn handle(&mut self, from: SocketAddr, msg: ControlMessage, now: Tick) -> Result<Vec<Outgoing>, HubError> {
        let ack = || vec![control(from, &ControlMessage::Ack)];
        match msg {
            ControlMessage::Join { name, audio_ssrc } => self.join(from, name, audio_ssrc, now),
            ControlMessage::Leave { participant } => {
                let id = self.owned(from, participant)?;
                self.remove(id)?;
                Ok(ack())
            }
            ControlMessage::Pin { participant, floors } => {
                let id = self.owned(from, participant)?;
                self.engine.pin(id, &floors)?;
                Ok(ack())
            }
            ControlMessage::Unpin { participant } => {
                let id = self.owned(from, participant)?;
                self.engine.unpin(id)?;
                Ok(ack())
            }
            ControlMessage::SyncReply { participant, probe, t2, t3, .. } => {
                let id = self.owned(from, participant)?;
                let s = self.sessions.get_mut(&id).expect("owned");
                match s.clock.on_reply(probe, t2, t3, now) {
                    Ok(off) => tracing::debug!(participant, offset = off.offset_ms, rtt = off.round_trip_ms, "clock sync"),
                    Err(e) => tracing::debug!(participant, "clock sync failed: {e}"),
                }
                Ok(Vec::new())
            }
            ControlMessage::Joined { .. } => Err(HubError::Unexpected("joined")),
            ControlMessage::SyncProbe { .. } => Err(HubError::Unexpected("sync_probe")),
            ControlMessage::Ack => Err(HubError::Unexpected("ack")),
            ControlMessage::Error { .. } => Err(HubError::Unexpected("error")),
        }
    }

    fn join(&mut self, from: SocketAddr, name: String, ssrc: u32, now: Tick) -> Result<Vec<Outgoing>, HubError> {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(HubError::BadName);
        }
        if let Some((&id, s)) = self.sessions.iter().find(|(_, s)| s.name == name) {
            // a retried join gets the same answer
            if s.control_addr == from && s.ssrc == ssrc {
                return Ok(vec![self.joined(from, id)]);
            }
            return Err(HubError::NameTaken(name));
        }
        if self.sessions.values().any(|s| s.ssrc == ssrc) {
            return Err(HubError::SsrcTaken(ssrc));
        }
        let limit = self.cfg.max_participants.min(MAX_PARTICIPANTS);
        if self.sessions.len() >= limit {
            return Err(HubError::Full(limit));
        }
        let id = (0..MAX_PARTICIPANTS)
            .map(|i| ParticipantId::new(i).expect("in range"))
            .find(|id| !self.sessions.contains_key(id))
            .expect("below the limit");
        self.engine.join(id, name.clone())?;
        let vad = VoiceActivityDetector::new(VadConfig::default()).expect("default VAD config is valid");
        let mut session = Session {
            name: name.clone(),
            control_addr: from,
            ssrc,
            audio_addr: None,
            jitter: JitterBuffer::new(self.cfg.jitter_depth_ms),
            clock: ClockSync::new(),
            vad,
            out: Packetizer::new(ssrc ^ 0x5eed_0000, 0, 0),
            activity: VecDeque::new(),
            late_decisions: 0,
        };
        let (probe, t1) = session.clock.start_probe(now);
        self.sessions.insert(id, session);
        tracing::info!(participant = id.index(), %name, %from, "joined");
        Ok(vec![self.joined(from, id), control(from, &ControlMessage::SyncProbe { probe, t1 })])
    }

    fn joined(&self, to: SocketAddr, id: ParticipantId) -> Outgoing {
        control(
            to,
            &ControlMessage::Joined {
                participant: id.index() as u8,
                audio_port: self.cfg.audio_port,
                server_tick: self.now,
            },
        )
    }

    fn remove(&mut self, id: ParticipantId) -> Result<(), HubError> {
        let s = self.sessions.remove(&id).ok_or(HubError::UnknownParticipant(id.index() as u8))?;
        self.engine.leave(id)?;
        self.mixer.remove_listener(id);
        tracing::info!(participant = id.index(), name = %s.name, "left");
        Ok(())
    }

    /// Advances to `now`: plays out and mixes every due slot, runs the
    /// floor analysis up to `now - analysis_delay_ms`, and issues clock
    /// probes.
    pub fn tick(&mut self, now: Tick) -> Vec<Outgoing> {
        self.now = self.now.max(now);
        let mut out = Vec::new();
        while self.next_slot <= self.now {
            let slot = self.next_slot;
            self.play_slot(slot, &mut out);
            self.next_slot += Tick::from(FRAME_MS);
        }
        self.analyze_until(self.now - self.cfg.analysis_delay_ms);
        for s in self.sessions.values_mut() {
            for e in s.clock.expire(self.now) {
                tracing::debug!(name = %s.name, "clock sync: {e}");
            }
            if s.clock.due(self.now) {
                let (probe, t1) = s.clock.start_probe(self.now);
                out.push(control(s.control_addr, &ControlMessage::SyncProbe { probe, t1 }));
            }
        }
        out
    }

    fn play_slot(&mut self, slot: Tick, out: &mut Vec<Outgoing>) {
        let cursor = self.engine.now();
        let mut frames: Vec<(ParticipantId, Vec<i16>)> = Vec::new();
        for (&id, s) in &mut self.sessions {
            let Some(frame) = s.jitter.pop_frame(slot) else { continue };
            let decisions = s.vad.process(&frame.pcm).expect("a frame is whole VAD frames");
            if s.clock.is_synced() {
                let offset = s.clock.offset();
                let capture = Session::capture_ms(frame.timestamp, offset.to_client(slot));
                s.record(offset.to_server(capture), &decisions, cursor);
            }
            frames.push((id, frame.pcm));
        }
        let gains = self.engine.gain_matrix();
        let inputs: Vec<(ParticipantId, &[i16])> = frames.iter().map(|(id, f)| (*id, f.as_slice())).collect();
        for (&id, s) in &mut self.sessions {
            let Some(to) = s.audio_addr else { continue };
            let mix = self.mixer.mix_frame(id, &inputs, &gains).expect("frames are full length");
            let packet = s.out.packetize(&mix).expect("mix is one frame");
            out.push(Outgoing::Audio { to, bytes: packet.to_bytes() });
            self.counters.frames_mixed += 1;
        }
    }

    fn analyze_until(&mut self, limit: Tick) {
        let mut col = Vec::with_capacity(self.sessions.len());
        while self.engine.now() < limit {
            col.clear();
            col.extend(
                self.sessions
                    .values_mut()
                    .map(|s| s.activity.pop_front().flatten().unwrap_or(false)),
            );
            match self.engine.step(&col) {
                Ok(Some(ev)) if ev.changed => {
                    for change in self.engine.take_events() {
                        tracing::info!(tick = change.tick, floors = ?change.floors, score = change.score, "configuration change");
                        self.events.push(change);
                    }
                }
                Ok(_) => {}
                Err(e) => {
                    tracing::error!("floor analysis failed: {e}");
                    break;
                }
            }
        }
    }

    pub fn pin(&mut self, owner: &str, floors: &[Vec<String>]) -> Result<(), HubError> {
        let id = self.engine.id_of(owner).ok_or_else(|| HubError::UnknownName(owner.into()))?;
        self.engine.pin(id, floors)?;
        Ok(())
    }

    pub fn unpin(&mut self, owner: &str) -> Result<(), HubError> {
        let id = self.engine.id_of(owner).ok_or_else(|| HubError::UnknownName(owner.into()))?;
        self.engine.unpin(id)?;
        Ok(())
    }

    pub fn status(&self) -> StatusReport {
        let participants = self
            .sessions
            .iter()
            .map(|(&id, s)| {
                let off = s.clock.offset();
                ParticipantStatus {
                    id: id.index() as u8,
                    name: s.name.clone(),
                    active: self.engine.is_active(id),
                    synced: s.clock.is_synced(),
                    offset_ms: off.offset_ms,
                    round_trip_ms: off.round_trip_ms,
                    jitter: s.jitter.stats(),
                    late_decisions: s.late_decisions,
                }
            })
            .collect();
        StatusReport {
            now: self.now,
            analysis_tick: self.engine.now(),
            eval_period_ms: self.cfg.engine.assigner.eval_period_ms,
            evaluations: self.engine.evaluations(),
            participants,
            configuration: self.configuration(),
            events: self.events.len(),
            counters: self.counters,
        }
    }

    pub fn configuration(&self) -> Option<ConfigurationView> {
        let c = self.engine.current()?;
        let floors = c
            .floors()
            .into_iter()
            .map(|f| f.into_iter().map(|id| self.name_of(id)).collect())
            .collect();
        Some(ConfigurationView {
            floors,
            score: c.score,
            pinned: self.engine.pinned().is_some(),
        })
    }

    pub fn gains(&self) -> GainsView {
        let m = self.engine.gain_matrix();
        GainsView {
            participants: m.participants().iter().map(|&id| self.name_of(id)).collect(),
            matrix: m.rows(),
        }
    }

    fn name_of(&self, id: ParticipantId) -> String {
        self.engine.name(id).unwrap_or_default().to_string()
    }
}

fn control(to: SocketAddr, msg: &ControlMessage) -> Outgoing {
    Outgoing::Control {
        to,
        bytes: msg.encode().expect("server messages are small"),
    }
}
