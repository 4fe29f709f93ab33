//! Tick-level loopback of the audio path for latency and fidelity checks.
//!
//! A source captures PCM in real time and sends a packet as soon as each
//! 20 ms frame is complete. Packets cross a fixed-delay lossless network
//! into a jitter buffer that the mix clock drains every frame period. The
//! harness reports how long a sample spends in the pipeline and what comes
//! out the far end. Device and radio latency are outside its scope.

use serde::Serialize;

use super::jitter::{JitterBuffer, JitterStats, DEFAULT_DEPTH_MS};
use super::packet::{AudioPacket, PacketError, Packetizer, FRAME_MS, SAMPLES_PER_FRAME};
use crate::timeline::Tick;

#[derive(Debug, Clone, Copy)]
pub struct LoopbackConfig {
    pub depth_ms: u32,
    pub network_delay_ms: Tick,
    /// Offset of the mix clock's frame boundaries from the capture clock's.
    pub mix_phase_ms: Tick,
}

impl Default for LoopbackConfig {
    fn default() -> Self {
        Self {
            depth_ms: DEFAULT_DEPTH_MS,
            network_delay_ms: 0,
            mix_phase_ms: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopbackReport {
    /// Capture of a sample to its playout, in ms.
    pub latency_ms: Tick,
    /// Played samples, aligned with the input.
    pub output: Vec<i16>,
    pub stats: JitterStats,
}

pub fn run_loopback(pcm: &[i16], cfg: LoopbackConfig) -> Result<LoopbackReport, PacketError> {
    let frame = FRAME_MS as Tick;
    let mut packetizer = Packetizer::new(0x5EED, 0, 0);
    let mut in_flight: Vec<(Tick, AudioPacket)> = Vec::new();
    for (k, chunk) in pcm.chunks(SAMPLES_PER_FRAME).enumerate() {
        let mut f = chunk.to_vec();
        f.resize(SAMPLES_PER_FRAME, 0);
        let sent = (k as Tick + 1) * frame;
        in_flight.push((sent + cfg.network_delay_ms, packetizer.packetize(&f)?));
    }
    let frames = in_flight.len();
    let mut buf = JitterBuffer::new(cfg.depth_ms);
    let mut output = Vec::with_capacity(frames * SAMPLES_PER_FRAME);
    let mut first_play = None;
    let mut next = 0;
    let mut tick = cfg.mix_phase_ms.rem_euclid(frame);
    while output.len() < frames * SAMPLES_PER_FRAME {
        while next < in_flight.len() && in_flight[next].0 <= tick {
            buf.push(&in_flight[next].1, in_flight[next].0);
            next += 1;
        }
        if let Some(f) = buf.pop(tick) {
            first_play.get_or_insert(tick);
            output.extend_from_slice(&f);
        }
        tick += frame;
    }
    output.truncate(pcm.len());
    Ok(LoopbackReport {
        // the first sample of frame 0 is captured at tick 0
        latency_ms: first_play.unwrap_or(0),
        output,
        stats: buf.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::ulaw::{decode_ulaw, encode_ulaw};

    fn ramp(n: usize) -> Vec<i16> {
        (0..n).map(|i| ((i * 37) % 20_000) as i16 - 10_000).collect()
    }

    #[test]
    fn output_equals_codec_round_trip() {
        let pcm = ramp(8000);
        let r = run_loopback(&pcm, LoopbackConfig::default()).unwrap();
        assert_eq!(r.output, decode_ulaw(&encode_ulaw(&pcm)));
        assert_eq!(r.stats.lost, 0);
    }

    #[test]
    fn latency_is_capture_plus_depth_plus_alignment() {
        for phase in 0..20 {
            let cfg = LoopbackConfig { mix_phase_ms: phase, ..Default::default() };
            let r = run_loopback(&ramp(1600), cfg).unwrap();
            assert!((80..100).contains(&r.latency_ms), "phase {phase}: {}", r.latency_ms);
        }
    }

    #[test]
    fn network_delay_adds_directly() {
        let cfg = LoopbackConfig { network_delay_ms: 40, ..Default::default() };
        assert_eq!(run_loopback(&ramp(800), cfg).unwrap().latency_ms, 120);
    }
}
