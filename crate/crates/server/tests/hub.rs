//! Scripted runs of the hub with explicit timing.

use std::net::SocketAddr;

use floorspace_core::corpus::generator::render_tones;
use floorspace_core::corpus::{Corpus, TurnRecord};
use floorspace_core::engine::{Engine, FnScorer, PairScorer};
use floorspace_core::features::PairFeatures;
use floorspace_core::timeline::{ParticipantId, Tick};
use floorspace_core::transport::control::ControlMessage;
use floorspace_core::transport::packet::AudioPacket;
use floorspace_core::transport::jitter::IDLE_AFTER_FRAMES;
use floorspace_core::transport::Packetizer;
use floorspace_core::vad::{VadConfig, VoiceActivityDetector};
use floorspace_server::{Hub, HubConfig, Outgoing};

/// Same floor when both directions show a turn-sized gap and little overlap.
struct TurnTaking;

impl PairScorer for TurnTaking {
    fn pair_posterior(&self, _: ParticipantId, _: ParticipantId, ab: &PairFeatures, ba: &PairFeatures, _: Tick) -> f64 {
        let alternating = |f: &PairFeatures| f.trp_gap_ms.is_some_and(|g| (-300..=1500).contains(&g)) && f.overlap_w2_ms < 2000;
        if alternating(ab) || alternating(ba) {
            0.9
        } else {
            0.1
        }
    }
}

fn addr(port: u16) -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], port))
}

fn decode(out: &[Outgoing]) -> Vec<(SocketAddr, ControlMessage)> {
    out.iter()
        .filter_map(|o| match o {
            Outgoing::Control { to, bytes } => Some((*to, ControlMessage::decode(bytes).unwrap())),
            Outgoing::Audio { .. } => None,
        })
        .collect()
}

fn alternating_corpus(secs: Tick) -> Corpus {
    let mut turns = Vec::new();
    let mut t = 500;
    let mut who = 0;
    while t + 1500 < secs * 1000 {
        turns.push(TurnRecord {
            participant: ["a", "b"][who].into(),
            start_ms: t,
            end_ms: t + 1200,
            floor_label: None,
        });
        t += 1500;
        who = 1 - who;
    }
    Corpus::new(vec!["a".into(), "b".into()], Some(secs * 1000), turns).unwrap()
}

struct Client {
    control: SocketAddr,
    audio: SocketAddr,
    ssrc: u32,
    skew: Tick,
    delay: Tick,
}

fn join<S: PairScorer>(hub: &mut Hub<S>, c: &Client, name: &str, now: Tick) -> u8 {
    let msgs = decode(&hub.on_control(c.control, &ControlMessage::Join { name: name.into(), audio_ssrc: c.ssrc }.encode().unwrap(), now));
    let participant = match &msgs[0].1 {
        ControlMessage::Joined { participant, .. } => *participant,
        other => panic!("expected joined, got {other:?}"),
    };
    let ControlMessage::SyncProbe { probe, t1 } = msgs[1].1 else { panic!("expected a probe") };
    // zero network delay: the client reads the server clock plus its skew
    let reply = ControlMessage::SyncReply { participant, probe, t1, t2: t1 + c.skew, t3: t1 + c.skew };
    assert!(hub.on_control(c.control, &reply.encode().unwrap(), now).is_empty());
    participant
}

#[test]
fn scripted_run_matches_offline_engine() {
    let corpus = alternating_corpus(20);
    let pcm = render_tones(&corpus, 8000.0);
    let clients = [
        Client { control: addr(5000), audio: addr(5001), ssrc: 11, skew: 5_000, delay: 5 },
        Client { control: addr(6000), audio: addr(6001), ssrc: 22, skew: -3_000, delay: 17 },
    ];
    let cfg = HubConfig::default();
    let mut hub = Hub::new(cfg, TurnTaking, 0);
    for (c, name) in clients.iter().zip(["a", "b"]) {
        join(&mut hub, c, name, 0);
    }
    let status = hub.status();
    assert_eq!(status.participants.iter().map(|p| p.offset_ms).collect::<Vec<_>>(), vec![5_000, -3_000]);

    // every frame is captured at server time 20f and arrives after its
    // client's network delay
    let frames = pcm[0].len() / 160;
    let mut packets: Vec<(Tick, usize, Vec<u8>)> = Vec::new();
    for (k, c) in clients.iter().enumerate() {
        let mut p = Packetizer::new(c.ssrc, 65_000, ((c.skew) * 8) as u32);
        for f in 0..frames {
            let bytes = p.packetize(&pcm[k][f * 160..(f + 1) * 160]).unwrap().to_bytes();
            packets.push((20 * f as Tick + 20 + c.delay, k, bytes));
        }
    }
    packets.sort_by_key(|(at, k, _)| (*at, *k));
    let end = 20 * frames as Tick;
    let mut next = 0;
    let mut mixes: [Vec<i16>; 2] = [Vec::new(), Vec::new()];
    for now in 0..=end + 500 {
        while next < packets.len() && packets[next].0 <= now {
            let (_, k, bytes) = &packets[next];
            hub.on_audio(clients[*k].audio, bytes, now);
            next += 1;
        }
        for o in hub.tick(now) {
            if let Outgoing::Audio { to, bytes } = o {
                let k = clients.iter().position(|c| c.audio == to).unwrap();
                mixes[k].extend(AudioPacket::parse(&bytes).unwrap().pcm());
            }
        }
    }

    // offline: the same VAD over the same audio, placed at capture time
    let mut engine = Engine::new(cfg.engine, TurnTaking, 0);
    engine.join(ParticipantId::new(0).unwrap(), "a").unwrap();
    engine.join(ParticipantId::new(1).unwrap(), "b").unwrap();
    let streams: Vec<Vec<bool>> = pcm
        .iter()
        .map(|x| VoiceActivityDetector::new(VadConfig::default()).unwrap().process(x).unwrap())
        .collect();
    let analysed = hub.engine().now();
    assert!(analysed >= end, "analysis reached {analysed}");
    let mut expected = Vec::new();
    for t in 0..analysed {
        let col: Vec<bool> = streams.iter().map(|s| s.get(t as usize).copied().unwrap_or(false)).collect();
        engine.step(&col).unwrap();
        expected.append(&mut engine.take_events());
    }
    assert_eq!(hub.events(), expected.as_slice());
    let last = hub.events().last().expect("a configuration change");
    assert_eq!(last.floors, vec![vec!["a".to_string(), "b".to_string()]]);

    let stats = hub.status();
    for p in &stats.participants {
        // only the slots after the senders stopped, before playout idles
        assert_eq!(p.jitter.lost, u64::from(IDLE_AFTER_FRAMES), "{p:?}");
        assert_eq!(p.late_decisions, 0, "{p:?}");
    }
    // nobody hears themselves: a's mix is silent while only a talks
    let first = &corpus.turns()[0];
    assert_eq!(first.participant, "a");
    // a's playout starts at its first arrival plus jitter depth
    let offset = ((20 + clients[0].delay + 60 + 19) / 20 * 20) as usize;
    let quiet = &mixes[0][(first.start_ms as usize) * 8 - offset * 8..(first.end_ms as usize) * 8 - offset * 8];
    assert!(quiet.iter().all(|&x| x == 0));
    assert!(mixes[1].iter().any(|&x| x != 0));
}

#[test]
fn join_rules() {
    let mut cfg = HubConfig::default();
    cfg.max_participants = 2;
    let mut hub = Hub::new(cfg, FnScorer(|_: ParticipantId, _: ParticipantId, _: Tick| 0.5), 0);
    let send = |hub: &mut Hub<_>, from: u16, msg: ControlMessage| decode(&hub.on_control(addr(from), &msg.encode().unwrap(), 0));
    let error = |msgs: Vec<(SocketAddr, ControlMessage)>| match &msgs[..] {
        [(_, ControlMessage::Error { message })] => message.clone(),
        other => panic!("expected one error, got {other:?}"),
    };
    let j = |name: &str, ssrc| ControlMessage::Join { name: name.into(), audio_ssrc: ssrc };

    assert!(matches!(send(&mut hub, 1, j("a", 1))[0].1, ControlMessage::Joined { participant: 0, .. }));
    // a retried join is answered again, not rejected
    assert!(matches!(send(&mut hub, 1, j("a", 1))[0].1, ControlMessage::Joined { participant: 0, .. }));
    assert!(error(send(&mut hub, 2, j("a", 2))).contains("taken"));
    assert!(error(send(&mut hub, 2, j("b", 1))).contains("SSRC"));
    assert!(error(send(&mut hub, 2, j("b c", 2))).contains("whitespace"));
    assert!(matches!(send(&mut hub, 2, j("b", 2))[0].1, ControlMessage::Joined { participant: 1, .. }));
    assert!(error(send(&mut hub, 3, j("c", 3))).contains("full"));
    // only the owner's address may act for a participant
    assert!(error(send(&mut hub, 2, ControlMessage::Leave { participant: 0 })).contains("another"));
    assert!(error(send(&mut hub, 2, ControlMessage::Ack)).contains("unexpected"));
    assert!(error(decode(&hub.on_control(addr(2), b"\x00\x05{}", 0))).contains("length"));

    let pin = ControlMessage::Pin { participant: 1, floors: vec![vec!["a".into(), "b".into()]] };
    assert_eq!(send(&mut hub, 2, pin)[0].1, ControlMessage::Ack);
    assert!(hub.engine().pinned().is_some());
    assert!(error(send(&mut hub, 1, ControlMessage::Unpin { participant: 0 })).contains("pin"));
    assert_eq!(send(&mut hub, 2, ControlMessage::Unpin { participant: 1 })[0].1, ControlMessage::Ack);
    assert_eq!(send(&mut hub, 1, ControlMessage::Leave { participant: 0 })[0].1, ControlMessage::Ack);
    assert!(matches!(send(&mut hub, 3, j("c", 3))[0].1, ControlMessage::Joined { participant: 0, .. }));
    assert_eq!(hub.status().counters.control_errors, 8);
}

#[test]
fn probes_repeat_and_unknown_audio_is_counted() {
    let mut hub = Hub::new(HubConfig::default(), FnScorer(|_: ParticipantId, _: ParticipantId, _: Tick| 0.5), 0);
    let c = Client { control: addr(1), audio: addr(2), ssrc: 9, skew: 250, delay: 0 };
    join(&mut hub, &c, "a", 0);
    let probes = |out: Vec<Outgoing>| decode(&out).into_iter().filter(|(_, m)| matches!(m, ControlMessage::SyncProbe { .. })).count();
    assert_eq!(probes(hub.tick(9_999)), 0);
    assert_eq!(probes(hub.tick(10_000)), 1);
    // unanswered: no new probe until it times out
    assert_eq!(probes(hub.tick(11_000)), 0);
    assert_eq!(probes(hub.tick(12_000)), 1);
    assert_eq!(hub.status().participants[0].offset_ms, 250);

    let mut p = Packetizer::new(1234, 0, 0);
    hub.on_audio(addr(3), &p.packetize(&[0; 160]).unwrap().to_bytes(), 12_000);
    hub.on_audio(addr(3), &[1, 2, 3], 12_000);
    let counters = hub.status().counters;
    assert_eq!((counters.unknown_source, counters.bad_packets), (1, 1));
}
