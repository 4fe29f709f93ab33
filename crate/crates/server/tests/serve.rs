//! The real service on loopback sockets.

use std::time::Duration;

use floorspace_client::{ApiClient, AudioSession, ClientClock, ClientError, JoinOptions};
use floorspace_core::corpus::generator::{generate, GeneratorConfig, ScheduleEntry, Timing};
use floorspace_core::learner::{make_training_instances, train, FloorModel, DEFAULT_SAMPLE_PERIOD_MS};
use floorspace_core::timeline::Tick;
use floorspace_server::{BoundServer, RunningServer, ServerConfig, ServerError};

fn trained_model() -> FloorModel {
    let cfg = GeneratorConfig {
        seed: 7,
        duration_ms: 600_000,
        participants: 4,
        names: None,
        schedule: vec![
            ScheduleEntry { at_ms: 0, floors: vec![vec![0, 1], vec![2, 3]] },
            ScheduleEntry { at_ms: 300_000, floors: vec![vec![0, 2], vec![1, 3]] },
        ],
        timing: Timing::default(),
    };
    let c = generate(&cfg).unwrap();
    let inst = make_training_instances(&c.utterances(), c.end(), DEFAULT_SAMPLE_PERIOD_MS).unwrap();
    train(&inst).unwrap()
}

fn ephemeral() -> ServerConfig {
    ServerConfig {
        port: 0,
        audio_port: 0,
        control_port: 0,
        ..ServerConfig::default()
    }
}

async fn start(model: FloorModel) -> RunningServer {
    BoundServer::bind(&ephemeral(), Box::new(model)).await.unwrap().start()
}

fn tone(k: usize, on: bool, phase: &mut f64) -> Vec<i16> {
    let freq = 300.0 + 110.0 * k as f64;
    (0..160)
        .map(|_| {
            *phase += 2.0 * std::f64::consts::PI * freq / 8000.0;
            if on {
                (8000.0 * phase.sin()) as i16
            } else {
                0
            }
        })
        .collect()
}

/// Streams 20 ms frames in real time; participant `k` talks during its
/// half of each `2 * turn_ms` cycle, minus a short pause.
async fn talk(mut s: AudioSession, k: usize, turn_ms: Tick, secs: Tick) -> (AudioSession, usize) {
    let mut interval = tokio::time::interval(Duration::from_millis(20));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
    let mut phase = 0.0;
    let mut mixes = 0;
    for f in 0..secs * 50 {
        interval.tick().await;
        let t = f * 20;
        let pos = t % (2 * turn_ms);
        let mine = (k as Tick * turn_ms..k as Tick * turn_ms + turn_ms - 200).contains(&pos);
        s.send_frame(&tone(k, mine, &mut phase)).await.unwrap();
        while s.recv_mix(Duration::ZERO).await.unwrap().is_some() {
            mixes += 1;
        }
    }
    (s, mixes)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn alternating_clients_merge_into_one_floor() {
    let server = start(trained_model()).await;
    let addrs = server.addrs();
    let api = ApiClient::new(format!("http://{}", addrs.http));
    api.health().await.unwrap();

    let mut a_opts = JoinOptions::new(0xa);
    a_opts.clock = ClientClock::new(40_000);
    let mut b_opts = JoinOptions::new(0xb);
    b_opts.clock = ClientClock::new(-7_000);
    let a = AudioSession::join(addrs.control, "alice", a_opts).await.unwrap();
    let b = AudioSession::join(addrs.control, "bob", b_opts).await.unwrap();
    assert_eq!((a.participant(), b.participant()), (0, 1));

    let (ra, rb) = tokio::join!(talk(a, 0, 1_000, 8), talk(b, 1, 1_000, 8));
    tokio::time::sleep(Duration::from_millis(400)).await;

    let status = api.status().await.unwrap();
    assert_eq!(status.participants.len(), 2);
    for p in &status.participants {
        assert!(p.synced, "{p:?}");
        // loopback delay is tiny, so the measured offset is the skew
        let skew = if p.name == "alice" { 40_000 } else { -7_000 };
        assert!((p.offset_ms - skew).abs() <= 5, "{p:?}");
        assert!(p.jitter.received >= 390, "{p:?}");
    }
    let events = api.events(0).await.unwrap();
    let floors: Vec<_> = events.events.iter().map(|e| e.floors.clone()).collect();
    assert_eq!(
        floors.last(),
        Some(&vec![vec!["alice".to_string(), "bob".to_string()]]),
        "change log: {floors:?}"
    );
    let config = api.configuration().await.unwrap().unwrap();
    assert_eq!(config.floors.len(), 1);
    let gains = api.gains().await.unwrap();
    assert_eq!(gains.matrix, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    // both clients got their mix back
    assert!(ra.1 > 300 && rb.1 > 300, "mix packets {} {}", ra.1, rb.1);
    assert!(api.events(events.next).await.unwrap().events.is_empty());

    // pin through HTTP, refused unpin by the wrong owner, then through UDP
    api.pin("alice", vec![vec!["alice".into()], vec!["bob".into()]]).await.unwrap();
    assert!(api.configuration().await.unwrap().unwrap().pinned);
    match api.unpin("bob").await {
        Err(ClientError::Api { status: 403, .. }) => {}
        other => panic!("expected 403, got {other:?}"),
    }
    match api.pin("carol", vec![]).await {
        Err(ClientError::Api { status: 404, .. }) => {}
        other => panic!("expected 404, got {other:?}"),
    }
    let (mut a, b) = (ra.0, rb.0);
    a.unpin().await.unwrap();
    assert!(matches!(a.unpin().await, Err(ClientError::Rejected(_))));
    b.leave().await.unwrap();
    assert_eq!(api.status().await.unwrap().participants.len(), 1);
    a.leave().await.unwrap();
    server.shutdown().await;
}

#[tokio::test]
async fn occupied_ports_are_reported() {
    let model = FloorModel::uniform(0.5);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let cfg = ServerConfig {
        port: taken.local_addr().unwrap().port(),
        ..ephemeral()
    };
    match BoundServer::bind(&cfg, Box::new(model.clone())).await {
        Err(e @ ServerError::Bind { what: "HTTP", .. }) => assert!(e.to_string().contains("cannot bind HTTP")),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("bound an occupied port"),
    }
    let udp = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
    let cfg = ServerConfig {
        control_port: udp.local_addr().unwrap().port(),
        ..ephemeral()
    };
    assert!(matches!(
        BoundServer::bind(&cfg, Box::new(model)).await,
        Err(ServerError::Bind { what: "control", .. })
    ));
}

#[tokio::test]
async fn serve_requires_a_model() {
    let err = floorspace_server::serve(ephemeral(), async {}).await.unwrap_err();
    assert!(matches!(err, ServerError::NoModel));
    let cfg = ServerConfig {
        model: Some("/nonexistent/model.fsm".into()),
        ..ephemeral()
    };
    let err = floorspace_server::serve(cfg, async {}).await.unwrap_err();
    assert!(matches!(err, ServerError::Model { .. }), "{err}");
}
