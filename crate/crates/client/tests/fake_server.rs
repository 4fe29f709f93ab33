//! Client behavior against scripted fake servers, one socket at a time.

use std::net::SocketAddr;
use std::time::Duration;

use floorspace_client::{ApiClient, AudioSession, ClientClock, ClientError, JoinOptions};
use floorspace_core::transport::control::ControlMessage;
use floorspace_core::transport::packet::AudioPacket;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, UdpSocket};

async fn recv(sock: &UdpSocket) -> (ControlMessage, SocketAddr) {
    let mut buf = vec![0u8; 2048];
    let (n, from) = tokio::time::timeout(Duration::from_secs(10), sock.recv_from(&mut buf))
        .await
        .expect("client went quiet")
        .unwrap();
    (ControlMessage::decode(&buf[..n]).unwrap(), from)
}

async fn send(sock: &UdpSocket, to: SocketAddr, msg: ControlMessage) {
    sock.send_to(&msg.encode().unwrap(), to).await.unwrap();
}

#[tokio::test]
async fn join_retries_answers_probes_and_streams_audio() {
    let control = UdpSocket::bind("127.0.0.1:0").await.unwrap();
    let audio = UdpSocket::bind("127.0.0.1:0").await.unwrap();
    let control_addr = control.local_addr().unwrap();
    let audio_port = audio.local_addr().unwrap().port();

    let server = tokio::spawn(async move {
        // ignore the first join so the client has to retry
        let (first, _) = recv(&control).await;
        assert_eq!(
            first,
            ControlMessage::Join {
                name: "ann".into(),
                audio_ssrc: 77
            }
        );
        let (again, client) = recv(&control).await;
        assert_eq!(again, first);
        // a probe racing ahead of the join reply must still be answered
        send(&control, client, ControlMessage::SyncProbe { probe: 1, t1: 500 }).await;
        send(
            &control,
            client,
            ControlMessage::Joined {
                participant: 3,
                audio_port,
                server_tick: 0,
            },
        )
        .await;
        let ControlMessage::SyncReply {
            participant,
            probe,
            t1,
            t2,
            t3,
        } = recv(&control).await.0
        else {
            panic!("expected a sync reply")
        };
        assert_eq!((participant, probe, t1), (3, 1, 500));
        assert!(t2 >= 1_000_000 && t3 >= t2, "skewed client times {t2} {t3}");

        send(&control, client, ControlMessage::SyncProbe { probe: 2, t1: 900 }).await;
        let (reply, _) = recv(&control).await;
        assert!(matches!(reply, ControlMessage::SyncReply { probe: 2, t1: 900, .. }));

        // pin gets refused, leave gets acknowledged
        let (pin, _) = recv(&control).await;
        assert!(matches!(pin, ControlMessage::Pin { participant: 3, .. }));
        send(&control, client, ControlMessage::Error { message: "not yours".into() }).await;
        let (leave, _) = recv(&control).await;
        assert_eq!(leave, ControlMessage::Leave { participant: 3 });
        send(&control, client, ControlMessage::Ack).await;
    });

    let mut opts = JoinOptions::new(77);
    opts.clock = ClientClock::new(1_000_000);
    let mut session = AudioSession::join(control_addr, "ann", opts).await.unwrap();
    assert_eq!(session.participant(), 3);
    assert_eq!(session.server_audio().port(), audio_port);

    let mut buf = vec![0u8; 2048];
    let mut packets = Vec::new();
    for i in 0..3 {
        session.send_frame(&[i * 100; 160]).await.unwrap();
        let (n, from) = audio.recv_from(&mut buf).await.unwrap();
        packets.push((AudioPacket::parse(&buf[..n]).unwrap(), from));
    }
    let first = &packets[0].0;
    assert_eq!(first.ssrc, 77);
    assert!(first.timestamp >= 8_000_000, "first timestamp follows the media clock");
    for (k, (p, _)) in packets.iter().enumerate() {
        assert_eq!(p.sequence, first.sequence.wrapping_add(k as u16));
        assert_eq!(p.timestamp, first.timestamp.wrapping_add(160 * k as u32));
        assert_eq!(p.payload.len(), 160);
    }

    // a mix sent back to the audio socket arrives intact
    let mix = AudioPacket::from_pcm(9, 1234, 1, &[0; 160]).unwrap();
    audio.send_to(&mix.to_bytes(), packets[0].1).await.unwrap();
    assert_eq!(session.recv_mix(Duration::from_secs(2)).await.unwrap(), Some(mix));
    assert_eq!(session.recv_mix(Duration::from_millis(50)).await.unwrap(), None);

    let err = session.pin(vec![vec!["ann".into()]]).await.unwrap_err();
    assert!(matches!(err, ClientError::Rejected(ref m) if m == "not yours"), "{err}");
    session.leave().await.unwrap();
    server.await.unwrap();
}

#[tokio::test]
async fn refused_join_is_reported() {
    let control = UdpSocket::bind("127.0.0.1:0").await.unwrap();
    let addr = control.local_addr().unwrap();
    let server = tokio::spawn(async move {
        let (_, client) = recv(&control).await;
        send(&control, client, ControlMessage::Error { message: "name taken".into() }).await;
    });
    let err = AudioSession::join(addr, "ann", JoinOptions::new(1)).await.err().unwrap();
    assert!(matches!(err, ClientError::Rejected(ref m) if m == "name taken"), "{err}");
    server.await.unwrap();
}

/// Serves one canned HTTP response per connection and returns the requests.
async fn http_stub(responses: Vec<(u16, &'static str)>) -> (String, tokio::task::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let handle = tokio::spawn(async move {
        let mut requests = Vec::new();
        for (status, body) in responses {
            let (mut conn, _) = listener.accept().await.unwrap();
            let mut req = Vec::new();
            let mut buf = [0u8; 4096];
            // read headers, then the declared body
            loop {
                let n = conn.read(&mut buf).await.unwrap();
                req.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&req).to_string();
                if let Some(end) = text.find("\r\n\r\n") {
                    let len = text
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if req.len() >= end + 4 + len {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            requests.push(String::from_utf8_lossy(&req).to_string());
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            conn.write_all(reply.as_bytes()).await.unwrap();
            conn.shutdown().await.unwrap();
        }
        requests
    });
    (base, handle)
}

#[tokio::test]
async fn api_client_maps_requests_and_errors() {
    let (base, stub) = http_stub(vec![
        (200, r#"{"from":2,"events":[{"tick":120,"floors":[["a","b"]],"score":0.5}],"next":3}"#),
        (403, r#"{"error":"pin belongs to bo"}"#),
        (500, "plain failure"),
        (200, "null"),
    ])
    .await;
    let api = ApiClient::new(base);

    let page = api.events(2).await.unwrap();
    assert_eq!((page.from, page.next, page.events.len()), (2, 3, 1));
    assert_eq!(page.events[0].floors, vec![vec!["a".to_string(), "b".to_string()]]);

    let err = api.unpin("ann").await.unwrap_err();
    assert!(
        matches!(err, ClientError::Api { status: 403, ref message } if message == "pin belongs to bo"),
        "{err}"
    );
    let err = api.pin("ann", vec![vec!["ann".into(), "bo".into()]]).await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 500, ref message } if message == "plain failure"), "{err}");
    assert!(api.configuration().await.unwrap().is_none());

    let requests = stub.await.unwrap();
    assert!(requests[0].starts_with("GET /api/events?since=2 "), "{}", requests[0]);
    assert!(requests[1].starts_with("POST /api/unpin "));
    assert!(requests[1].ends_with(r#"{"owner":"ann"}"#), "{}", requests[1]);
    assert!(requests[2].ends_with(r#"{"owner":"ann","floors":[["ann","bo"]]}"#), "{}", requests[2]);
}

#[tokio::test]
async fn unreachable_server_is_an_http_error() {
    let port = TcpListener::bind("127.0.0.1:0").await.unwrap().local_addr().unwrap().port();
    let err = ApiClient::new(format!("http://127.0.0.1:{port}")).health().await.unwrap_err();
    assert!(matches!(err, ClientError::Http(_)), "{err}");
}
