//! UDP side of a participant: join, stream audio, receive the personal mix.

use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;
use std::time::{Duration, Instant};

use floorspace_core::timeline::Tick;
use floorspace_core::transport::control::ControlMessage;
use floorspace_core::transport::packet::AudioPacket;
use floorspace_core::transport::Packetizer;
use floorspace_core::vad::SAMPLES_PER_MS;
use tokio::net::UdpSocket;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use crate::ClientError;

const JOIN_ATTEMPTS: u32 = 3;
const REPLY_TIMEOUT: Duration = Duration::from_secs(2);

/// The client's media clock in ms. `skew_ms` shifts it relative to the
/// host's monotonic clock, which lets tests run clients whose clocks
/// disagree with the server's.
#[derive(Debug, Clone, Copy)]
pub struct ClientClock {
    origin: Instant,
    skew_ms: Tick,
}

impl ClientClock {
    pub fn new(skew_ms: Tick) -> Self {
        Self {
            origin: Instant::now(),
            skew_ms,
        }
    }

    pub fn now(&self) -> Tick {
        self.origin.elapsed().as_millis() as Tick + self.skew_ms
    }
}

impl Default for ClientClock {
    fn default() -> Self {
        Self::new(0)
    }
}

#[derive(Debug, Clone)]
pub struct JoinOptions {
    pub ssrc: u32,
    pub clock: ClientClock,
    /// Local address to bind both sockets to.
    pub bind: IpAddr,
}

impl JoinOptions {
    pub fn new(ssrc: u32) -> Self {
        Self {
            ssrc,
            clock: ClientClock::default(),
            bind: IpAddr::from([127, 0, 0, 1]),
        }
    }
}

/// A joined participant. Dropping it stops answering clock probes but does
/// not leave; call [`leave`](Self::leave) for that.
pub struct AudioSession {
    participant: u8,
    name: String,
    control: Arc<UdpSocket>,
    audio: UdpSocket,
    server_control: SocketAddr,
    server_audio: SocketAddr,
    packetizer: Option<Packetizer>,
    ssrc: u32,
    clock: ClientClock,
    replies: mpsc::UnboundedReceiver<ControlMessage>,
    responder: JoinHandle<()>,
}

async fn send(sock: &UdpSocket, to: SocketAddr, msg: &ControlMessage) -> Result<(), ClientError> {
    sock.send_to(&msg.encode()?, to).await?;
    Ok(())
}

async fn recv(sock: &UdpSocket) -> Result<(ControlMessage, SocketAddr), ClientError> {
    let mut buf = vec![0u8; 2048];
    let (n, from) = sock.recv_from(&mut buf).await?;
    Ok((ControlMessage::decode(&buf[..n])?, from))
}

fn sync_reply(participant: u8, probe: u32, t1: Tick, t2: Tick, clock: &ClientClock) -> ControlMessage {
    ControlMessage::SyncReply {
        participant,
        probe,
        t1,
        t2,
        t3: clock.now(),
    }
}

impl AudioSession {
    /// Joins the server whose control channel listens on `server_control`.
    pub async fn join(server_control: SocketAddr, name: &str, opts: JoinOptions) -> Result<Self, ClientError> {
        let control = UdpSocket::bind((opts.bind, 0)).await?;
        let audio = UdpSocket::bind((opts.bind, 0)).await?;
        let join = ControlMessage::Join {
            name: name.into(),
            audio_ssrc: opts.ssrc,
        };
        let mut early_probes = Vec::new();
        let mut joined = None;
        'attempts: for _ in 0..JOIN_ATTEMPTS {
            send(&control, server_control, &join).await?;
            let deadline = tokio::time::Instant::now() + REPLY_TIMEOUT;
            loop {
                let Ok(res) = tokio::time::timeout_at(deadline, recv(&control)).await else {
                    continue 'attempts;
                };
                match res?.0 {
                    ControlMessage::Joined { participant, audio_port, .. } => {
                        joined = Some((participant, audio_port));
                        break 'attempts;
                    }
                    ControlMessage::Error { message } => return Err(ClientError::Rejected(message)),
                    ControlMessage::SyncProbe { probe, t1 } => early_probes.push((probe, t1, opts.clock.now())),
                    _ => {}
                }
            }
        }
        let (participant, audio_port) = joined.ok_or(ClientError::Timeout("join"))?;
        for (probe, t1, t2) in early_probes {
            send(&control, server_control, &sync_reply(participant, probe, t1, t2, &opts.clock)).await?;
        }
        let control = Arc::new(control);
        let (tx, replies) = mpsc::unbounded_channel();
        let responder = tokio::spawn(respond(control.clone(), server_control, participant, opts.clock, tx));
        Ok(Self {
            participant,
            name: name.into(),
            control,
            audio,
            server_control,
            server_audio: SocketAddr::new(server_control.ip(), audio_port),
            packetizer: None,
            ssrc: opts.ssrc,
            clock: opts.clock,
            replies,
            responder,
        })
    }

    pub fn participant(&self) -> u8 {
        self.participant
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn clock(&self) -> &ClientClock {
        &self.clock
    }

    pub fn server_audio(&self) -> SocketAddr {
        self.server_audio
    }

    /// Sends one 20 ms frame. The first frame's RTP timestamp is the media
    /// clock at the time of sending; later frames advance it by one frame.
    pub async fn send_frame(&mut self, pcm: &[i16]) -> Result<(), ClientError> {
        let clock = self.clock;
        let ssrc = self.ssrc;
        let p = self.packetizer.get_or_insert_with(|| {
            let ts = (clock.now() * SAMPLES_PER_MS as Tick) as u32;
            Packetizer::new(ssrc, 0, ts)
        });
        let packet = p.packetize(pcm)?;
        self.audio.send_to(&packet.to_bytes(), self.server_audio).await?;
        Ok(())
    }

    /// Next packet of this participant's mix, or `None` after `timeout`.
    pub async fn recv_mix(&self, timeout: Duration) -> Result<Option<AudioPacket>, ClientError> {
        let mut buf = vec![0u8; 2048];
        match tokio::time::timeout(timeout, self.audio.recv_from(&mut buf)).await {
            Err(_) => Ok(None),
            Ok(res) => {
                let (n, _) = res?;
                Ok(Some(AudioPacket::parse(&buf[..n])?))
            }
        }
    }

    async fn request(&mut self, msg: ControlMessage) -> Result<(), ClientError> {
        send(&self.control, self.server_control, &msg).await?;
        match tokio::time::timeout(REPLY_TIMEOUT, self.replies.recv()).await {
            Ok(Some(ControlMessage::Ack)) => Ok(()),
            Ok(Some(ControlMessage::Error { message })) => Err(ClientError::Rejected(message)),
            Ok(Some(other)) => Err(ClientError::Protocol(format!("unexpected reply {other:?}"))),
            Ok(None) | Err(_) => Err(ClientError::Timeout("control reply")),
        }
    }

    pub async fn pin(&mut self, floors: Vec<Vec<String>>) -> Result<(), ClientError> {
        let participant = self.participant;
        self.request(ControlMessage::Pin { participant, floors }).await
    }

    pub async fn unpin(&mut self) -> Result<(), ClientError> {
        let participant = self.participant;
        self.request(ControlMessage::Unpin { participant }).await
    }

    pub async fn leave(mut self) -> Result<(), ClientError> {
        let participant = self.participant;
        let res = self.request(ControlMessage::Leave { participant }).await;
        self.responder.abort();
        res
    }
}

impl Drop for AudioSession {
    fn drop(&mut self) {
        self.responder.abort();
    }
}

/// Answers clock probes and forwards every other message.
async fn respond(
    sock: Arc<UdpSocket>,
    server: SocketAddr,
    participant: u8,
    clock: ClientClock,
    tx: mpsc::UnboundedSender<ControlMessage>,
) {
    loop {
        let msg = match recv(&sock).await {
            Ok((msg, from)) if from == server => msg,
            Ok(_) | Err(_) => continue,
        };
        match msg {
            ControlMessage::SyncProbe { probe, t1 } => {
                let t2 = clock.now();
                let _ = send(&sock, server, &sync_reply(participant, probe, t1, t2, &clock)).await;
            }
            other => {
                if tx.send(other).is_err() {
                    return;
                }
            }
        }
    }
}
