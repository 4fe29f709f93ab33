//! Socket binding and the tokio tasks that drive the hub in real time.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use floorspace_core::engine::PairScorer;
use floorspace_core::learner::{FloorModel, LearnerError};
use floorspace_core::timeline::Tick;
use thiserror::Error;
use tokio::net::{TcpListener, UdpSocket};
use tokio::sync::Notify;
use tokio::task::JoinHandle;

use crate::config::{ConfigError, ServerConfig};
use crate::hub::{Hub, HubConfig, Outgoing};
use crate::queue::DropOldestQueue;

/// Scorer behind the live engine: a trained model, or anything else in tests.
pub type DynScorer = Box<dyn PairScorer + Send>;

/// How often the hub is driven when no audio arrives.
const PUMP_INTERVAL: Duration = Duration::from_millis(5);
const MAX_DATAGRAM: usize = 2048;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("serve needs a model file (set `model` in the config or pass --model)")]
    NoModel,
    #[error("cannot load model {path}: {source}")]
    Model { path: PathBuf, source: LearnerError },
    #[error("cannot bind {what} on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Loads the model named by the config.
pub fn load_model(cfg: &ServerConfig) -> Result<FloorModel, ServerError> {
    let path = cfg.model.as_ref().ok_or(ServerError::NoModel)?;
    FloorModel::load_from_path(path).map_err(|source| ServerError::Model {
        path: path.clone(),
        source,
    })
}

type Inbound = (SocketAddr, Vec<u8>, Tick);

pub struct Shared {
    hub: Mutex<Hub<DynScorer>>,
    start: Instant,
    queue: DropOldestQueue<Inbound>,
}

impl Shared {
    pub fn hub(&self) -> MutexGuard<'_, Hub<DynScorer>> {
        self.hub.lock().expect("hub lock")
    }

    /// Server clock: ms since start.
    pub fn now(&self) -> Tick {
        self.start.elapsed().as_millis() as Tick
    }
}

/// A server whose sockets are bound but whose tasks have not started.
pub struct BoundServer {
    http: TcpListener,
    audio: Arc<UdpSocket>,
    control: Arc<UdpSocket>,
    shared: Arc<Shared>,
}

async fn bind_udp(what: &'static str, addr: SocketAddr) -> Result<UdpSocket, ServerError> {
    UdpSocket::bind(addr).await.map_err(|source| ServerError::Bind { what, addr, source })
}

impl BoundServer {
    /// Validates `cfg` and binds all three sockets, failing before any
    /// task starts if one is unavailable.
    pub async fn bind(cfg: &ServerConfig, scorer: DynScorer) -> Result<Self, ServerError> {
        cfg.validate()?;
        let http_addr = SocketAddr::new(cfg.address, cfg.port);
        let http = TcpListener::bind(http_addr)
            .await
            .map_err(|source| ServerError::Bind { what: "HTTP", addr: http_addr, source })?;
        let audio = bind_udp("audio", SocketAddr::new(cfg.address, cfg.audio_port)).await?;
        let control = bind_udp("control", SocketAddr::new(cfg.address, cfg.control_port)).await?;
        let hub_cfg = HubConfig::from_server(cfg, audio.local_addr()?.port());
        let shared = Arc::new(Shared {
            hub: Mutex::new(Hub::new(hub_cfg, scorer, 0)),
            start: Instant::now(),
            queue: DropOldestQueue::new(cfg.queue_capacity),
        });
        Ok(Self {
            http,
            audio: Arc::new(audio),
            control: Arc::new(control),
            shared,
        })
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http.local_addr().expect("bound")
    }

    pub fn audio_addr(&self) -> SocketAddr {
        self.audio.local_addr().expect("bound")
    }

    pub fn control_addr(&self) -> SocketAddr {
        self.control.local_addr().expect("bound")
    }

    pub fn shared(&self) -> Arc<Shared> {
        self.shared.clone()
    }

    /// Starts every task and returns a handle for shutting them down.
    pub fn start(self) -> RunningServer {
        let addrs = Addresses {
            http: self.http_addr(),
            audio: self.audio_addr(),
            control: self.control_addr(),
        };
        let stop = Arc::new(Notify::new());
        let app = crate::http::router(self.shared.clone());
        let http_stop = stop.clone();
        let http = tokio::spawn(async move {
            let res = axum::serve(self.http, app)
                .with_graceful_shutdown(async move { http_stop.notified().await })
                .await;
            if let Err(e) = res {
                tracing::error!("HTTP server failed: {e}");
            }
        });
        let udp = vec![
            tokio::spawn(audio_loop(self.audio.clone(), self.shared.clone())),
            tokio::spawn(control_loop(self.control.clone(), self.audio.clone(), self.shared.clone())),
            tokio::spawn(pump_loop(self.audio, self.control, self.shared.clone())),
        ];
        tracing::info!(http = %addrs.http, audio = %addrs.audio, control = %addrs.control, "serving");
        RunningServer {
            addrs,
            shared: self.shared,
            stop,
            http,
            udp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Addresses {
    pub http: SocketAddr,
    pub audio: SocketAddr,
    pub control: SocketAddr,
}

pub struct RunningServer {
    addrs: Addresses,
    shared: Arc<Shared>,
    stop: Arc<Notify>,
    http: JoinHandle<()>,
    udp: Vec<JoinHandle<()>>,
}

impl RunningServer {
    pub fn addrs(&self) -> Addresses {
        self.addrs
    }

    pub fn shared(&self) -> Arc<Shared> {
        self.shared.clone()
    }

    pub async fn shutdown(self) {
        self.stop.notify_one();
        for t in &self.udp {
            t.abort();
        }
        let _ = self.http.await;
    }
}

/// Validates the config, loads the model, binds and serves until `signal`
/// resolves.
pub async fn serve(cfg: ServerConfig, signal: impl Future<Output = ()>) -> Result<(), ServerError> {
    cfg.validate()?;
    let model = load_model(&cfg)?;
    let server = BoundServer::bind(&cfg, Box::new(model)).await?.start();
    signal.await;
    tracing::info!("shutting down");
    server.shutdown().await;
    Ok(())
}

async fn audio_loop(sock: Arc<UdpSocket>, shared: Arc<Shared>) {
    let mut buf = vec![0u8; MAX_DATAGRAM];
    loop {
        match sock.recv_from(&mut buf).await {
            Ok((n, from)) => shared.queue.push((from, buf[..n].to_vec(), shared.now())),
            Err(e) => tracing::debug!("audio receive error: {e}"),
        }
    }
}

async fn control_loop(sock: Arc<UdpSocket>, audio: Arc<UdpSocket>, shared: Arc<Shared>) {
    let mut buf = vec![0u8; MAX_DATAGRAM];
    loop {
        match sock.recv_from(&mut buf).await {
            Ok((n, from)) => {
                let out = shared.hub().on_control(from, &buf[..n], shared.now());
                send_all(&audio, &sock, out).await;
            }
            Err(e) => tracing::debug!("control receive error: {e}"),
        }
    }
}

async fn pump_loop(audio: Arc<UdpSocket>, control: Arc<UdpSocket>, shared: Arc<Shared>) {
    let mut interval = tokio::time::interval(PUMP_INTERVAL);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = interval.tick() => {}
            _ = shared.queue.wait() => {}
        }
        let inbound = shared.queue.drain();
        let out = {
            let mut hub = shared.hub();
            for (from, bytes, arrival) in &inbound {
                hub.on_audio(*from, bytes, *arrival);
            }
            hub.set_queue_dropped(shared.queue.dropped());
            hub.tick(shared.now())
        };
        send_all(&audio, &control, out).await;
    }
}

async fn send_all(audio: &UdpSocket, control: &UdpSocket, out: Vec<Outgoing>) {
    for o in out {
        let (sock, to, bytes) = match &o {
            Outgoing::Audio { to, bytes } => (audio, to, bytes),
            Outgoing::Control { to, bytes } => (control, to, bytes),
        };
        if let Err(e) = sock.send_to(bytes, to).await {
            tracing::debug!(%to, "send failed: {e}");
        }
    }
}
