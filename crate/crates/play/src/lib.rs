//! Human play server: one environment episode per WebSocket session.
//!
//! Routes: `GET /play` (WebSocket, JSON text messages), `GET /healthz`, and
//! static files from the configured directory at `/`.

pub mod protocol;
pub mod service;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use mzi_core::env::{Env, EnvConfig};

pub use protocol::{decode_frames, encode_frames, ClientMessage, ServerMessage};
pub use service::{PlayService, SessionId, SharedService};

/// File (inside `records_dir`) that collects played episodes.
pub const RECORDS_FILE: &str = "sessions.jsonl";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub port: u16,
    pub session_cap: usize,
    pub idle_timeout: Duration,
    pub static_dir: Option<PathBuf>,
    pub records_dir: Option<PathBuf>,
    pub env: EnvConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            session_cap: 64,
            idle_timeout: Duration::from_secs(600),
            static_dir: None,
            records_dir: None,
            env: EnvConfig::default(),
        }
    }
}

pub fn build_service(config: &ServerConfig) -> std::io::Result<PlayService> {
    let env = Env::new(config.env.clone()).map_err(std::io::Error::other)?;
    let svc = PlayService::new(env, config.session_cap, config.idle_timeout);
    match &config.records_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            svc.with_records(&dir.join(RECORDS_FILE))
        }
        None => Ok(svc),
    }
}

pub fn router(service: SharedService, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/play", get(play))
        .with_state(service);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// A bound, not yet running server. Bind to port 0 to get a free port.
pub struct Bound {
    listener: TcpListener,
    app: Router,
    service: SharedService,
}

impl Bound {
    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn service(&self) -> SharedService {
        self.service.clone()
    }

    pub async fn run(self) -> std::io::Result<()> {
        let reaper = spawn_reaper(self.service.clone());
        let res = axum::serve(self.listener, self.app).await;
        reaper.abort();
        res
    }
}

pub async fn bind(config: ServerConfig) -> std::io::Result<Bound> {
    let service = Arc::new(build_service(&config)?);
    let listener = TcpListener::bind(("0.0.0.0", config.port)).await?;
    let app = router(service.clone(), config.static_dir.clone());
    Ok(Bound { listener, app, service })
}

pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    let bound = bind(config).await?;
    eprintln!("listening on http://{}", bound.local_addr()?);
    bound.run().await
}

fn spawn_reaper(service: SharedService) -> tokio::task::JoinHandle<()> {
    let period = (service.idle_timeout() / 4).clamp(Duration::from_millis(50), Duration::from_secs(30));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            service.reap_idle();
        }
    })
}

async fn play(ws: WebSocketUpgrade, State(service): State<SharedService>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, service))
}

async fn session(socket: WebSocket, service: SharedService) {
    let (mut tx, mut rx) = socket.split();
    let mut slot: Option<SessionId> = None;
    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            Message::Binary(_) => {
                let err = ServerMessage::error("bad_message", "expected a JSON text message");
                if send(&mut tx, &err).await.is_err() {
                    break;
                }
                continue;
            }
            _ => continue,
        };
        let replies = match serde_json::from_str::<ClientMessage>(text.as_str()) {
            Ok(ClientMessage::Close) => break,
            Ok(m) => {
                let svc = service.clone();
                let mut s = slot;
                // Rendering is CPU work; keep it off the async workers.
                let (replies, s) = tokio::task::spawn_blocking(move || {
                    let r = svc.handle(&mut s, m);
                    (r, s)
                })
                .await
                .expect("session handler panicked");
                slot = s;
                replies
            }
            Err(e) => vec![ServerMessage::error("bad_message", e.to_string())],
        };
        for r in &replies {
            if send(&mut tx, r).await.is_err() {
                service.close(&mut slot);
                return;
            }
        }
    }
    service.close(&mut slot);
    let _ = tx.close().await;
}

async fn send(
    tx: &mut futures::stream::SplitSink<WebSocket, Message>,
    msg: &ServerMessage,
) -> Result<(), axum::Error> {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    tx.send(Message::Text(text.into())).await
}
