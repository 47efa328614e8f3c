//! Platform service for smart-insole sessions: token-authenticated REST API, a binary
//! ingest listener, file-backed persistence and the staged analysis scheduler.

pub mod api;
pub mod auth;
pub mod catalog;
pub mod clock;
pub mod error;
pub mod service;
pub mod store;
pub mod tcp;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use clock::{Clock, ManualClock, SystemClock};
pub use error::ApiError;
pub use service::{Service, ServiceConfig};

#[derive(Clone)]
pub struct ServerConfig {
    pub http_addr: SocketAddr,
    /// The binary ingest listener is off when `None`.
    pub tcp_addr: Option<SocketAddr>,
    pub service: ServiceConfig,
}

/// A running service with its bound listeners.
pub struct Server {
    pub http_addr: SocketAddr,
    pub tcp_addr: Option<SocketAddr>,
    pub service: Arc<Service>,
    stop_http: Option<oneshot::Sender<()>>,
    http: JoinHandle<()>,
    tcp: Option<JoinHandle<()>>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("cannot bind: {0}")]
    Bind(#[from] std::io::Error),
    #[error("cannot open store: {0}")]
    Store(#[from] store::StoreError),
}

/// Opens the store and binds both listeners. Port 0 picks a free port.
pub async fn start(cfg: ServerConfig, clock: Arc<dyn Clock>) -> Result<Server, StartError> {
    let svc_cfg = cfg.service.clone();
    let service = tokio::task::spawn_blocking(move || Service::open(svc_cfg, clock))
        .await
        .expect("store opening does not panic")?;
    let http_listener = TcpListener::bind(cfg.http_addr).await?;
    let http_addr = http_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = api::router(service.clone());
    let http = tokio::spawn(async move {
        let shutdown = async {
            let _ = rx.await;
        };
        if let Err(e) = axum::serve(http_listener, app).with_graceful_shutdown(shutdown).await {
            tracing::error!("http server failed: {e}");
        }
    });
    let (tcp, tcp_addr) = match cfg.tcp_addr {
        Some(addr) => {
            let l = TcpListener::bind(addr).await?;
            let a = l.local_addr()?;
            (Some(tokio::spawn(tcp::serve(l, service.clone()))), Some(a))
        }
        None => (None, None),
    };
    Ok(Server { http_addr, tcp_addr, service, stop_http: Some(tx), http, tcp })
}

impl Server {
    pub fn base_url(&self) -> String {
        format!("http://{}{}", self.http_addr, api::BASE)
    }

    /// Stops accepting, gives open requests a moment to finish, then stops the workers.
    pub async fn stop(mut self) {
        if let Some(tx) = self.stop_http.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.tcp.take() {
            t.abort();
        }
        if tokio::time::timeout(Duration::from_secs(2), &mut self.http).await.is_err() {
            self.http.abort();
        }
        let svc = self.service.clone();
        let _ = tokio::task::spawn_blocking(move || svc.shutdown()).await;
    }
}

/// A server on its own runtime, for synchronous programs and tests.
pub struct BackgroundServer {
    rt: Option<tokio::runtime::Runtime>,
    server: Option<Server>,
}

impl BackgroundServer {
    pub fn start(cfg: ServerConfig, clock: Arc<dyn Clock>) -> Result<Self, StartError> {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
        let server = rt.block_on(start(cfg, clock))?;
        Ok(BackgroundServer { rt: Some(rt), server: Some(server) })
    }

    pub fn server(&self) -> &Server {
        self.server.as_ref().expect("running until stopped")
    }

    pub fn base_url(&self) -> String {
        self.server().base_url()
    }

    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.server().tcp_addr
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.server().service
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let (Some(rt), Some(server)) = (self.rt.take(), self.server.take()) {
            rt.block_on(server.stop());
            rt.shutdown_timeout(Duration::from_secs(1));
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}
