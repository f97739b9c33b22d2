//! The server-hosted runtime: a repository of packages behind an HTTP API.

mod error;
mod events;
mod repo;
mod routes;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use error::ApiError;
pub use events::{DeliveryStats, Event, EventBus, RetryPolicy, Subscription, SubscriptionFilter};
pub use repo::{
    decode_id, encode_id, now_ts, Hosted, LoadError, PackageDiagnostic, Repository, ServerConfig, ServiceStatus, ShellInfo,
};
pub use routes::router;

use crate::classify::RuntimeStrategy;
use crate::packager::{load_bundle, PackagerError};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("PortInUse: port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("cannot read package directory {path}: {source}")]
    Dir { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Bundle(#[from] PackagerError),
    #[error("bundle package rejected: {0}")]
    Package(ApiError),
    #[error("build cache: {0}")]
    Cache(std::io::Error),
}

/// A running server. Dropping the handle shuts the server down.
pub struct ServerHandle {
    addr: SocketAddr,
    repo: Arc<Repository>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn repo(&self) -> &Arc<Repository> {
        &self.repo
    }

    pub async fn stop(mut self) {
        self.repo.shutdown().await;
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Run until the server exits on its own.
    pub async fn wait(mut self) -> std::io::Result<()> {
        match self.task.take() {
            Some(task) => task.await.unwrap_or_else(|e| Err(std::io::Error::other(e))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Bind, load the package directory and start serving.
pub async fn serve(cfg: ServerConfig) -> Result<ServerHandle, ServeError> {
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let listener = match tokio::net::TcpListener::bind(&addr).await {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => return Err(ServeError::PortInUse(cfg.port)),
        Err(source) => return Err(ServeError::Bind { addr, source }),
    };
    let local = listener.local_addr().map_err(|source| ServeError::Bind { addr, source })?;
    let dir = cfg.dir.clone();
    let repo = Repository::new(cfg).map_err(ServeError::Cache)?;
    if let Some(dir) = dir {
        repo.load_dir(&dir).await.map_err(|source| ServeError::Dir { path: dir.clone(), source })?;
    }
    Ok(start(listener, local, repo))
}

fn start(listener: tokio::net::TcpListener, addr: SocketAddr, repo: Arc<Repository>) -> ServerHandle {
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(repo.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, "serving");
    ServerHandle { addr, repo, shutdown: Some(tx), task: Some(task) }
}

/// Serve a standalone bundle directory. `port` overrides the bundle's port.
pub async fn serve_bundle(dir: &Path, port: Option<u16>) -> Result<ServerHandle, ServeError> {
    let (pkg, launch) = load_bundle(dir)?;
    let cfg = ServerConfig {
        port: port.unwrap_or(launch.port),
        strategy: RuntimeStrategy::Standalone,
        features: launch.features.clone(),
        build_cache: launch.build_cache.as_ref().map(|c| dir.join(c)),
        ..ServerConfig::default()
    };
    let handle = serve(cfg).await?;
    handle.repo.host(pkg, Some(launch.package.clone())).await.map_err(ServeError::Package)?;
    Ok(handle)
}
