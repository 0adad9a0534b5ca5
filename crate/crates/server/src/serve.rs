//! Process lifecycle: load, recover, listen, shut down.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use ans_core::attestation::ChallengeStore;
use ans_core::identity::{Certificate, TrustAnchors};
use ans_core::policy::{load_policies, Policy};
use ans_core::registry::{OpenError, Registry, RegistryConfig};
use ans_core::ErrorCode;

use crate::app::{router, system_clock, AppState, Clock};
use crate::config::ServerConfig;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String, code: ErrorCode },
    #[error("recovering registry: {0}")]
    Recovery(#[from] OpenError),
    #[error("binding {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("writing snapshot: {0}")]
    Snapshot(std::io::Error),
    #[error("server task failed: {0}")]
    Task(String),
}

impl ServeError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ServeError::Config(_) => ErrorCode::Malformed,
            ServeError::Load { code, .. } => *code,
            ServeError::Recovery(e) => e.code(),
            _ => ErrorCode::Internal,
        }
    }
}

/// Reads a JSON array of self-signed root certificates.
pub fn load_anchors(path: &Path) -> Result<TrustAnchors, ServeError> {
    let fail = |code, message: String| ServeError::Load { path: path.into(), message, code };
    let text = std::fs::read_to_string(path).map_err(|e| fail(ErrorCode::Internal, e.to_string()))?;
    let roots: Vec<Certificate> = serde_json::from_str(&text).map_err(|e| fail(ErrorCode::Malformed, e.to_string()))?;
    TrustAnchors::new(roots).map_err(|e| fail(ErrorCode::UntrustedRoot, e.to_string()))
}

pub fn load_policy_file(path: &Path) -> Result<Vec<Policy>, ServeError> {
    let text = std::fs::read_to_string(path).map_err(|e| ServeError::Load {
        path: path.into(),
        message: e.to_string(),
        code: ErrorCode::Internal,
    })?;
    load_policies(&text).map_err(|e| ServeError::Load { path: path.into(), message: e.to_string(), code: e.code() })
}

/// A running server.
pub struct ServerHandle {
    addr: SocketAddr,
    state: AppState,
    snapshot_path: Option<PathBuf>,
    shutdown: Option<oneshot::Sender<()>>,
    server: JoinHandle<std::io::Result<()>>,
    background: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    /// Stops accepting requests, drains in-flight ones and writes a final
    /// snapshot if a snapshot path is configured.
    pub async fn shutdown(mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        for task in self.background.drain(..) {
            task.abort();
        }
        let served = (&mut self.server).await.map_err(|e| ServeError::Task(e.to_string()))?;
        served.map_err(|e| ServeError::Task(e.to_string()))?;
        if let Some(path) = &self.snapshot_path {
            let registry = self.state.registry().clone();
            let path = path.clone();
            let seq = tokio::task::spawn_blocking(move || registry.write_snapshot(&path))
                .await
                .map_err(|e| ServeError::Task(e.to_string()))?
                .map_err(ServeError::Snapshot)?;
            tracing::info!(seq, "final snapshot written");
        }
        Ok(())
    }
}

/// Knobs for an already-assembled state.
#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    pub snapshot_path: Option<PathBuf>,
    pub snapshot_interval: Option<Duration>,
    pub sweep_interval: Option<Duration>,
}

/// Binds `listen` and serves `state` until [`ServerHandle::shutdown`].
pub async fn serve_state(listen: SocketAddr, state: AppState, options: ServeOptions) -> Result<ServerHandle, ServeError> {
    let listener = TcpListener::bind(listen).await.map_err(|source| ServeError::Bind { addr: listen, source })?;
    let addr = listener.local_addr().map_err(|source| ServeError::Bind { addr: listen, source })?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state.clone());
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });

    let mut background = Vec::new();
    if let Some(every) = options.sweep_interval {
        let st = state.clone();
        background.push(tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let removed = st.registry().sweep_expired(st.now());
                if removed > 0 {
                    tracing::info!(removed, "swept expired records");
                }
            }
        }));
    }
    if let (Some(every), Some(path)) = (options.snapshot_interval, options.snapshot_path.clone()) {
        let registry = state.registry().clone();
        background.push(tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let (registry, path) = (registry.clone(), path.clone());
                match tokio::task::spawn_blocking(move || registry.write_snapshot(&path)).await {
                    Ok(Ok(seq)) => tracing::debug!(seq, "periodic snapshot"),
                    Ok(Err(e)) => tracing::warn!(error = %e, "periodic snapshot failed"),
                    Err(e) => tracing::warn!(error = %e, "snapshot task panicked"),
                }
            }
        }));
    }

    tracing::info!(%addr, "registry listening");
    Ok(ServerHandle { addr, state, snapshot_path: options.snapshot_path, shutdown: Some(tx), server, background })
}

/// Loads trust anchors and policies, recovers the registry, then serves.
pub async fn serve(config: ServerConfig) -> Result<ServerHandle, ServeError> {
    serve_with_clock(config, system_clock()).await
}

pub async fn serve_with_clock(config: ServerConfig, clock: Clock) -> Result<ServerHandle, ServeError> {
    let anchors_path = config.anchors_path.as_deref().ok_or_else(|| ServeError::Config("anchors_path is required".into()))?;
    let policy_path = config.policy_path.as_deref().ok_or_else(|| ServeError::Config("policy_path is required".into()))?;
    let anchors = load_anchors(anchors_path)?;
    let policies = load_policy_file(policy_path)?;

    let registry_config = RegistryConfig { record_ttl: config.record_ttl_seconds };
    let registry = match &config.log_path {
        Some(log) => {
            let (log, snapshot, fsync) = (log.clone(), config.snapshot_path.clone(), config.fsync);
            tokio::task::spawn_blocking(move || Registry::open(registry_config, &log, snapshot.as_deref(), fsync))
                .await
                .map_err(|e| ServeError::Task(e.to_string()))??
        }
        None => Registry::new(registry_config),
    };
    tracing::info!(last_seq = registry.last_seq(), anchors = anchors.len(), policies = policies.len(), "registry recovered");

    let challenges = ChallengeStore::new(config.challenge_ttl_seconds, config.challenge_capacity);
    let state = AppState::new(Arc::new(registry), policies, anchors, challenges, config.alerts, clock);
    let secs = |s: u64| (s > 0).then(|| Duration::from_secs(s));
    let options = ServeOptions {
        snapshot_path: config.snapshot_path.clone(),
        snapshot_interval: secs(config.snapshot_interval_seconds),
        sweep_interval: secs(config.sweep_interval_seconds),
    };
    serve_state(config.listen, state, options).await
}
