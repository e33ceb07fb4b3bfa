//! HTTP/JSON front-end for the metafuse pipeline.

pub mod config;
pub mod error;
pub mod routes;
pub mod state;
pub mod stats;

use std::net::SocketAddr;
use std::sync::Arc;

use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use config::{load_config, resolve_config_path, AppConfig};
pub use error::ServiceError;
pub use routes::router;
pub use state::AppState;
pub use stats::{load_stats, persist_stats, EngineStats};

/// A service bound to a socket and serving in the background. Dropping it
/// stops the server.
pub struct RunningService {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    task: JoinHandle<()>,
}

impl RunningService {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Starts the service on `addr` (port 0 picks a free one).
pub async fn spawn(config: AppConfig, addr: SocketAddr) -> Result<RunningService, ServiceError> {
    let state = Arc::new(AppState::new(config)?);
    let listener = TcpListener::bind(addr).await.map_err(|e| ServiceError::Bind(format!("{addr}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Bind(e.to_string()))?;
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        if let Err(err) = axum::serve(listener, app).await {
            tracing::error!(error = %err, "service stopped");
        }
    });
    Ok(RunningService { addr, state, task })
}

/// Starts on an ephemeral loopback port.
pub async fn spawn_local(config: AppConfig) -> Result<RunningService, ServiceError> {
    spawn(config, SocketAddr::from(([127, 0, 0, 1], 0))).await
}

/// Serves on `0.0.0.0:listen_port` until Ctrl-C.
pub async fn serve(config: AppConfig) -> Result<(), ServiceError> {
    let addr = SocketAddr::from(([0, 0, 0, 0], config.listen_port));
    let state = Arc::new(AppState::new(config)?);
    let listener = TcpListener::bind(addr).await.map_err(|e| ServiceError::Bind(format!("{addr}: {e}")))?;
    tracing::info!(%addr, "metafuse listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Bind(e.to_string()))
}
