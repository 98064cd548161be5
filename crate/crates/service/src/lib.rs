//! Read-only HTTP API over the most recently published snapshot.
//!
//! | route | returns |
//! |---|---|
//! | `GET /api/v1/heatmap?week=&provider=&specialty=&site=&grouping=` | week grid |
//! | `GET /api/v1/blocks/{date}/{hour}?provider=&specialty=&site=` | one block with its appointments |
//! | `GET /api/v1/providers` | provider catalog |
//! | `GET /api/v1/meta` | snapshot and model metadata |
//! | `GET /healthz` | live snapshot id, or 503 |
//!
//! Every response body carries the `snapshot_id` it was computed from.

pub mod api;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

pub use api::{router, ApiError, ErrorBody, API_VERSION};
pub use store::{spawn_watcher, Served, SnapshotStore};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub snapshot_dir: PathBuf,
    pub poll_interval: Duration,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            snapshot_dir: "publish".into(),
            poll_interval: Duration::from_secs(2),
        }
    }
}

/// Serves until ctrl-c.
pub async fn serve(config: ServeConfig) -> std::io::Result<()> {
    let store = Arc::new(SnapshotStore::open(&config.snapshot_dir));
    match store.current() {
        Some(s) => tracing::info!(snapshot_id = s.id(), "serving"),
        None => tracing::warn!("nothing published under {} yet", config.snapshot_dir.display()),
    }
    let watcher = spawn_watcher(store.clone(), config.poll_interval);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    let result = axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    watcher.abort();
    result
}
