//! Session-oriented HTTP service over the measurement pipeline.
//!
//! Each session holds a calibration, a stereo pair and, once computed, a
//! disparity map, a surface and the measurement history. Everything is
//! persisted under the data directory and reloaded on start.

pub mod config;
pub mod error;
mod routes;
pub mod store;

use std::sync::Arc;

pub use config::ServiceConfig;
pub use error::{ApiError, ErrorBody};
pub use routes::router;
pub use store::{SessionState, Store};

/// Opens the store and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let dir = config.data_dir.clone();
    let store = tokio::task::spawn_blocking(move || Store::open(dir))
        .await
        .map_err(std::io::Error::other)??;
    let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port)).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
