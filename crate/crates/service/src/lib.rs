//! HTTP+JSON front end for `aoglab`, plus the command implementations used by
//! the `aoglab` binary.
//!
//! Routes live under `/v1`; see [`api::router`].

pub mod api;
pub mod commands;
pub mod error;
pub mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use error::{ApiError, ErrorBody};
pub use state::AppState;

/// Serve the API on `0.0.0.0:port` until interrupted.
pub async fn serve(data_root: PathBuf, port: u16) -> Result<(), Box<dyn std::error::Error>> {
    let state = AppState::open(&data_root).map_err(|e| e.body.message)?;
    let app = router(Arc::new(state));
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("aoglab: serving {} on http://{addr}/v1", data_root.display());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
