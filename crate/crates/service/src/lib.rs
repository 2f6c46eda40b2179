//! Live control service: one thread runs the simulation and publishes
//! rendered frames; HTTP and WebSocket handlers read snapshots and queue
//! parameter changes for the next frame boundary.

mod engine;
mod http;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rainsim_core::pipeline::Session;
use tokio::net::TcpListener;

pub use engine::{engine, Engine, Handle, ServiceOptions, Snapshot};
pub use http::router;

/// Run the service on `addr` until Ctrl-C. The simulation paces itself to
/// real time on a dedicated thread.
pub async fn serve(session: Session, addr: SocketAddr, options: ServiceOptions) -> anyhow::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    serve_on(listener, session, options, shutdown_signal()).await
}

/// Like [`serve`], on an already bound listener and with a caller-supplied
/// shutdown future.
pub async fn serve_on(
    listener: TcpListener,
    session: Session,
    options: ServiceOptions,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let (engine, handle) = engine(session, options)?;
    let stop = Arc::new(AtomicBool::new(false));
    let sim = {
        let stop = stop.clone();
        std::thread::Builder::new().name("sim".into()).spawn(move || engine.run(&stop))?
    };
    tracing::info!("listening on {}", listener.local_addr()?);
    let result = axum::serve(listener, router(handle)).with_graceful_shutdown(shutdown).await;
    stop.store(true, Ordering::Relaxed);
    let sim_result = sim.join().map_err(|_| anyhow::anyhow!("simulation thread panicked"))?;
    result?;
    sim_result
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}
