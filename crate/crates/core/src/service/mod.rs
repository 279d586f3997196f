//! HTTP service: report upload, asynchronous analysis jobs, chat, catalog.

mod api;
pub mod chat;
pub mod jobs;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use tokio::sync::{oneshot, Semaphore};
use tracing::info;

pub use api::{router, ApiError};

use crate::catalog::Catalog;
use crate::config::Config;
use crate::gateway::ModelGateway;
use crate::index::EmbeddingCache;
use crate::ingest::{PdfTextExtractor, PdftotextExtractor};
use crate::{Error, Result};
use chat::Sessions;
use jobs::{AnalysisJob, JobBoard};
use store::Store;

/// Shared state behind every request handler.
pub struct AppState {
    pub store: Store,
    pub catalog: Arc<Catalog>,
    pub gateway: Arc<dyn ModelGateway>,
    pub config: Config,
    pub jobs: JobBoard,
    pub sessions: Sessions,
    pub cache: Arc<EmbeddingCache>,
    pub pdf: Arc<dyn PdfTextExtractor>,
    job_slots: Arc<Semaphore>,
    pending: std::sync::Mutex<Vec<AnalysisJob>>,
}

impl AppState {
    /// Open the storage root named in `config` and recover persisted jobs.
    pub fn new(config: Config, catalog: Catalog, gateway: Arc<dyn ModelGateway>) -> Result<Self> {
        let store = Store::open(&config.storage_root)?;
        let (jobs, pending) = JobBoard::load(store.clone())?;
        let cache = Arc::new(store.load_embedding_cache());
        Ok(Self {
            job_slots: Arc::new(Semaphore::new(config.max_concurrent_jobs)),
            store,
            catalog: Arc::new(catalog),
            gateway,
            config,
            jobs,
            sessions: Sessions::default(),
            cache,
            pdf: Arc::new(PdftotextExtractor::default()),
            pending: std::sync::Mutex::new(pending),
        })
    }

    pub fn with_pdf_extractor(mut self, pdf: Arc<dyn PdfTextExtractor>) -> Self {
        self.pdf = pdf;
        self
    }

    /// Queue the jobs that were still queued when the service last stopped.
    /// Must run inside a tokio runtime.
    fn resume_pending(self: &Arc<Self>) {
        let pending = std::mem::take(&mut *self.pending.lock().unwrap());
        for job in pending {
            info!(job_id = %job.job_id, "resuming queued job");
            api::submit(self.clone(), job);
        }
    }
}

/// Serve until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Invalid(format!("cannot bind {addr}: {e}")))?;
    info!(addr = %listener.local_addr().map_err(|e| Error::Invalid(e.to_string()))?, "listening");
    state.resume_pending();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Invalid(e.to_string()))
}

/// A service running on a background thread; stops when dropped.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningService {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Start the service on its own runtime thread. Port 0 picks a free port.
pub fn spawn_service(state: AppState, addr: SocketAddr) -> Result<RunningService> {
    let std_listener = std::net::TcpListener::bind(addr).map_err(|e| Error::Invalid(format!("cannot bind {addr}: {e}")))?;
    std_listener
        .set_nonblocking(true)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let addr = std_listener.local_addr().map_err(|e| Error::Invalid(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let state = Arc::new(state);
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            state.resume_pending();
            let _ = axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
