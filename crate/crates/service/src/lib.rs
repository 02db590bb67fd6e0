//! Session-oriented JSON-over-HTTP service: onboarding of new users against a trained
//! bundle, then item-by-item cooperative classification with running statistics.
//!
//! Every response body carries `schema: "coopclass-api-v1"`.

mod error;
mod routes;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use coopclass_core::bundle::{read_artifact, BUNDLE_SCHEMA};
use coopclass_core::rng::derive_seed;
use coopclass_core::Bundle;

pub use error::{ApiError, ErrorKind};
pub use routes::router;
pub use session::{
    AuditEntry, Deployment, Item, Mode, Phase, Progress, RunningStats, Session, SessionReport, SessionView, Step,
};

pub const API_SCHEMA: &str = "coopclass-api-v1";

#[derive(Clone, Debug, Default)]
pub struct ServiceConfig {
    /// Closed sessions are written here as `<session_id>.json`.
    pub export_dir: Option<PathBuf>,
    pub seed: u64,
}

/// Shared state. Sessions are locked individually so requests within one session are
/// serialized while different sessions proceed independently.
#[derive(Debug)]
pub struct AppState {
    deployment: Option<Arc<Deployment>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    counter: AtomicU64,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(deployment: Option<Deployment>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            deployment: deployment.map(Arc::new),
            sessions: RwLock::new(HashMap::new()),
            counter: AtomicU64::new(0),
            config,
        })
    }

    pub fn deployment(&self) -> Result<&Arc<Deployment>, ApiError> {
        self.deployment
            .as_ref()
            .ok_or_else(|| ApiError::unavailable("no trained artifacts are loaded"))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    fn open_session(&self, user_id: &str) -> Arc<Mutex<Session>> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed) + 1;
        let id = format!("s{n:06}");
        let seed = derive_seed(self.config.seed, &id);
        let session = Arc::new(Mutex::new(Session::new(id.clone(), user_id, seed)));
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, session.clone());
        session
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    fn export(&self, report: &SessionReport) -> Result<(), ApiError> {
        let Some(dir) = &self.config.export_dir else {
            return Ok(());
        };
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(dir)?;
            let body = serde_json::to_string_pretty(report)?;
            std::fs::write(dir.join(format!("{}.json", report.session_id)), body + "\n")
        };
        write().map_err(|e| ApiError::internal(format!("exporting session: {e}")))
    }
}

/// Loads and checks a serving bundle written by the pipeline.
pub fn load_deployment(path: impl AsRef<Path>) -> coopclass_core::Result<Deployment> {
    let bundle: Bundle = read_artifact(path, BUNDLE_SCHEMA)?;
    Deployment::new(bundle)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
