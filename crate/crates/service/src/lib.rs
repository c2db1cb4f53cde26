//! Survey administration over HTTP.
//!
//! [`Service`] holds the survey registry and live session states and
//! persists every accepted event before acknowledging it; [`router`] exposes
//! it as a JSON API. [`serve`] binds a listener and runs until shutdown.

pub mod api;
pub mod clock;
pub mod config;
pub mod service;
pub mod store;

use std::sync::Arc;

pub use api::router;
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{ConfigError, ServiceConfig, DATA_DIR_ENV};
pub use service::{
    Correction, Export, ExportKind, IngestOutcome, RejectReason, Rejection, Service, ServiceError, SessionPayload,
    SessionStatus, SubmitOutcome, SubmitRequest, SurveySummary, TallyExport,
};
pub use store::{Store, StoreError, SurveyStatus};

/// Opens the data directory, registers configured surveys that are not yet
/// present, and serves until Ctrl-C.
pub async fn serve(cfg: &ServiceConfig, listener: tokio::net::TcpListener) -> Result<(), ServeError> {
    let service = Arc::new(Service::open(cfg.resolve_data_dir(), Arc::new(SystemClock), cfg.session_ttl_secs)?);
    for survey in &cfg.surveys {
        match service.create_survey(survey.clone()) {
            Ok(id) => tracing::info!(survey = %id, "registered survey"),
            Err(ServiceError::DuplicateSurvey(id)) => tracing::info!(survey = %id, "survey already registered"),
            Err(e) => return Err(e.into()),
        }
    }
    let app = router(service, &cfg.cors_origins);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Io)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("server: {0}")]
    Io(std::io::Error),
}
