//! HTTP API consumed by the chat UI.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{ontology, strategy}` | `{id, concept, classes, state, ontology, strategy}` |
//! | POST | `/sessions/{id}/turns` | `{text}` | `{detected, target, reply, reply_detected, compliant}` |
//! | POST | `/sessions/{id}/retry` | none | same as a turn, for a pending target |
//! | GET | `/sessions/{id}` | none | the session with its full transcript |
//! | GET | `/ontologies` | none | available ontologies and strategies |
//! | GET | `/health` | none | `{status: "ok"}` |
//!
//! Errors are JSON objects with an `error` field: 400 for invalid input, 404
//! for unknown sessions, 502 when the language model or a remote classifier
//! failed (with `kind` and `request_id`).

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use super::{AppConfig, Catalog, ConfigError, GatewayPool};
use crate::annotators::AnnotateError;
use crate::engine::{Controller, EngineError, SessionStore, TurnOutcome};
use crate::gateway::TemplateSet;

pub struct AppState {
    pub catalog: Catalog,
    pub store: SessionStore,
    pub gateways: GatewayPool,
    pub templates: Arc<TemplateSet>,
    pub template_id: String,
    pub max_retries_on_noncompliance: u32,
}

impl AppState {
    pub fn new(catalog: Catalog, store: SessionStore, gateways: GatewayPool) -> Self {
        AppState {
            catalog,
            store,
            gateways,
            templates: Arc::new(TemplateSet::default()),
            template_id: "fine-tuned".into(),
            max_retries_on_noncompliance: 0,
        }
    }

    pub fn from_config(config: &AppConfig, gateways: GatewayPool) -> Result<Self, ConfigError> {
        let store = match &config.store_dir {
            Some(d) => SessionStore::on_disk(d).map_err(|e| ConfigError::Io {
                path: d.display().to_string(),
                message: e.to_string(),
            })?,
            None => SessionStore::in_memory(),
        };
        Ok(AppState {
            catalog: config.catalog()?,
            store,
            gateways,
            templates: Arc::new(config.templates()?),
            template_id: config.template_id.clone(),
            max_retries_on_noncompliance: config.max_retries_on_noncompliance,
        })
    }

    /// Controller for an ontology/strategy pair.
    pub fn controller(&self, ontology: &str, strategy: &str) -> Result<Controller, ConfigError> {
        let spec = self.catalog.ontology(ontology)?;
        let gateway = self.gateways.get(&spec.concept)?;
        Ok(Controller::new(
            spec,
            self.catalog.strategy(strategy, ontology)?,
            self.catalog.annotator(ontology)?,
            gateway,
        )
        .with_template(Arc::clone(&self.templates), self.template_id.clone())
        .with_noncompliance_retries(self.max_retries_on_noncompliance))
    }

    fn create_session(&self, req: &CreateSession) -> Result<Value, ApiError> {
        let controller = self
            .controller(&req.ontology, &req.strategy)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-session", e.to_string()))?;
        let session = controller.new_session(&req.ontology, &req.strategy);
        let handle = self.store.insert(session).map_err(ApiError::internal)?;
        let s = handle.lock().expect("session lock");
        Ok(json!({
            "id": s.id(),
            "concept": s.header.concept,
            "classes": controller.spec.classes,
            "state": s.state,
            "ontology": s.header.ontology,
            "strategy": s.header.strategy,
        }))
    }

    fn session_handle(&self, id: &str) -> Result<Arc<std::sync::Mutex<crate::engine::Session>>, ApiError> {
        self.store
            .get(id, |h| self.catalog.strategy(&h.strategy, &h.ontology).ok())
            .map_err(|e| match e {
                EngineError::UnknownSession(_) => {
                    ApiError::new(StatusCode::NOT_FOUND, "unknown-session", e.to_string())
                }
                other => ApiError::internal(other),
            })
    }

    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&Controller, &mut crate::engine::Session) -> Result<T, EngineError>,
    ) -> Result<T, ApiError> {
        let handle = self.session_handle(id)?;
        let mut session = handle.lock().expect("session lock");
        let controller = self
            .controller(&session.header.ontology, &session.header.strategy)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "config", e.to_string()))?;
        let result = f(&controller, &mut session);
        self.store.sync(&mut session).map_err(ApiError::internal)?;
        result.map_err(ApiError::from_engine)
    }

    pub fn run_turn(&self, id: &str, text: &str) -> Result<TurnOutcome, ApiError> {
        self.with_session(id, |c, s| c.run_turn(s, text))
    }

    pub fn retry(&self, id: &str) -> Result<TurnOutcome, ApiError> {
        self.with_session(id, |c, s| c.retry_pending(s))
    }

    pub fn session_json(&self, id: &str) -> Result<Value, ApiError> {
        let handle = self.session_handle(id)?;
        let s = handle.lock().expect("session lock");
        let mut v = serde_json::to_value(&*s).expect("session serializes");
        if let Ok(spec) = self.catalog.ontology(&s.header.ontology) {
            v["classes"] = json!(spec.classes);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub ontology: String,
    pub strategy: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnRequest {
    pub text: String,
}

/// Reply of the turn endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnReply {
    pub detected: String,
    pub target: String,
    pub reply: String,
    pub reply_detected: Option<String>,
    pub compliant: bool,
}

impl From<TurnOutcome> for TurnReply {
    fn from(o: TurnOutcome) -> Self {
        TurnReply {
            detected: o.detected,
            target: o.target,
            reply: o.reply,
            reply_detected: o.reply_detected,
            compliant: o.compliant,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: String) -> Self {
        ApiError {
            status,
            body: json!({"error": error, "message": message}),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }

    fn from_engine(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::BlankInput { .. }
            | EngineError::Annotation {
                source: AnnotateError::BlankInput,
                ..
            } => Self::new(StatusCode::BAD_REQUEST, "blank-text", message),
            EngineError::Gateway { turn, source } => {
                let mut body = json!({"error": "gateway", "turn": turn, "message": message});
                if let Value::Object(fields) = serde_json::to_value(&source).expect("error serializes") {
                    for (k, v) in fields {
                        if k != "message" {
                            body[k] = v;
                        }
                    }
                }
                ApiError {
                    status: StatusCode::BAD_GATEWAY,
                    body,
                }
            }
            EngineError::Annotation {
                turn,
                source: AnnotateError::Backend(b),
            } => ApiError {
                status: StatusCode::BAD_GATEWAY,
                body: json!({
                    "error": "classifier",
                    "turn": turn,
                    "message": b.to_string(),
                }),
            },
            EngineError::NothingPending => Self::new(StatusCode::BAD_REQUEST, "nothing-pending", message),
            EngineError::UnknownSession(_) => Self::new(StatusCode::NOT_FOUND, "unknown-session", message),
            other => Self::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn bad_json(e: JsonRejection) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "invalid-body", e.body_text())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn ontologies(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "ontologies": st.catalog.ontology_infos(),
        "strategies": st.catalog.strategy_ids(),
    }))
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(req) = body.map_err(bad_json)?;
    blocking(move || st.create_session(&req)).await.map(Json)
}

async fn post_turn(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<TurnRequest>, JsonRejection>,
) -> Result<Json<TurnReply>, ApiError> {
    let Json(req) = body.map_err(bad_json)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "blank-text", "text is blank".into()));
    }
    blocking(move || st.run_turn(&id, &req.text))
        .await
        .map(|o| Json(o.into()))
}

async fn retry_turn(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<TurnReply>, ApiError> {
    blocking(move || st.retry(&id)).await.map(|o| Json(o.into()))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    blocking(move || st.session_json(&id)).await.map(Json)
}

/// The API router. `cors_origins` lists allowed browser origins; `*` allows
/// any origin, an empty list disables CORS headers.
pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    let app = Router::new()
        .route("/health", get(health))
        .route("/ontologies", get(ontologies))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/sessions/{id}/retry", post(retry_turn))
        .with_state(state);
    if cors_origins.is_empty() {
        return app;
    }
    let origin = if cors_origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(
            cors_origins
                .iter()
                .filter_map(|o| HeaderValue::from_str(o).ok()),
        )
    };
    app.layer(
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers(Any),
    )
}

/// Runs the API until Ctrl-C.
pub async fn serve(config: AppConfig, gateways: GatewayPool) -> Result<(), ServeError> {
    let state = Arc::new(AppState::from_config(&config, gateways)?);
    let app = router(state, &config.cors_origins);
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A router served from a background thread with its own runtime, for
/// synchronous callers such as tests and examples. Stops on drop.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(app: Router, addr: &str) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let local = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(BackgroundServer {
            addr: local,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
