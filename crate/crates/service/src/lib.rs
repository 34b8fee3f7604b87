//! Local JSON-over-HTTP API over one session directory.
//!
//! Every response is an [`ApiEnvelope`]. Reads open a fresh snapshot of the
//! persisted state; mutations go through the session layer, which takes the
//! exclusive transition lock, so a request racing another transition gets a
//! 409 rather than waiting.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use softalign_core::canonical::to_canonical_value;
use softalign_core::session::{Clock, ErrorCode, RunOptions, Session, SessionError, STAGE_COUNT};
use softalign_core::sysml::library::FULLY_UNMATCHED;
use softalign_core::verifier::Verdict;
use softalign_core::Diagnostic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    /// One of `usage`, `validation`, `provider`, `gating`.
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEnvelope {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

impl ApiEnvelope {
    pub fn success(data: Value) -> Self {
        ApiEnvelope {
            ok: true,
            data: Some(data),
            error: None,
        }
    }

    pub fn failure(
        code: ErrorCode,
        message: impl Into<String>,
        diagnostics: Vec<Diagnostic>,
    ) -> Self {
        let error = ApiError {
            code: code.as_str().to_string(),
            message: message.into(),
            diagnostics,
        };
        ApiEnvelope {
            ok: false,
            data: None,
            error: Some(error),
        }
    }

    pub fn from_error(err: &SessionError) -> Self {
        Self::failure(err.code(), err.to_string(), err.diagnostics().to_vec())
    }
}

/// HTTP status for a session error: 404 unknown resource, 409 gating
/// violation (including a held lock), 422 invalid verdict or input,
/// 502 provider failure.
pub fn status_for(err: &SessionError) -> StatusCode {
    match err {
        SessionError::NotFound(_) => StatusCode::NOT_FOUND,
        SessionError::Gating(_) | SessionError::Busy => StatusCode::CONFLICT,
        SessionError::Verdict(_) | SessionError::Validation { .. } => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        SessionError::Provider(_) => StatusCode::BAD_GATEWAY,
        SessionError::Usage(_) => StatusCode::BAD_REQUEST,
        SessionError::Io { .. } | SessionError::Corrupt(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiResponse(StatusCode, ApiEnvelope);

impl IntoResponse for ApiResponse {
    fn into_response(self) -> Response {
        (self.0, Json(to_canonical_value(&self.1))).into_response()
    }
}

type ApiResult = Result<ApiResponse, ApiResponse>;

fn ok<T: Serialize>(data: &T) -> ApiResult {
    Ok(ApiResponse(
        StatusCode::OK,
        ApiEnvelope::success(to_canonical_value(data)),
    ))
}

fn fail(err: SessionError) -> ApiResponse {
    ApiResponse(status_for(&err), ApiEnvelope::from_error(&err))
}

#[derive(Clone)]
pub struct AppState {
    dir: Arc<PathBuf>,
    clock: Clock,
}

impl AppState {
    pub fn new(dir: impl Into<PathBuf>, clock: Clock) -> Self {
        AppState {
            dir: Arc::new(dir.into()),
            clock,
        }
    }

    /// Opens the session and runs `f` on a blocking thread: session
    /// operations do file IO and may call a synchronous provider.
    async fn with_session<T, F>(&self, f: F) -> Result<T, ApiResponse>
    where
        T: Send + 'static,
        F: FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
    {
        let dir = self.dir.clone();
        let clock = self.clock;
        tokio::task::spawn_blocking(move || {
            let mut session = Session::open(dir.as_path(), clock)?;
            f(&mut session)
        })
        .await
        .map_err(|e| fail(SessionError::Corrupt(format!("worker panicked: {e}"))))?
        .map_err(fail)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/stages/{k}", get(get_stage))
        .route("/api/stages/{k}/run", post(run_stage))
        .route("/api/stages/{k}/confirm", post(confirm_stage))
        .route("/api/stages/{k}/reject", post(reject_stage))
        .route("/api/stages/{k}/reopen", post(reopen_stage))
        .route("/api/candidates", get(get_candidates))
        .route("/api/mappings/{id}/verdict", post(post_verdict))
        .route("/api/verdicts/auto", post(post_auto_verdicts))
        .route("/api/coverage", get(get_coverage))
        .route("/api/diagnosis", get(get_diagnosis))
        .route("/api/artifacts/{*name}", get(get_artifact))
        .fallback(not_found)
        .with_state(state)
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

async fn not_found() -> ApiResponse {
    fail(SessionError::NotFound("no such endpoint".into()))
}

fn stage_index(raw: &str) -> Result<usize, ApiResponse> {
    raw.parse::<usize>()
        .ok()
        .filter(|k| *k < STAGE_COUNT)
        .ok_or_else(|| {
            fail(SessionError::NotFound(format!(
                "no stage `{raw}`; stages are 0 to {}",
                STAGE_COUNT - 1
            )))
        })
}

/// Parses an optional JSON body; an empty body yields the default.
fn body<T: for<'de> Deserialize<'de> + Default>(bytes: &Bytes) -> Result<T, ApiResponse> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes)
        .map_err(|e| fail(SessionError::Usage(format!("invalid request body: {e}"))))
}

async fn get_session(State(app): State<AppState>) -> ApiResult {
    let state = app.with_session(|s| Ok(s.state().clone())).await?;
    ok(&state)
}

async fn get_stage(State(app): State<AppState>, Path(k): Path<String>) -> ApiResult {
    let k = stage_index(&k)?;
    let stage = app
        .with_session(move |s| Ok(s.state().stage(k).clone()))
        .await?;
    ok(&stage)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    /// Refuse the run unless the stage has run exactly this many times.
    expected_attempts: Option<u32>,
}

async fn run_stage(State(app): State<AppState>, Path(k): Path<String>, bytes: Bytes) -> ApiResult {
    let k = stage_index(&k)?;
    let req: RunBody = body(&bytes)?;
    let report = app
        .with_session(move |s| {
            s.run_stage(
                k,
                &RunOptions {
                    expected_attempts: req.expected_attempts,
                    ..RunOptions::default()
                },
            )
        })
        .await?;
    ok(&report)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfirmBody {
    message: Option<String>,
    #[serde(default)]
    acknowledge_unprocessed: bool,
}

async fn confirm_stage(
    State(app): State<AppState>,
    Path(k): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let k = stage_index(&k)?;
    let req: ConfirmBody = body(&bytes)?;
    let stage = app
        .with_session(move |s| {
            s.confirm_stage(k, req.message.as_deref(), req.acknowledge_unprocessed)?;
            Ok(s.state().stage(k).clone())
        })
        .await?;
    ok(&stage)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    message: Option<String>,
}

async fn reject_stage(
    State(app): State<AppState>,
    Path(k): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let k = stage_index(&k)?;
    let req: MessageBody = body(&bytes)?;
    let stage = app
        .with_session(move |s| {
            s.reject_stage(k, req.message.as_deref().unwrap_or(""))?;
            Ok(s.state().stage(k).clone())
        })
        .await?;
    ok(&stage)
}

async fn reopen_stage(
    State(app): State<AppState>,
    Path(k): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let k = stage_index(&k)?;
    let req: MessageBody = body(&bytes)?;
    let state = app
        .with_session(move |s| {
            s.reopen_stage(k, req.message.as_deref())?;
            Ok(s.state().clone())
        })
        .await?;
    ok(&state)
}

async fn get_candidates(State(app): State<AppState>) -> ApiResult {
    let data = app
        .with_session(|s| {
            let names = s.artifact_names();
            let has = |f: &str| names.iter().any(|n| n == f);
            if !has(softalign_core::session::CANDIDATES_FILE) {
                return Err(SessionError::NotFound(
                    "no candidates yet: run stage 2".into(),
                ));
            }
            let mut data = serde_json::Map::new();
            data.insert(
                "candidates".into(),
                serde_json::to_value(s.candidates()?).expect("json"),
            );
            let (mappings, conflicts) = if has(softalign_core::session::MAPPINGS_FILE) {
                (
                    serde_json::to_value(s.mappings()?).expect("json"),
                    serde_json::to_value(s.conflicts()?).expect("json"),
                )
            } else {
                (Value::Null, Value::Null)
            };
            data.insert("mappings".into(), mappings);
            data.insert("conflicts".into(), conflicts);
            Ok(Value::Object(data))
        })
        .await?;
    ok(&data)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictBody {
    /// `Accepted`, `Rejected` or `Modified`.
    status: String,
    /// The replacement tag for `Modified`.
    tag: Option<String>,
    actor: Option<String>,
}

fn parse_verdict(body: &VerdictBody) -> Result<Verdict, SessionError> {
    let invalid = |m: String| SessionError::Validation {
        message: m,
        diagnostics: Vec::new(),
    };
    match (body.status.as_str(), &body.tag) {
        ("Accepted", None) => Ok(Verdict::Accepted),
        ("Rejected", None) => Ok(Verdict::Rejected),
        ("Modified", Some(tag)) => Ok(Verdict::Modified(tag.clone())),
        ("Modified", None) => Err(invalid(format!(
            "a Modified verdict needs a tag, e.g. {FULLY_UNMATCHED}"
        ))),
        ("Accepted" | "Rejected", Some(_)) => {
            Err(invalid("only Modified verdicts carry a tag".into()))
        }
        (other, _) => Err(invalid(format!(
            "unknown verdict `{other}`; use Accepted, Rejected or Modified"
        ))),
    }
}

async fn post_verdict(
    State(app): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let req: VerdictBody = body(&bytes)?;
    let verdict = parse_verdict(&req).map_err(fail)?;
    let actor = req.actor.unwrap_or_else(|| "user".to_string());
    let mapping = app
        .with_session(move |s| s.set_verdict(&id, verdict, &actor))
        .await?;
    ok(&mapping)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActorBody {
    actor: Option<String>,
}

/// Decides every still-pending mapping by greedy one-to-one assignment.
async fn post_auto_verdicts(State(app): State<AppState>, bytes: Bytes) -> ApiResult {
    let req: ActorBody = body(&bytes)?;
    let actor = req.actor.unwrap_or_else(|| "auto".to_string());
    let summary = app.with_session(move |s| s.auto_verdicts(&actor)).await?;
    ok(&summary)
}

async fn get_coverage(State(app): State<AppState>) -> ApiResult {
    let data = app
        .with_session(|s| {
            require(s, softalign_core::session::COVERAGE_FILE, "5").and_then(|_| s.coverage())
        })
        .await?;
    ok(&data)
}

async fn get_diagnosis(State(app): State<AppState>) -> ApiResult {
    let data = app
        .with_session(|s| {
            require(s, softalign_core::session::DIAGNOSIS_FILE, "5").and_then(|_| s.diagnosis())
        })
        .await?;
    ok(&data)
}

fn require(s: &Session, file: &str, stage: &str) -> Result<(), SessionError> {
    if s.artifact_names().iter().any(|n| n == file) {
        Ok(())
    } else {
        Err(SessionError::NotFound(format!(
            "{file} has not been produced yet: run stage {stage}"
        )))
    }
}

#[derive(Serialize)]
struct Artifact {
    name: String,
    content: String,
}

async fn get_artifact(State(app): State<AppState>, Path(name): Path<String>) -> ApiResult {
    let artifact = app
        .with_session(move |s| {
            let content = s.read_artifact(&name)?;
            Ok(Artifact { name, content })
        })
        .await?;
    ok(&artifact)
}
