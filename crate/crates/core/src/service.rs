//! HTTP API under `/api/v1`.
//!
//! Every error body has the shape `{"error": {"code": ..., "message": ...}}`
//! plus the fields of the underlying error variant. Each code belongs to
//! exactly one error class and always carries the same status.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::ServiceConfig;
use crate::dataset::{DatasetError, DatasetRecord, IngestMode};
use crate::generation::{GenerationError, SAMPLING_DEFAULTS};
use crate::metrics::{metric_report, MetricError};
use crate::plot::{
    insert_act_tags, parse_acts, validate_annotated_plot, ActBoundaries, BoundaryError,
    GenerationProfile, PromptError,
};
use crate::report::ValidationReport;
use crate::screenplay::{
    decode_tagged, encode_tagged, parse_script, render_screenplay, DecodeError, DecodeMode,
    EncodeError, LayoutConfig, LayoutError, ParseError, DEFAULT_PAGE_WIDTH, MIN_PAGE_WIDTH,
};
use crate::store::{ItemKind, StoreError, DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE};
use crate::text::Scene;
use crate::workbench::{
    ExportTarget, OpenError, PlotRequest, RatingRequest, SceneRequest, Workbench, WorkbenchError,
};

pub type AppState = Arc<Workbench>;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub fields: Map<String, Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
            fields: Map::new(),
        }
    }

    /// Builds the error from a `#[serde(tag = "code")]` module error.
    fn tagged<E: Serialize + std::fmt::Display>(status: StatusCode, e: &E) -> Self {
        let mut fields = match serde_json::to_value(e) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        };
        let code = match fields.remove("code") {
            Some(Value::String(c)) => c,
            _ => "Internal".to_string(),
        };
        Self {
            status,
            code,
            message: e.to_string(),
            fields,
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.fields
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn body(&self) -> Value {
        let mut error = self.fields.clone();
        error.insert("code".into(), Value::String(self.code.clone()));
        error.insert("message".into(), Value::String(self.message.clone()));
        json!({ "error": error })
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

const BAD: StatusCode = StatusCode::BAD_REQUEST;
const UNPROCESSABLE: StatusCode = StatusCode::UNPROCESSABLE_ENTITY;

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        Self::tagged(BAD, &e)
    }
}

impl From<EncodeError> for ApiError {
    fn from(e: EncodeError) -> Self {
        Self::tagged(BAD, &e)
    }
}

impl From<DecodeError> for ApiError {
    fn from(e: DecodeError) -> Self {
        Self::tagged(BAD, &e)
    }
}

impl From<BoundaryError> for ApiError {
    fn from(e: BoundaryError) -> Self {
        Self::tagged(BAD, &e)
    }
}

impl From<LayoutError> for ApiError {
    fn from(e: LayoutError) -> Self {
        let code = match e {
            LayoutError::IndentOrder { .. } => "IndentOrder",
            LayoutError::EmptyKeywordSet(_) => "EmptyKeywordSet",
        };
        Self::new(BAD, code, e.to_string())
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        let status = match e {
            PromptError::GenresRequired { .. } | PromptError::GenresForbidden { .. } => {
                UNPROCESSABLE
            }
            PromptError::EmptyStoryline => BAD,
        };
        Self::tagged(status, &e)
    }
}

impl From<GenerationError> for ApiError {
    fn from(e: GenerationError) -> Self {
        let status = match &e {
            GenerationError::Prompt(p) => return p.clone().into(),
            GenerationError::BackendUnavailable { .. } | GenerationError::BackendRejected { .. } => {
                StatusCode::BAD_GATEWAY
            }
            GenerationError::Timeout => StatusCode::GATEWAY_TIMEOUT,
            GenerationError::ContextOverflow { .. }
            | GenerationError::InvalidConfig { .. }
            | GenerationError::EmptyPrompt => BAD,
        };
        Self::tagged(status, &e)
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        let status = match &e {
            DatasetError::Prompt { source, .. } => return source.clone().into(),
            DatasetError::DuplicateId { .. } => StatusCode::CONFLICT,
            DatasetError::MissingLongStoryline { .. }
            | DatasetError::MissingGenres { .. }
            | DatasetError::WrongRecordKind { .. } => UNPROCESSABLE,
            DatasetError::TargetParseFailure { .. }
            | DatasetError::UnknownGenre { .. }
            | DatasetError::LengthViolation { .. }
            | DatasetError::EmptyDataset
            | DatasetError::ManifestParseError { .. }
            | DatasetError::FileNotFound { .. }
            | DatasetError::RecordParseError { .. } => BAD,
        };
        Self::tagged(status, &e)
    }
}

impl From<MetricError> for ApiError {
    fn from(e: MetricError) -> Self {
        let status = match e {
            MetricError::EmptyRatings => StatusCode::NOT_FOUND,
            _ => BAD,
        };
        Self::tagged(status, &e)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound { .. } => StatusCode::NOT_FOUND,
            StoreError::StorageFull { .. } => StatusCode::INSUFFICIENT_STORAGE,
            StoreError::CorruptRecord { .. }
            | StoreError::InvalidPayload { .. }
            | StoreError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::tagged(status, &e)
    }
}

impl From<WorkbenchError> for ApiError {
    fn from(e: WorkbenchError) -> Self {
        match e {
            WorkbenchError::Generation(e) => e.into(),
            WorkbenchError::Prompt(e) => e.into(),
            WorkbenchError::Dataset(e) => e.into(),
            WorkbenchError::Metric(e) => e.into(),
            WorkbenchError::Store(e) => e.into(),
            WorkbenchError::NotRatable { ref id, kind } => {
                let (id, message) = (id.clone(), e.to_string());
                ApiError::new(UNPROCESSABLE, "NotRatable", message)
                    .with("id", id)
                    .with("kind", kind)
            }
            WorkbenchError::EmptyName => ApiError::new(BAD, "EmptyName", e.to_string()),
        }
    }
}

/// JSON body extractor whose rejections use the API error shape.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(JsonRejection::MissingJsonContentType(e)) => Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "UnsupportedMediaType",
                e.body_text(),
            )),
            Err(e) => Err(ApiError::new(BAD, "InvalidJson", e.body_text())),
        }
    }
}

pub struct ApiQuery<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut axum::http::request::Parts,
        state: &S,
    ) -> Result<Self, ApiError> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| ApiQuery(q.0))
            .map_err(|e: QueryRejection| invalid_query(e.body_text()))
    }
}

fn invalid_query(message: impl Into<String>) -> ApiError {
    ApiError::new(BAD, "InvalidQuery", message)
}

/// Runs blocking work (backend calls, fsync) off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize)]
struct ParseBody {
    text: String,
    #[serde(default)]
    layout: Option<LayoutConfig>,
}

async fn parse_script_route(
    State(wb): State<AppState>,
    ApiJson(body): ApiJson<ParseBody>,
) -> ApiResult<impl IntoResponse> {
    let layout = body.layout.unwrap_or_else(|| wb.config().layout.clone());
    layout.validate()?;
    Ok(Json(parse_script(&body.text, &layout)?))
}

#[derive(Deserialize)]
struct SceneBody {
    scene: Scene,
}

async fn encode_route(ApiJson(body): ApiJson<SceneBody>) -> ApiResult<impl IntoResponse> {
    Ok(Json(json!({ "text": encode_tagged(&body.scene)? })))
}

#[derive(Deserialize)]
struct DecodeBody {
    text: String,
    #[serde(default)]
    mode: DecodeMode,
}

async fn decode_route(ApiJson(body): ApiJson<DecodeBody>) -> ApiResult<impl IntoResponse> {
    Ok(Json(decode_tagged(&body.text, body.mode)?))
}

#[derive(Deserialize)]
struct RenderBody {
    scene: Scene,
    #[serde(default)]
    width: Option<usize>,
}

async fn render_route(ApiJson(body): ApiJson<RenderBody>) -> ApiResult<impl IntoResponse> {
    let width = body.width.unwrap_or(DEFAULT_PAGE_WIDTH);
    if width < MIN_PAGE_WIDTH {
        return Err(invalid_query(format!("width must be at least {MIN_PAGE_WIDTH}")));
    }
    Ok(Json(json!({ "text": render_screenplay(&body.scene, width), "width": width })))
}

#[derive(Deserialize)]
struct ValidateBody {
    annotated: String,
}

/// 200 with the report when there are no errors, otherwise 400 carrying the
/// first error's code and the full report.
fn report_response(report: ValidationReport) -> ApiResult<Json<ValidationReport>> {
    match report.errors.first() {
        None => Ok(Json(report)),
        Some(first) => {
            let mut err = ApiError::tagged(BAD, first);
            err.fields.insert(
                "report".into(),
                serde_json::to_value(&report).expect("report serializes"),
            );
            Err(err)
        }
    }
}

async fn validate_plot_route(ApiJson(body): ApiJson<ValidateBody>) -> ApiResult<impl IntoResponse> {
    report_response(validate_annotated_plot(&body.annotated))
}

#[derive(Deserialize)]
struct AnnotateBody {
    plot: String,
    boundaries: [usize; 3],
}

async fn annotate_route(ApiJson(body): ApiJson<AnnotateBody>) -> ApiResult<impl IntoResponse> {
    let annotated = insert_act_tags(&body.plot, &ActBoundaries::new(body.boundaries))?;
    let acts = parse_acts(&annotated).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(json!({ "annotated": annotated, "acts": acts })))
}

async fn generate_plot_route(
    State(wb): State<AppState>,
    ApiJson(body): ApiJson<PlotRequest>,
) -> ApiResult<impl IntoResponse> {
    let item = blocking(move || Ok(wb.generate_plot(&body)?)).await?;
    Ok(Json(item))
}

async fn generate_scene_route(
    State(wb): State<AppState>,
    ApiJson(body): ApiJson<SceneRequest>,
) -> ApiResult<impl IntoResponse> {
    let item = blocking(move || Ok(wb.generate_scene(&body)?)).await?;
    Ok(Json(item))
}

#[derive(Deserialize)]
struct CreateDatasetBody {
    name: String,
}

async fn create_dataset_route(
    State(wb): State<AppState>,
    ApiJson(body): ApiJson<CreateDatasetBody>,
) -> ApiResult<impl IntoResponse> {
    let item = blocking(move || Ok(wb.create_dataset(&body.name)?)).await?;
    Ok((StatusCode::CREATED, Json(item)))
}

async fn list_datasets_route(State(wb): State<AppState>) -> impl IntoResponse {
    Json(json!({ "datasets": wb.datasets() }))
}

async fn get_dataset_route(
    State(wb): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(wb.dataset(&id)?))
}

/// Either `{"record": {...}}` or `{"records": [...]}`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AddRecordsBody {
    #[serde(default)]
    record: Option<DatasetRecord>,
    #[serde(default)]
    records: Option<Vec<DatasetRecord>>,
    #[serde(default)]
    mode: IngestMode,
}

async fn add_records_route(
    State(wb): State<AppState>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<AddRecordsBody>,
) -> ApiResult<Response> {
    blocking(move || match (body.record, body.records) {
        (Some(record), None) => {
            let added = wb.add_record(&id, record, body.mode)?;
            Ok((StatusCode::CREATED, Json(added)).into_response())
        }
        (None, Some(records)) => {
            let report = wb.add_records(&id, records, body.mode)?;
            Ok(Json(report).into_response())
        }
        _ => Err(ApiError::new(
            BAD,
            "InvalidJson",
            "body needs exactly one of `record` or `records`",
        )),
    })
    .await
}

#[derive(Deserialize)]
struct ExportQuery {
    profile: String,
}

async fn export_route(
    State(wb): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<ExportQuery>,
) -> ApiResult<impl IntoResponse> {
    let target = ExportTarget::parse(&q.profile).ok_or_else(|| {
        ApiError::new(
            BAD,
            "UnknownProfile",
            format!("unknown profile `{}` (expected O, AS, AL, ASG, ALG or scene)", q.profile),
        )
        .with("profile", &q.profile)
    })?;
    let body = wb.export(&id, target)?;
    Ok((
        [(header::CONTENT_TYPE, "application/jsonl; charset=utf-8")],
        body,
    ))
}

async fn dataset_stats_route(
    State(wb): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(wb.dataset_stats(&id)?))
}

#[derive(Deserialize)]
struct EvalBody {
    candidates: Vec<String>,
    references: Vec<String>,
    #[serde(default)]
    logprobs: Option<Vec<Vec<f64>>>,
}

async fn eval_route(ApiJson(body): ApiJson<EvalBody>) -> ApiResult<impl IntoResponse> {
    let report = blocking(move || {
        Ok(metric_report(
            &body.candidates,
            &body.references,
            body.logprobs.as_deref(),
        )?)
    })
    .await?;
    Ok(Json(report))
}

async fn add_rating_route(
    State(wb): State<AppState>,
    ApiJson(body): ApiJson<RatingRequest>,
) -> ApiResult<impl IntoResponse> {
    let item = blocking(move || Ok(wb.add_rating(body)?)).await?;
    Ok((StatusCode::CREATED, Json(item)))
}

#[derive(Deserialize)]
struct SummaryQuery {
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    item_id: Option<String>,
}

fn parse_kind(kind: Option<&str>) -> ApiResult<Option<ItemKind>> {
    kind.filter(|k| !k.is_empty())
        .map(|k| ItemKind::parse(k).ok_or_else(|| invalid_query(format!("unknown kind `{k}`"))))
        .transpose()
}

async fn rating_summary_route(
    State(wb): State<AppState>,
    ApiQuery(q): ApiQuery<SummaryQuery>,
) -> ApiResult<impl IntoResponse> {
    let kind = parse_kind(q.kind.as_deref())?;
    Ok(Json(wb.rating_summary(kind, q.item_id.as_deref())?))
}

async fn get_item_route(
    State(wb): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(wb.get(&id)?))
}

#[derive(Deserialize)]
struct ListQuery {
    #[serde(default)]
    kind: Option<String>,
    /// Id cursor: items strictly after it are returned.
    #[serde(default)]
    page: Option<String>,
    #[serde(default)]
    limit: Option<usize>,
}

async fn list_items_route(
    State(wb): State<AppState>,
    ApiQuery(q): ApiQuery<ListQuery>,
) -> ApiResult<impl IntoResponse> {
    let kind = parse_kind(q.kind.as_deref())?;
    let limit = q.limit.unwrap_or(DEFAULT_PAGE_SIZE);
    if !(1..=MAX_PAGE_SIZE).contains(&limit) {
        return Err(invalid_query(format!("limit must be in 1..={MAX_PAGE_SIZE}")));
    }
    let cursor = q.page.filter(|p| !p.is_empty());
    Ok(Json(wb.list(kind, cursor.as_deref(), limit)))
}

async fn healthz_route(State(wb): State<AppState>) -> impl IntoResponse {
    let backend = wb.generator().backend().clone();
    let identity = backend.identity();
    let reachable = tokio::task::spawn_blocking(move || backend.is_reachable())
        .await
        .unwrap_or(false);
    Json(json!({
        "status": "ok",
        "backend": identity,
        "backend_reachable": reachable,
    }))
}

async fn genres_route(State(wb): State<AppState>) -> impl IntoResponse {
    Json(json!({ "genres": wb.vocabulary().names() }))
}

async fn profiles_route() -> impl IntoResponse {
    Json(json!({ "profiles": GenerationProfile::all() }))
}

async fn defaults_route(State(wb): State<AppState>) -> impl IntoResponse {
    let d = SAMPLING_DEFAULTS;
    Json(json!({
        "config": wb.config().generation,
        "sampling": {
            "temperature": d.temperature,
            "top_p": d.top_p,
            "frequency_penalty": d.frequency_penalty,
            "presence_penalty": d.presence_penalty,
            "max_tokens": d.max_tokens,
        },
        "format": wb.config().format,
    }))
}

async fn fallback_route() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NoRoute", "no such endpoint")
}

async fn require_token(State(token): State<Arc<str>>, req: Request, next: Next) -> Response {
    if req.method() == Method::OPTIONS || req.uri().path() == "/api/v1/healthz" {
        return next.run(req).await;
    }
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(&*token) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong bearer token")
            .into_response()
    }
}

fn cors(config: &ServiceConfig) -> CorsLayer {
    let origins = if config.cors_origins.is_empty() {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(
            config
                .cors_origins
                .iter()
                .filter_map(|o| HeaderValue::from_str(o).ok()),
        )
    };
    CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any)
}

pub fn router(wb: AppState) -> Router {
    let cors = cors(wb.config());
    let token = wb.config().auth_token.clone();
    let api = Router::new()
        .route("/parse/script", post(parse_script_route))
        .route("/scenes/encode", post(encode_route))
        .route("/scenes/decode", post(decode_route))
        .route("/scenes/render", post(render_route))
        .route("/scenes/generate", post(generate_scene_route))
        .route("/plots/validate", post(validate_plot_route))
        .route("/plots/annotate", post(annotate_route))
        .route("/plots/generate", post(generate_plot_route))
        .route("/datasets", post(create_dataset_route).get(list_datasets_route))
        .route("/datasets/{id}", get(get_dataset_route))
        .route("/datasets/{id}/records", post(add_records_route))
        .route("/datasets/{id}/export", get(export_route))
        .route("/datasets/{id}/stats", get(dataset_stats_route))
        .route("/eval/report", post(eval_route))
        .route("/ratings", post(add_rating_route))
        .route("/ratings/summary", get(rating_summary_route))
        .route("/items", get(list_items_route))
        .route("/items/{id}", get(get_item_route))
        .route("/healthz", get(healthz_route))
        .route("/genres", get(genres_route))
        .route("/profiles", get(profiles_route))
        .route("/generation/defaults", get(defaults_route));
    let mut app = Router::new()
        .nest("/api/v1", api)
        .fallback(fallback_route)
        .with_state(wb);
    if let Some(token) = token {
        app = app.layer(middleware::from_fn_with_state(Arc::<str>::from(token), require_token));
    }
    app.layer(cors)
}

/// Opens the workbench from `config` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let addr = config.listen_address.clone();
    let wb = tokio::task::spawn_blocking(move || Workbench::open(config))
        .await?
        .map_err(|e: OpenError| anyhow::anyhow!(e))?;
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(address = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(wb)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
