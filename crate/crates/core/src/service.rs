//! HTTP interface to a workspace.
//!
//! JSON is the default media type. Table reads honour `Accept: text/csv`
//! and table writes accept `Content-Type: text/csv`. Tables and feature
//! values can be read as of a snapshot with an `@<snapshot>` suffix, dataset
//! members as of a version with `members@<version>`. Every response to a
//! write carries the catalog snapshot in the `Deriva-Snapshot` header.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::asset::AssetMeta;
use crate::catalog::{ColumnDef, ColumnKind, Filter, SnapshotId, TableDef, TableKind, Value, Values};
use crate::dataset::{BumpLevel, SemVer};
use crate::error::{Error, ErrorClass, Result};
use crate::execution::{ExecutionConfig, ExecutionHandle, ExecutionStatus};
use crate::feature::FeatureRecord;
use crate::provenance::Direction;
use crate::rid::Rid;
use crate::store::{split_version, PutOptions};
use crate::vocab::NewTerm;
use crate::workflow::WorkflowSpec;
use crate::workspace::Workspace;

pub const SNAPSHOT_HEADER: &str = "deriva-snapshot";
pub const SHA256_HEADER: &str = "x-content-sha256";
pub const MD5_HEADER: &str = "x-content-md5";
pub const VERSION_HEADER: &str = "x-object-version";

/// Error body: `{"code", "class", "message"}`, plus `execution` when an
/// execution was recorded as failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub class: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<Rid>,
}

pub fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::User => "user",
        ErrorClass::Integrity => "integrity",
        ErrorClass::Io => "io",
    }
}

/// HTTP status for a library error: 4xx for caller faults, 5xx for store
/// faults.
pub fn status_of(e: &Error) -> StatusCode {
    match e {
        _ if e.is_not_found() => StatusCode::NOT_FOUND,
        Error::StaleRid { .. } | Error::FutureSnapshot { .. } => StatusCode::NOT_FOUND,
        Error::DuplicateTable(_)
        | Error::Duplicate(_)
        | Error::TermCollision { .. }
        | Error::Conflict(_)
        | Error::InvalidState(_)
        | Error::NamespaceConflict(_)
        | Error::InboundReference { .. }
        | Error::Cycle { .. } => StatusCode::CONFLICT,
        Error::ChecksumMismatch { .. } | Error::InvalidBag(_) | Error::ExecutionFailed { .. } => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        Error::Transfer(_) => StatusCode::BAD_GATEWAY,
        Error::Integrity(_) | Error::Io(_) | Error::Index(_) | Error::VersionMismatch { .. } => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError {
            status: status_of(&e).as_u16(),
            code: e.code().to_string(),
            class: class_name(e.class()).to_string(),
            execution: match &e {
                Error::ExecutionFailed { execution, .. } => Some(execution.clone()),
                _ => None,
            },
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

struct AppState {
    ws: Workspace,
    handles: Mutex<HashMap<Rid, ExecutionHandle>>,
    exec_dir: PathBuf,
    counter: AtomicU64,
}

type Shared = Arc<AppState>;

/// Runs blocking catalog work off the async executor.
async fn blocking<T, F>(st: &Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T> + Send + 'static,
{
    let st = st.clone();
    tokio::task::spawn_blocking(move || {
        let _ = st.ws.catalog().refresh();
        f(&st)
    })
    .await
    .map_err(|e| ApiError::from(Error::InvalidState(format!("request task failed: {e}"))))?
    .map_err(ApiError::from)
}

fn bad(msg: impl Into<String>) -> ApiError {
    Error::InvalidArgument(msg.into()).into()
}

/// Splits `name@suffix`.
fn split_at(s: &str) -> (&str, Option<&str>) {
    match s.rsplit_once('@') {
        Some((name, suffix)) => (name, Some(suffix)),
        None => (s, None),
    }
}

fn parse_snapshot(s: Option<&str>) -> ApiResult<Option<SnapshotId>> {
    s.map(|v| {
        v.parse::<u64>()
            .map(SnapshotId)
            .map_err(|_| bad(format!("`{v}` is not a snapshot id")))
    })
    .transpose()
}

fn parse_rid(s: &str) -> ApiResult<Rid> {
    s.parse().map_err(|_| ApiError::from(Error::UnknownRid(s.to_string())))
}

fn wants_csv(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/csv"))
}

fn is_csv_body(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("text/csv"))
}

async fn stamp_snapshot(State(st): State<Shared>, req: Request, next: Next) -> Response {
    let write = !matches!(*req.method(), Method::GET | Method::HEAD);
    let mut resp = next.run(req).await;
    if write {
        let snap = st.ws.catalog().current_snapshot().0;
        resp.headers_mut().insert(
            HeaderName::from_static(SNAPSHOT_HEADER),
            HeaderValue::from(snap),
        );
    }
    resp
}

/// Builds the router for `ws`. Executions started over HTTP without an
/// explicit root run under `<workspace>/executions/`.
pub fn router(ws: Workspace) -> Router {
    let exec_dir = ws
        .catalog()
        .root()
        .map(|r| r.join("executions"))
        .unwrap_or_else(|| std::env::temp_dir().join("provcat-executions"));
    let st: Shared = Arc::new(AppState {
        ws,
        handles: Mutex::new(HashMap::new()),
        exec_dir,
        counter: AtomicU64::new(0),
    });
    Router::new()
        .route("/snapshot", get(current_snapshot))
        .route("/schema", get(list_schema).post(define_table))
        .route("/schema/{table}", get(show_table))
        .route(
            "/entity/{table}",
            get(get_entities).post(post_entities).put(put_entities).delete(delete_entities),
        )
        .route("/vocab", get(list_vocabs).post(create_vocab))
        .route("/vocab/{name}", get(list_terms).post(add_term))
        .route("/vocab/{name}/{term}", get(find_term))
        .route("/asset/{table}", post(upload_asset))
        .route("/dataset", get(list_datasets).post(create_dataset))
        .route("/dataset/disjoint", post(check_disjoint))
        .route("/dataset/{rid}", get(show_dataset))
        .route(
            "/dataset/{rid}/{tail}",
            get(dataset_get).post(dataset_post).delete(dataset_delete),
        )
        .route("/id", post(register_id))
        .route("/id/{minid}", get(resolve_id))
        .route("/store/{*path}", get(store_get).put(store_put))
        .route("/workflow", get(list_workflows).post(register_workflow))
        .route("/workflow/{rid}", get(show_workflow))
        .route("/feature", get(list_features).post(create_feature))
        .route("/feature/{target}/{name}", get(feature_values).post(add_feature_values))
        .route("/execution", get(list_executions).post(begin_execution))
        .route("/execution/reap", post(reap))
        .route("/execution/{rid}", get(show_execution))
        .route("/execution/{rid}/finish", post(finish_execution))
        .route("/execution/{rid}/status", post(update_status))
        .route("/lineage/{rid}", get(lineage))
        .layer(middleware::from_fn_with_state(st.clone(), stamp_snapshot))
        .with_state(st)
}

/// Serves `ws` on `addr` until ctrl-c.
pub async fn serve(ws: Workspace, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(ws))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// A server running on a background thread; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(ws: Workspace, addr: SocketAddr) -> Result<ServerHandle> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let _ = axum::serve(listener, router(ws))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(ServerHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

async fn current_snapshot(State(st): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    blocking(&st, |s| Ok(json!({ "snapshot": s.ws.catalog().current_snapshot().0 })))
        .await
        .map(Json)
}

// ---- schema ----

#[derive(Debug, Deserialize)]
struct DefineTable {
    name: String,
    #[serde(default)]
    kind: TableKind,
    #[serde(default)]
    columns: Vec<ColumnDef>,
}

async fn list_schema(State(st): State<Shared>) -> ApiResult<Json<Vec<TableDef>>> {
    blocking(&st, |s| s.ws.catalog().tables(None)).await.map(Json)
}

async fn show_table(State(st): State<Shared>, UrlPath(table): UrlPath<String>) -> ApiResult<Json<TableDef>> {
    let (name, at) = split_at(&table);
    let (name, at) = (name.to_string(), parse_snapshot(at)?);
    blocking(&st, move |s| s.ws.catalog().table_def(&name, at)).await.map(Json)
}

async fn define_table(State(st): State<Shared>, Json(req): Json<DefineTable>) -> ApiResult<(StatusCode, Json<TableDef>)> {
    let def = blocking(&st, move |s| {
        let cat = s.ws.catalog();
        let mut def = TableDef::domain(&req.name);
        def.columns = req.columns;
        let name = match req.kind {
            TableKind::Asset => cat.define_asset_table(def)?,
            TableKind::Vocabulary { curie_prefix } => cat.create_vocabulary(&req.name, &curie_prefix)?,
            kind => cat.define_table(def.with_kind(kind))?,
        };
        cat.table_def(&name, None)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(def)))
}

// ---- entities ----

fn typed(kind: Option<&ColumnKind>, text: &str) -> Value {
    match kind {
        Some(ColumnKind::Integer) => text.parse::<i64>().map(Value::Int).unwrap_or_else(|_| text.into()),
        Some(ColumnKind::Float) => text.parse::<f64>().map(Value::Float).unwrap_or_else(|_| text.into()),
        Some(ColumnKind::Boolean) => match text {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => text.into(),
        },
        _ => text.into(),
    }
}

fn rows_response(def: &TableDef, rows: &[crate::catalog::Row], csv: bool) -> Result<Response> {
    if csv {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(def.column_names())?;
        for r in rows {
            w.write_record(r.fields(def))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        return Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes).into_response());
    }
    let body: Vec<serde_json::Value> = rows.iter().map(|r| r.to_json(def)).collect();
    Ok(Json(body).into_response())
}

async fn get_entities(
    State(st): State<Shared>,
    UrlPath(table): UrlPath<String>,
    Query(params): Query<Vec<(String, String)>>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let (name, at) = split_at(&table);
    let (name, at) = (name.to_string(), parse_snapshot(at)?);
    let csv = wants_csv(&headers);
    blocking(&st, move |s| {
        let cat = s.ws.catalog();
        let def = cat.table_def(&name, at)?;
        let mut filter = Filter::all();
        let (mut limit, mut offset) = (None, 0usize);
        for (k, v) in params {
            match k.as_str() {
                "limit" => limit = Some(v.parse::<usize>().map_err(|_| Error::InvalidArgument("bad limit".into()))?),
                "offset" => offset = v.parse::<usize>().map_err(|_| Error::InvalidArgument("bad offset".into()))?,
                col => {
                    let kind = def.column_def(col).map(|c| &c.kind);
                    filter = filter.eq(col, typed(kind, &v));
                }
            }
        }
        let rows: Vec<_> = cat
            .query(&name, &filter, at)?
            .into_iter()
            .skip(offset)
            .take(limit.unwrap_or(usize::MAX))
            .collect();
        rows_response(&def, &rows, csv)
    })
    .await
}

/// Rows from a JSON object, a JSON array of objects, or CSV.
fn body_rows(def: &TableDef, headers: &HeaderMap, body: &[u8]) -> Result<Vec<Values>> {
    if is_csv_body(headers) {
        let mut reader = csv::Reader::from_reader(body);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut out = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let mut values = Values::new();
            for (h, cell) in header.iter().zip(rec.iter()) {
                if cell.is_empty() {
                    values.insert(h.clone(), Value::Null);
                } else {
                    values.insert(h.clone(), typed(def.column_def(h).map(|c| &c.kind), cell));
                }
            }
            out.push(values);
        }
        return Ok(out);
    }
    let v: serde_json::Value = serde_json::from_slice(body)?;
    let items = match v {
        serde_json::Value::Array(items) => items,
        obj @ serde_json::Value::Object(_) => vec![obj],
        _ => return Err(Error::InvalidArgument("expected a JSON object or array".into())),
    };
    items
        .into_iter()
        .map(|item| match item {
            serde_json::Value::Object(map) => Ok(map.into_iter().map(|(k, v)| (k, Value::from(v))).collect()),
            _ => Err(Error::InvalidArgument("rows must be JSON objects".into())),
        })
        .collect()
}

async fn post_entities(
    State(st): State<Shared>,
    UrlPath(table): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let csv = wants_csv(&headers);
    let resp = blocking(&st, move |s| {
        let cat = s.ws.catalog();
        let def = cat.table_def(&table, None)?;
        let rows = body_rows(&def, &headers, &body)?;
        let rids = cat.insert_entities(&table, rows)?;
        let stored = rids
            .iter()
            .map(|r| cat.get(&table, r, None).map(|x| x.expect("just inserted")))
            .collect::<Result<Vec<_>>>()?;
        rows_response(&def, &stored, csv)
    })
    .await?;
    Ok((StatusCode::CREATED, resp).into_response())
}

async fn put_entities(
    State(st): State<Shared>,
    UrlPath(table): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let csv = wants_csv(&headers);
    blocking(&st, move |s| {
        let cat = s.ws.catalog();
        let def = cat.table_def(&table, None)?;
        let mut updates = Vec::new();
        for mut row in body_rows(&def, &headers, &body)? {
            let rid = match row.remove("RID") {
                Some(Value::Text(t)) => t.parse::<Rid>().map_err(|_| Error::UnknownRid(t))?,
                _ => return Err(Error::InvalidArgument("every row needs a RID".into())),
            };
            row.remove("RCT");
            row.remove("RMT");
            updates.push((rid, row));
        }
        let rids: Vec<Rid> = updates.iter().map(|(r, _)| r.clone()).collect();
        cat.update_entities(&table, updates)?;
        let stored = rids
            .iter()
            .map(|r| cat.get(&table, r, None).map(|x| x.expect("just updated")))
            .collect::<Result<Vec<_>>>()?;
        rows_response(&def, &stored, csv)
    })
    .await
}

async fn delete_entities(
    State(st): State<Shared>,
    UrlPath(table): UrlPath<String>,
    Query(params): Query<Vec<(String, String)>>,
) -> ApiResult<Json<serde_json::Value>> {
    let rids = params
        .iter()
        .filter(|(k, _)| k == "RID")
        .map(|(_, v)| parse_rid(v))
        .collect::<ApiResult<Vec<_>>>()?;
    if rids.is_empty() {
        return Err(bad("DELETE needs at least one RID parameter"));
    }
    blocking(&st, move |s| {
        let snap = s.ws.catalog().delete_entities(&table, &rids)?;
        Ok(json!({ "deleted": rids, "snapshot": snap.0 }))
    })
    .await
    .map(Json)
}

// ---- vocabularies ----

#[derive(Debug, Deserialize)]
struct CreateVocab {
    name: String,
    curie_prefix: String,
}

async fn list_vocabs(State(st): State<Shared>) -> ApiResult<Json<Vec<String>>> {
    blocking(&st, |s| s.ws.catalog().list_vocabularies()).await.map(Json)
}

async fn create_vocab(State(st): State<Shared>, Json(req): Json<CreateVocab>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let name = blocking(&st, move |s| s.ws.catalog().create_vocabulary(&req.name, &req.curie_prefix)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "name": name }))))
}

async fn list_terms(State(st): State<Shared>, UrlPath(name): UrlPath<String>) -> ApiResult<Response> {
    blocking(&st, move |s| Ok(Json(s.ws.catalog().list_terms(&name)?).into_response())).await
}

async fn add_term(
    State(st): State<Shared>,
    UrlPath(name): UrlPath<String>,
    Json(term): Json<NewTerm>,
) -> ApiResult<Response> {
    blocking(&st, move |s| {
        Ok((StatusCode::CREATED, Json(s.ws.catalog().add_term(&name, term)?)).into_response())
    })
    .await
}

async fn find_term(State(st): State<Shared>, UrlPath((name, term)): UrlPath<(String, String)>) -> ApiResult<Response> {
    blocking(&st, move |s| Ok(Json(s.ws.catalog().lookup_term(&name, &term)?).into_response())).await
}

// ---- assets ----

#[derive(Debug, Deserialize)]
struct UploadParams {
    filename: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    md5: Option<String>,
}

async fn upload_asset(
    State(st): State<Shared>,
    UrlPath(table): UrlPath<String>,
    Query(p): Query<UploadParams>,
    body: Bytes,
) -> ApiResult<Response> {
    blocking(&st, move |s| {
        let meta = AssetMeta {
            description: p.description,
            md5: p.md5,
            ..Default::default()
        };
        let asset = s.ws.upload_asset_bytes(&table, &p.filename, &body, meta)?;
        Ok((StatusCode::CREATED, Json(asset)).into_response())
    })
    .await
}

// ---- datasets ----

#[derive(Debug, Deserialize)]
struct CreateDataset {
    #[serde(default)]
    description: String,
    #[serde(default)]
    types: Vec<String>,
    #[serde(default)]
    execution: Option<Rid>,
}

#[derive(Debug, Deserialize)]
struct MembersBody {
    members: Vec<Rid>,
    #[serde(default)]
    execution: Option<Rid>,
}

#[derive(Debug, Deserialize)]
struct BumpBody {
    level: BumpLevel,
    #[serde(default)]
    description: String,
    #[serde(default)]
    execution: Option<Rid>,
}

#[derive(Debug, Deserialize)]
struct DisjointBody {
    datasets: Vec<Rid>,
    #[serde(default = "yes")]
    flatten: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
struct FlattenParam {
    #[serde(default)]
    flatten: bool,
}

async fn list_datasets(State(st): State<Shared>) -> ApiResult<Response> {
    blocking(&st, |s| Ok(Json(s.ws.catalog().list_datasets()?).into_response())).await
}

async fn create_dataset(State(st): State<Shared>, Json(req): Json<CreateDataset>) -> ApiResult<Response> {
    blocking(&st, move |s| {
        let types: Vec<&str> = req.types.iter().map(String::as_str).collect();
        let (rid, version) = s
            .ws
            .catalog()
            .create_dataset(&req.description, &types, req.execution.as_ref())?;
        Ok((StatusCode::CREATED, Json(json!({ "rid": rid, "version": version }))).into_response())
    })
    .await
}

async fn check_disjoint(State(st): State<Shared>, Json(req): Json<DisjointBody>) -> ApiResult<Response> {
    blocking(&st, move |s| {
        let report = s.ws.catalog().check_disjoint(&req.datasets, req.flatten)?;
        Ok(Json(report).into_response())
    })
    .await
}

async fn show_dataset(State(st): State<Shared>, UrlPath(rid): UrlPath<String>) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    blocking(&st, move |s| Ok(Json(s.ws.catalog().dataset(&rid)?).into_response())).await
}

async fn dataset_get(
    State(st): State<Shared>,
    UrlPath((rid, tail)): UrlPath<(String, String)>,
    Query(p): Query<FlattenParam>,
) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    let (what, at) = split_at(&tail);
    let version = at
        .map(|v| v.parse::<SemVer>().map_err(ApiError::from))
        .transpose()?;
    match what {
        "versions" => blocking(&st, move |s| Ok(Json(s.ws.catalog().list_versions(&rid)?).into_response())).await,
        "members" => {
            blocking(&st, move |s| {
                let members = s.ws.catalog().dataset_members(&rid, version, p.flatten)?;
                Ok(Json(members).into_response())
            })
            .await
        }
        "parents" => blocking(&st, move |s| Ok(Json(s.ws.catalog().dataset_parents(&rid)?).into_response())).await,
        "children" => blocking(&st, move |s| Ok(Json(s.ws.catalog().dataset_children(&rid)?).into_response())).await,
        other => Err(Error::NotFound(format!("/dataset/{{rid}}/{other}")).into()),
    }
}

async fn dataset_post(
    State(st): State<Shared>,
    UrlPath((rid, tail)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    match tail.as_str() {
        "members" => {
            let req: MembersBody = serde_json::from_slice(&body).map_err(Error::from)?;
            blocking(&st, move |s| {
                let v = s.ws.catalog().add_members(&rid, &req.members, req.execution.as_ref())?;
                Ok(Json(json!({ "rid": rid, "version": v })).into_response())
            })
            .await
        }
        "version" => {
            let req: BumpBody = serde_json::from_slice(&body).map_err(Error::from)?;
            blocking(&st, move |s| {
                let v = s
                    .ws
                    .catalog()
                    .increment_version(&rid, req.level, &req.description, req.execution.as_ref())?;
                Ok((StatusCode::CREATED, Json(json!({ "rid": rid, "version": v }))).into_response())
            })
            .await
        }
        other => Err(Error::NotFound(format!("/dataset/{{rid}}/{other}")).into()),
    }
}

async fn dataset_delete(
    State(st): State<Shared>,
    UrlPath((rid, tail)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    if tail != "members" {
        return Err(Error::NotFound(format!("/dataset/{{rid}}/{tail}")).into());
    }
    let req: MembersBody = serde_json::from_slice(&body).map_err(Error::from)?;
    blocking(&st, move |s| {
        let v = s.ws.catalog().remove_members(&rid, &req.members, req.execution.as_ref())?;
        Ok(Json(json!({ "rid": rid, "version": v })).into_response())
    })
    .await
}

// ---- identifiers ----

#[derive(Debug, Deserialize)]
struct RegisterId {
    dataset: Rid,
    #[serde(default)]
    version: Option<SemVer>,
}

async fn register_id(State(st): State<Shared>, Json(req): Json<RegisterId>) -> ApiResult<Response> {
    blocking(&st, move |s| {
        let minid = s.ws.publish_dataset(&req.dataset, req.version)?;
        Ok((StatusCode::CREATED, Json(minid)).into_response())
    })
    .await
}

async fn resolve_id(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    blocking(&st, move |s| Ok(Json(s.ws.catalog().resolve_minid(&id)?).into_response())).await
}

// ---- object store ----

async fn store_get(State(st): State<Shared>, UrlPath(path): UrlPath<String>) -> ApiResult<Response> {
    let addr = format!("/{path}");
    blocking(&st, move |s| {
        let (p, version) = split_version(&addr);
        match s.ws.store().get(p, version) {
            Ok((bytes, obj)) => {
                let mut headers = HeaderMap::new();
                let ct = obj.content_type.clone();
                headers.insert(
                    header::CONTENT_TYPE,
                    HeaderValue::from_str(&ct).unwrap_or(HeaderValue::from_static("application/octet-stream")),
                );
                headers.insert(header::ETAG, HeaderValue::from_str(&format!("\"{}\"", obj.checksum)).expect("hex"));
                headers.insert(HeaderName::from_static(SHA256_HEADER), HeaderValue::from_str(&obj.checksum).expect("hex"));
                headers.insert(HeaderName::from_static(VERSION_HEADER), HeaderValue::from_str(&obj.version_id).expect("hex"));
                if let Some(md5) = &obj.md5 {
                    headers.insert(HeaderName::from_static(MD5_HEADER), HeaderValue::from_str(md5).expect("hex"));
                }
                Ok((headers, bytes).into_response())
            }
            Err(e) if e.is_not_found() => {
                let children = s.ws.store().list_namespace(p)?;
                if children.is_empty() {
                    Err(e)
                } else {
                    Ok(Json(children).into_response())
                }
            }
            Err(e) => Err(e),
        }
    })
    .await
}

async fn store_put(
    State(st): State<Shared>,
    UrlPath(path): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let text = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
    let opts = PutOptions {
        checksum: text(SHA256_HEADER),
        md5: text(MD5_HEADER),
        content_type: text(header::CONTENT_TYPE.as_str()),
    };
    let addr = format!("/{path}");
    blocking(&st, move |s| {
        let obj = s.ws.store().put_bytes(&addr, &body, opts)?;
        Ok((StatusCode::CREATED, Json(obj)).into_response())
    })
    .await
}

// ---- workflows and features ----

async fn list_workflows(State(st): State<Shared>) -> ApiResult<Response> {
    blocking(&st, |s| Ok(Json(s.ws.catalog().list_workflows()?).into_response())).await
}

async fn register_workflow(State(st): State<Shared>, Json(spec): Json<WorkflowSpec>) -> ApiResult<Response> {
    blocking(&st, move |s| {
        Ok((StatusCode::CREATED, Json(s.ws.catalog().register_workflow(&spec, None)?)).into_response())
    })
    .await
}

async fn show_workflow(State(st): State<Shared>, UrlPath(rid): UrlPath<String>) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    blocking(&st, move |s| Ok(Json(s.ws.catalog().workflow(&rid)?).into_response())).await
}

#[derive(Debug, Deserialize)]
struct CreateFeature {
    target: String,
    name: String,
    columns: Vec<ColumnDef>,
}

#[derive(Debug, Deserialize)]
struct TargetParam {
    #[serde(default)]
    target: Option<String>,
}

#[derive(Debug, Deserialize)]
struct FeatureValuesBody {
    execution: Rid,
    records: Vec<FeatureRecord>,
}

async fn list_features(State(st): State<Shared>, Query(p): Query<TargetParam>) -> ApiResult<Response> {
    blocking(&st, move |s| Ok(Json(s.ws.catalog().list_features(p.target.as_deref())?).into_response())).await
}

async fn create_feature(State(st): State<Shared>, Json(req): Json<CreateFeature>) -> ApiResult<Response> {
    blocking(&st, move |s| {
        let def = s.ws.catalog().create_feature(&req.target, &req.name, req.columns)?;
        Ok((StatusCode::CREATED, Json(def)).into_response())
    })
    .await
}

async fn feature_values(
    State(st): State<Shared>,
    UrlPath((target, name)): UrlPath<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let (name, at) = split_at(&name);
    let (name, at) = (name.to_string(), parse_snapshot(at)?);
    let csv = wants_csv(&headers);
    blocking(&st, move |s| {
        let cat = s.ws.catalog();
        let def = cat.feature(&target, &name)?;
        let rows = cat.feature_values(&target, &name, &Filter::all(), at)?;
        rows_response(&cat.table_def(&def.feature_table, at)?, &rows, csv)
    })
    .await
}

async fn add_feature_values(
    State(st): State<Shared>,
    UrlPath((target, name)): UrlPath<(String, String)>,
    Json(req): Json<FeatureValuesBody>,
) -> ApiResult<Response> {
    blocking(&st, move |s| {
        let rids = s
            .ws
            .catalog()
            .add_feature_values(&req.execution, &target, &name, req.records)?;
        Ok((StatusCode::CREATED, Json(rids)).into_response())
    })
    .await
}

// ---- executions ----

#[derive(Debug, Deserialize)]
struct RootParam {
    #[serde(default)]
    root: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct StatusParam {
    #[serde(default)]
    status: Option<ExecutionStatus>,
}

#[derive(Debug, Deserialize)]
struct FinishBody {
    #[serde(default = "completed")]
    status: ExecutionStatus,
    #[serde(default)]
    detail: Option<String>,
}

fn completed() -> ExecutionStatus {
    ExecutionStatus::Completed
}

#[derive(Debug, Deserialize)]
struct DetailBody {
    detail: String,
}

async fn list_executions(State(st): State<Shared>, Query(p): Query<StatusParam>) -> ApiResult<Response> {
    blocking(&st, move |s| Ok(Json(s.ws.catalog().list_executions(p.status)?).into_response())).await
}

async fn begin_execution(
    State(st): State<Shared>,
    Query(p): Query<RootParam>,
    body: Bytes,
) -> ApiResult<Response> {
    let text = std::str::from_utf8(&body).map_err(|_| bad("configuration is not UTF-8"))?;
    let config = ExecutionConfig::from_json(text)?;
    blocking(&st, move |s| {
        let root = p.root.unwrap_or_else(|| {
            s.exec_dir.join(format!(
                "run-{}-{}",
                s.ws.catalog().current_snapshot().0,
                s.counter.fetch_add(1, Ordering::Relaxed)
            ))
        });
        let handle = s.ws.execution_begin(&config, &root)?;
        let exec = s.ws.catalog().execution(handle.rid())?;
        s.handles
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(handle.rid().clone(), handle);
        Ok((StatusCode::CREATED, Json(exec)).into_response())
    })
    .await
}

async fn show_execution(State(st): State<Shared>, UrlPath(rid): UrlPath<String>) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    blocking(&st, move |s| {
        let cat = s.ws.catalog();
        Ok(Json(json!({
            "execution": cat.execution(&rid)?,
            "datasets": cat.execution_datasets(&rid)?,
            "assets": cat.execution_assets(&rid, None)?,
        }))
        .into_response())
    })
    .await
}

fn take_handle(s: &AppState, rid: &Rid) -> Result<ExecutionHandle> {
    let held = s.handles.lock().unwrap_or_else(|e| e.into_inner()).remove(rid);
    match held {
        Some(h) => Ok(h),
        None => s.ws.resume_execution(rid),
    }
}

async fn finish_execution(
    State(st): State<Shared>,
    UrlPath(rid): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    let req: FinishBody = if body.is_empty() {
        FinishBody {
            status: ExecutionStatus::Completed,
            detail: None,
        }
    } else {
        serde_json::from_slice(&body).map_err(Error::from)?
    };
    blocking(&st, move |s| {
        let handle = take_handle(s, &rid)?;
        let out = handle.finish(req.status, req.detail.as_deref())?;
        Ok(Json(out).into_response())
    })
    .await
}

async fn update_status(
    State(st): State<Shared>,
    UrlPath(rid): UrlPath<String>,
    Json(req): Json<DetailBody>,
) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    blocking(&st, move |s| {
        let handle = take_handle(s, &rid)?;
        let result = handle.update_status(&req.detail);
        s.handles.lock().unwrap_or_else(|e| e.into_inner()).insert(rid.clone(), handle);
        result?;
        Ok(Json(s.ws.catalog().execution(&rid)?).into_response())
    })
    .await
}

async fn reap(State(st): State<Shared>) -> ApiResult<Response> {
    blocking(&st, |s| Ok(Json(s.ws.reap()?).into_response())).await
}

// ---- lineage ----

#[derive(Debug, Deserialize)]
struct LineageParams {
    #[serde(default)]
    direction: Option<String>,
    #[serde(default)]
    depth: Option<usize>,
    #[serde(default)]
    format: Option<String>,
}

async fn lineage(
    State(st): State<Shared>,
    UrlPath(rid): UrlPath<String>,
    Query(p): Query<LineageParams>,
) -> ApiResult<Response> {
    let rid = parse_rid(&rid)?;
    let direction: Direction = p.direction.as_deref().unwrap_or("upstream").parse()?;
    blocking(&st, move |s| {
        let g = s.ws.catalog().lineage(&rid, direction, p.depth)?;
        Ok(match p.format.as_deref() {
            Some("dot") => ([(header::CONTENT_TYPE, "text/vnd.graphviz")], g.to_dot()).into_response(),
            Some("jsonl") => ([(header::CONTENT_TYPE, "application/x-ndjson")], g.to_jsonl()).into_response(),
            None | Some("json") => Json(g).into_response(),
            Some(other) => return Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        })
    })
    .await
}
