//! Command-line front end.
//!
//! Catalog operations are sent through the HTTP router: in-process when the
//! catalog is a local directory, over the network when it is a URL. Commands
//! that work on local files (bag export, validation, materialization,
//! running a script) call the library directly.
//!
//! Exit codes: 0 success, 1 user error, 2 integrity error, 3 I/O or service
//! error. Errors are printed to stderr as `code: message`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{header, Request};
use axum::Router;
use clap::{Args, Parser, Subcommand, ValueEnum};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::Deserialize;
use serde_json::{json, Value as Json};
use tower::ServiceExt;

use crate::bag::validate_bag;
use crate::catalog::{CatalogOptions, ClockMode, ColumnDef};
use crate::dataset::{BumpLevel, SemVer};
use crate::error::{Error, ErrorClass};
use crate::execution::{ExecutionConfig, ExecutionStatus};
use crate::feature::FeatureRecord;
use crate::rid::Rid;
use crate::service::{self, ApiError};
use crate::store::sha256_file;
use crate::workspace::Workspace;

pub const CATALOG_ENV: &str = "DERIVA_CATALOG";
pub const CACHE_ENV: &str = "DERIVA_CACHE";
pub const CONFIG_FILE: &str = ".deriva-ml.toml";

const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~').remove(b'@');

#[derive(Debug, Clone)]
pub struct CliError {
    pub code: String,
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    fn user(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            class: ErrorClass::User,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::User => 1,
            ErrorClass::Integrity => 2,
            ErrorClass::Io => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: e.code().into(),
            class: e.class(),
            message: e.to_string(),
        }
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        CliError {
            class: match e.class.as_str() {
                "integrity" => ErrorClass::Integrity,
                "io" => ErrorClass::Io,
                _ => ErrorClass::User,
            },
            code: e.code,
            message: e.message,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e).into()
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Json,
    /// Graphviz; lineage only.
    Dot,
    /// One JSON object per line; lineage only.
    Jsonl,
}

/// Settings from `~/.deriva-ml.toml`, the environment and flags, in
/// increasing priority.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct CliConfig {
    pub catalog: Option<String>,
    pub cache: Option<PathBuf>,
    pub format: Option<Format>,
}

impl CliConfig {
    pub fn from_file(path: &Path) -> CliResult<CliConfig> {
        match std::fs::read_to_string(path) {
            Ok(text) => toml::from_str(&text)
                .map_err(|e| CliError::user("invalid_config", format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(CliConfig::default()),
            Err(e) => Err(e.into()),
        }
    }

    /// Merges file, environment and flags.
    pub fn resolve(file: CliConfig, env: &dyn Fn(&str) -> Option<String>, flags: &GlobalArgs) -> CliConfig {
        let nonempty = |k: &str| env(k).filter(|v| !v.is_empty());
        CliConfig {
            catalog: flags.catalog.clone().or_else(|| nonempty(CATALOG_ENV)).or(file.catalog),
            cache: flags
                .cache
                .clone()
                .or_else(|| nonempty(CACHE_ENV).map(PathBuf::from))
                .or(file.cache),
            format: flags.format.or(file.format),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "provcat", version, about = "Versioned ML dataset catalog with provenance")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Catalog directory or service URL.
    #[arg(long, global = true)]
    pub catalog: Option<String>,
    /// Bag cache directory.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create, serve or inspect a catalog.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Define and show tables.
    #[command(subcommand)]
    Schema(SchemaCmd),
    /// Controlled vocabularies.
    #[command(subcommand)]
    Vocab(VocabCmd),
    /// Versioned datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Export, validate and materialize bags.
    #[command(subcommand)]
    Bag(BagCmd),
    /// Registered workflows.
    #[command(subcommand)]
    Workflow(WorkflowCmd),
    /// Run and manage executions.
    #[command(subcommand)]
    Exec(ExecCmd),
    /// Feature definitions and values.
    #[command(subcommand)]
    Feature(FeatureCmd),
    /// Provenance graph around a record.
    Lineage {
        rid: Rid,
        #[arg(long, conflicts_with_all = ["down", "both"])]
        up: bool,
        #[arg(long, conflicts_with = "both")]
        down: bool,
        #[arg(long)]
        both: bool,
        #[arg(long)]
        depth: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CatalogCmd {
    /// Creates a catalog directory.
    Init {
        path: PathBuf,
        #[arg(long, default_value = "1")]
        rid_prefix: String,
        /// Commit times derived from snapshot numbers (reproducible replays).
        #[arg(long)]
        logical_clock: bool,
        /// Base URL under which stored objects are addressed.
        #[arg(long)]
        base_url: Option<String>,
    },
    /// Serves the catalog over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Prints the current snapshot id.
    Snapshot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Plain,
    Asset,
    Association,
    Vocabulary,
}

#[derive(Debug, Subcommand)]
pub enum SchemaCmd {
    DefineTable {
        name: String,
        #[arg(long, value_enum, default_value = "plain")]
        kind: KindArg,
        /// `name:kind`, e.g. `Subject:rid_ref(Subject)` or `Age:integer?`.
        #[arg(long = "column", short = 'c')]
        columns: Vec<String>,
        #[arg(long, required_if_eq("kind", "vocabulary"))]
        curie_prefix: Option<String>,
    },
    /// Lists tables, or one table as of an optional snapshot.
    Show {
        table: Option<String>,
        #[arg(long)]
        at: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum VocabCmd {
    Create { name: String, curie_prefix: String },
    Add {
        vocabulary: String,
        name: String,
        #[arg(long = "synonym", short = 's')]
        synonyms: Vec<String>,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long)]
        curie: Option<String>,
        #[arg(long)]
        exist_ok: bool,
    },
    /// Looks a term up by name or synonym.
    Find { vocabulary: String, text: String },
    /// Lists vocabularies, or the terms of one.
    List { vocabulary: Option<String> },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    Create {
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long = "type", short = 't')]
        types: Vec<String>,
        #[arg(long)]
        execution: Option<Rid>,
    },
    AddMembers {
        dataset: Rid,
        #[arg(required = true)]
        members: Vec<Rid>,
        #[arg(long)]
        execution: Option<Rid>,
    },
    RemoveMembers {
        dataset: Rid,
        #[arg(required = true)]
        members: Vec<Rid>,
        #[arg(long)]
        execution: Option<Rid>,
    },
    /// Creates a new version; prints it.
    Bump {
        dataset: Rid,
        #[arg(long, default_value = "patch")]
        level: BumpLevel,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long)]
        execution: Option<Rid>,
    },
    Versions { dataset: Rid },
    Members {
        dataset: Rid,
        #[arg(long)]
        version: Option<SemVer>,
        /// Include members of nested datasets.
        #[arg(long)]
        flatten: bool,
    },
    /// Materializes a dataset version into the cache; prints its path.
    Download {
        dataset: Rid,
        #[arg(long)]
        version: Option<SemVer>,
    },
    CheckDisjoint {
        #[arg(required = true)]
        datasets: Vec<Rid>,
        /// Compare direct members only.
        #[arg(long)]
        no_flatten: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum BagCmd {
    Export {
        dataset: Rid,
        #[arg(long)]
        version: Option<SemVer>,
        #[arg(long)]
        dest: PathBuf,
        /// Publish the bag and register an identifier for it.
        #[arg(long)]
        register: bool,
    },
    Validate {
        bag: PathBuf,
        /// Recompute every payload digest.
        #[arg(long)]
        full: bool,
    },
    /// Fetches a bag (directory, archive, URL or minid) and its remote files.
    Materialize {
        location: String,
        #[arg(long)]
        dest: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum WorkflowCmd {
    Register {
        #[arg(long)]
        name: String,
        #[arg(long)]
        url: String,
        #[arg(long = "type")]
        workflow_type: String,
        #[arg(long)]
        version: Option<String>,
        #[arg(long)]
        checksum: Option<String>,
        #[arg(long)]
        description: Option<String>,
        /// Checksum this file instead of passing --checksum.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum ExecCmd {
    /// Starts an execution, runs the script in its root and finalizes it
    /// according to the script's exit status.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        root: PathBuf,
        /// Leave the execution running after the script exits.
        #[arg(long)]
        keep_running: bool,
    },
    /// Uploads outputs and marks the execution completed.
    Finish {
        rid: Rid,
        #[arg(long)]
        detail: Option<String>,
    },
    /// Uploads outputs and marks the execution failed.
    Fail {
        rid: Rid,
        #[arg(long)]
        detail: Option<String>,
    },
    /// Marks abandoned running executions failed.
    Reap,
    Show { rid: Rid },
}

#[derive(Debug, Subcommand)]
pub enum FeatureCmd {
    Define {
        target: String,
        name: String,
        #[arg(long = "column", short = 'c', required = true)]
        columns: Vec<String>,
    },
    /// Adds values from a CSV file with a column named after the target table.
    Add {
        target: String,
        name: String,
        #[arg(long)]
        execution: Rid,
        #[arg(long)]
        file: PathBuf,
    },
    Values {
        target: String,
        name: String,
        #[arg(long)]
        at: Option<u64>,
    },
}

/// A reply from the router.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> CliResult<Json> {
        Ok(serde_json::from_slice(&self.body)?)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

enum Backend {
    Local {
        ws: Workspace,
        router: Router,
        rt: tokio::runtime::Runtime,
    },
    Remote {
        base: String,
    },
}

/// Sends requests to a catalog, local or remote.
pub struct Client {
    backend: Backend,
}

impl Client {
    pub fn local(ws: Workspace) -> CliResult<Client> {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        Ok(Client {
            backend: Backend::Local {
                router: service::router(ws.clone()),
                ws,
                rt,
            },
        })
    }

    pub fn remote(base: &str) -> Client {
        Client {
            backend: Backend::Remote {
                base: base.trim_end_matches('/').to_string(),
            },
        }
    }

    /// Opens a directory or URL.
    pub fn connect(location: &str) -> CliResult<Client> {
        if location.starts_with("http://") || location.starts_with("https://") {
            Ok(Client::remote(location))
        } else {
            Client::local(Workspace::open(location)?)
        }
    }

    pub fn workspace(&self) -> Option<&Workspace> {
        match &self.backend {
            Backend::Local { ws, .. } => Some(ws),
            Backend::Remote { .. } => None,
        }
    }

    /// Sends a request; error statuses become `CliError`s.
    pub fn call(&self, method: &str, path: &str, body: Option<Json>) -> CliResult<Reply> {
        let reply = self.send(method, path, body)?;
        if reply.status >= 400 {
            return Err(match serde_json::from_slice::<ApiError>(&reply.body) {
                Ok(e) => e.into(),
                Err(_) => CliError {
                    code: "service_error".into(),
                    class: ErrorClass::Io,
                    message: format!("HTTP {}: {}", reply.status, reply.text()),
                },
            });
        }
        Ok(reply)
    }

    fn send(&self, method: &str, path: &str, body: Option<Json>) -> CliResult<Reply> {
        let bytes = body.map(|b| serde_json::to_vec(&b)).transpose()?;
        match &self.backend {
            Backend::Local { router, rt, .. } => {
                let mut req = Request::builder().method(method).uri(path);
                if bytes.is_some() {
                    req = req.header(header::CONTENT_TYPE, "application/json");
                }
                let req = req
                    .body(Body::from(bytes.unwrap_or_default()))
                    .map_err(|e| CliError::user("invalid_argument", e.to_string()))?;
                rt.block_on(async {
                    let resp = router.clone().oneshot(req).await.expect("router is infallible");
                    let status = resp.status().as_u16();
                    let body = axum::body::to_bytes(resp.into_body(), usize::MAX)
                        .await
                        .map_err(|e| CliError::from(Error::Transfer(e.to_string())))?;
                    Ok(Reply {
                        status,
                        body: body.to_vec(),
                    })
                })
            }
            Backend::Remote { base } => {
                let req = ureq::request(method, &format!("{base}{path}"));
                let result = match bytes {
                    Some(b) => req.set("Content-Type", "application/json").send_bytes(&b),
                    None => req.call(),
                };
                let resp = match result {
                    Ok(r) => r,
                    Err(ureq::Error::Status(_, r)) => r,
                    Err(e) => return Err(Error::Transfer(format!("{base}: {e}")).into()),
                };
                let status = resp.status();
                let mut body = Vec::new();
                resp.into_reader().read_to_end(&mut body)?;
                Ok(Reply { status, body })
            }
        }
    }
}

fn seg(s: &str) -> String {
    utf8_percent_encode(s, SEGMENT).to_string()
}

/// Runs the CLI on `args`, writing results to `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let msg = e.render().to_string();
                    let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
                    let _ = writeln!(err, "usage_error: {first}");
                    1
                }
            };
        }
    };
    let file = home_config().unwrap_or_else(|_| Ok(CliConfig::default()));
    let result = file.and_then(|file| {
        let cfg = CliConfig::resolve(file, &|k| std::env::var(k).ok(), &cli.global);
        execute(cli.command, &cfg, out)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}: {}", e.code, e.message.replace('\n', " "));
            e.exit_code()
        }
    }
}

fn home_config() -> std::result::Result<CliResult<CliConfig>, ()> {
    let home = std::env::var_os("HOME").ok_or(())?;
    Ok(CliConfig::from_file(&Path::new(&home).join(CONFIG_FILE)))
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

struct Ctx<'a> {
    cfg: &'a CliConfig,
    out: &'a mut dyn std::io::Write,
}

impl Ctx<'_> {
    fn format(&self) -> Format {
        self.cfg.format.unwrap_or(Format::Table)
    }

    fn client(&self) -> CliResult<Client> {
        let loc = self.cfg.catalog.as_deref().ok_or_else(|| {
            CliError::user(
                "no_catalog",
                format!("no catalog given (use --catalog, {CATALOG_ENV} or ~/{CONFIG_FILE})"),
            )
        })?;
        Client::connect(loc)
    }

    fn local(&self, what: &str) -> CliResult<Workspace> {
        let client = self.client()?;
        match client.backend {
            Backend::Local { ws, .. } => Ok(ws),
            Backend::Remote { .. } => Err(CliError::user(
                "local_catalog_required",
                format!("`{what}` needs a catalog directory, not a service URL"),
            )),
        }
    }

    fn cache_dir(&self, ws: &Workspace) -> PathBuf {
        self.cfg.cache.clone().unwrap_or_else(|| ws.default_cache_dir())
    }

    /// Prints a JSON result in the selected format.
    fn emit(&mut self, value: &Json) -> CliResult {
        let text = match self.format() {
            Format::Json => serde_json::to_string_pretty(value)? + "\n",
            Format::Table => render_table(value),
            f => {
                return Err(CliError::user(
                    "invalid_argument",
                    format!("--format {f:?} only applies to lineage").to_lowercase(),
                ))
            }
        };
        self.out.write_all(text.as_bytes())?;
        Ok(())
    }

    fn emit_reply(&mut self, reply: Reply) -> CliResult {
        let v = reply.json()?;
        self.emit(&v)
    }

    /// A single value in table mode, the whole object in JSON mode.
    fn emit_field(&mut self, value: &Json, field: &str) -> CliResult {
        if self.format() == Format::Table {
            if let Some(v) = value.get(field) {
                writeln!(self.out, "{}", cell(v))?;
                return Ok(());
            }
        }
        self.emit(value)
    }
}

fn cell(v: &Json) -> String {
    match v {
        Json::Null => String::new(),
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Aligned plain-text rendering of a JSON value.
pub fn render_table(v: &Json) -> String {
    let mut out = String::new();
    match v {
        Json::Array(items) if items.iter().all(Json::is_object) && !items.is_empty() => {
            let mut cols: Vec<String> = Vec::new();
            for item in items {
                for k in item.as_object().expect("object").keys() {
                    if !cols.contains(k) {
                        cols.push(k.clone());
                    }
                }
            }
            let rows: Vec<Vec<String>> = items
                .iter()
                .map(|item| cols.iter().map(|c| cell(item.get(c).unwrap_or(&Json::Null))).collect())
                .collect();
            let widths: Vec<usize> = cols
                .iter()
                .enumerate()
                .map(|(i, c)| rows.iter().map(|r| r[i].chars().count()).chain([c.len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: &[String]| {
                let mut s = String::new();
                for (i, c) in cells.iter().enumerate() {
                    if i + 1 == cells.len() {
                        s.push_str(c);
                    } else {
                        let _ = write!(s, "{c:<w$}  ", w = widths[i]);
                    }
                }
                s.trim_end().to_string() + "\n"
            };
            out.push_str(&line(&cols));
            for r in &rows {
                out.push_str(&line(r));
            }
        }
        Json::Array(items) => {
            for item in items {
                out.push_str(&cell(item));
                out.push('\n');
            }
        }
        Json::Object(map) => {
            let w = map.keys().map(String::len).max().unwrap_or(0);
            for (k, v) in map {
                let _ = writeln!(out, "{k:<w$}  {}", cell(v));
            }
        }
        other => {
            out.push_str(&cell(other));
            out.push('\n');
        }
    }
    out
}

fn columns(specs: &[String]) -> CliResult<Vec<ColumnDef>> {
    Ok(specs.iter().map(|s| ColumnDef::parse(s)).collect::<crate::Result<_>>()?)
}

fn execute(cmd: Command, cfg: &CliConfig, out: &mut dyn std::io::Write) -> CliResult {
    let mut cx = Ctx { cfg, out };
    if !matches!(cmd, Command::Lineage { .. }) && matches!(cx.format(), Format::Dot | Format::Jsonl) {
        return Err(CliError::user("invalid_argument", "dot and jsonl formats only apply to lineage"));
    }
    match cmd {
        Command::Catalog(c) => catalog_cmd(&mut cx, c),
        Command::Schema(c) => schema_cmd(&mut cx, c),
        Command::Vocab(c) => vocab_cmd(&mut cx, c),
        Command::Dataset(c) => dataset_cmd(&mut cx, c),
        Command::Bag(c) => bag_cmd(&mut cx, c),
        Command::Workflow(c) => workflow_cmd(&mut cx, c),
        Command::Exec(c) => exec_cmd(&mut cx, c),
        Command::Feature(c) => feature_cmd(&mut cx, c),
        Command::Lineage {
            rid,
            up: _,
            down,
            both,
            depth,
        } => {
            let direction = if both {
                "both"
            } else if down {
                "downstream"
            } else {
                "upstream"
            };
            let mut path = format!("/lineage/{rid}?direction={direction}");
            if let Some(d) = depth {
                let _ = write!(path, "&depth={d}");
            }
            let format = cx.format();
            match format {
                Format::Dot | Format::Jsonl => {
                    let name = if format == Format::Dot { "dot" } else { "jsonl" };
                    let reply = cx.client()?.call("GET", &format!("{path}&format={name}"), None)?;
                    cx.out.write_all(&reply.body)?;
                }
                Format::Json => {
                    let reply = cx.client()?.call("GET", &path, None)?;
                    cx.emit_reply(reply)?;
                }
                Format::Table => {
                    let g = cx.client()?.call("GET", &path, None)?.json()?;
                    let label = |n: &Json| match (n.get("dataset"), n.get("version")) {
                        (Some(Json::String(d)), Some(Json::String(v))) => {
                            format!("{} {d}@{v}", cell(&n["kind"]))
                        }
                        _ => format!("{} {} {}", cell(&n["kind"]), cell(&n["table"]), cell(&n["rid"])),
                    };
                    for n in g["nodes"].as_array().into_iter().flatten() {
                        writeln!(cx.out, "{}", label(n))?;
                    }
                    for e in g["edges"].as_array().into_iter().flatten() {
                        writeln!(
                            cx.out,
                            "{} -{}-> {}",
                            cell(&e["src"]),
                            cell(&e["relation"]),
                            cell(&e["dst"])
                        )?;
                    }
                }
            }
            Ok(())
        }
    }
}

fn catalog_cmd(cx: &mut Ctx, cmd: CatalogCmd) -> CliResult {
    match cmd {
        CatalogCmd::Init {
            path,
            rid_prefix,
            logical_clock,
            base_url,
        } => {
            let mut opts = CatalogOptions {
                rid_prefix,
                ..Default::default()
            };
            if logical_clock {
                opts.clock = ClockMode::Logical;
            }
            if let Some(url) = base_url {
                opts.options.insert(crate::workspace::BASE_URL_OPTION.into(), url);
            }
            let ws = Workspace::init(&path, opts)?;
            let root = path.canonicalize().unwrap_or(path);
            cx.emit_field(
                &json!({ "catalog": root, "snapshot": ws.catalog().current_snapshot().0 }),
                "catalog",
            )
        }
        CatalogCmd::Serve { bind } => {
            let ws = cx.local("catalog serve")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(ws, bind))?;
            Ok(())
        }
        CatalogCmd::Snapshot => {
            let v = cx.client()?.call("GET", "/snapshot", None)?.json()?;
            cx.emit_field(&v, "snapshot")
        }
    }
}

fn schema_cmd(cx: &mut Ctx, cmd: SchemaCmd) -> CliResult {
    let client = cx.client()?;
    match cmd {
        SchemaCmd::DefineTable {
            name,
            kind,
            columns: specs,
            curie_prefix,
        } => {
            let kind = match kind {
                KindArg::Plain => json!({"type": "plain"}),
                KindArg::Asset => json!({"type": "asset"}),
                KindArg::Association => json!({"type": "association"}),
                KindArg::Vocabulary => json!({"type": "vocabulary", "curie_prefix": curie_prefix}),
            };
            let body = json!({ "name": name, "kind": kind, "columns": columns(&specs)? });
            let v = client.call("POST", "/schema", Some(body))?.json()?;
            cx.emit_field(&v, "name")
        }
        SchemaCmd::Show { table: None, .. } => {
            let v = client.call("GET", "/schema", None)?.json()?;
            if cx.format() == Format::Table {
                let names: Vec<Json> = v.as_array().into_iter().flatten().map(|t| t["name"].clone()).collect();
                return cx.emit(&Json::Array(names));
            }
            cx.emit(&v)
        }
        SchemaCmd::Show { table: Some(t), at } => {
            let path = match at {
                Some(s) => format!("/schema/{}@{s}", seg(&t)),
                None => format!("/schema/{}", seg(&t)),
            };
            let v = client.call("GET", &path, None)?.json()?;
            if cx.format() == Format::Table {
                return cx.emit(&v["columns"]);
            }
            cx.emit(&v)
        }
    }
}

fn vocab_cmd(cx: &mut Ctx, cmd: VocabCmd) -> CliResult {
    let client = cx.client()?;
    let reply = match cmd {
        VocabCmd::Create { name, curie_prefix } => {
            let v = client
                .call("POST", "/vocab", Some(json!({ "name": name, "curie_prefix": curie_prefix })))?
                .json()?;
            return cx.emit_field(&v, "name");
        }
        VocabCmd::Add {
            vocabulary,
            name,
            synonyms,
            description,
            curie,
            exist_ok,
        } => client.call(
            "POST",
            &format!("/vocab/{}", seg(&vocabulary)),
            Some(json!({
                "name": name,
                "synonyms": synonyms,
                "description": description,
                "curie": curie,
                "exist_ok": exist_ok,
            })),
        )?,
        VocabCmd::Find { vocabulary, text } => {
            client.call("GET", &format!("/vocab/{}/{}", seg(&vocabulary), seg(&text)), None)?
        }
        VocabCmd::List { vocabulary: None } => client.call("GET", "/vocab", None)?,
        VocabCmd::List { vocabulary: Some(v) } => client.call("GET", &format!("/vocab/{}", seg(&v)), None)?,
    };
    cx.emit_reply(reply)
}

fn dataset_cmd(cx: &mut Ctx, cmd: DatasetCmd) -> CliResult {
    match cmd {
        DatasetCmd::Create {
            description,
            types,
            execution,
        } => {
            let v = cx
                .client()?
                .call(
                    "POST",
                    "/dataset",
                    Some(json!({ "description": description, "types": types, "execution": execution })),
                )?
                .json()?;
            cx.emit_field(&v, "rid")
        }
        DatasetCmd::AddMembers {
            dataset,
            members,
            execution,
        } => {
            let v = cx
                .client()?
                .call(
                    "POST",
                    &format!("/dataset/{dataset}/members"),
                    Some(json!({ "members": members, "execution": execution })),
                )?
                .json()?;
            cx.emit_field(&v, "version")
        }
        DatasetCmd::RemoveMembers {
            dataset,
            members,
            execution,
        } => {
            let v = cx
                .client()?
                .call(
                    "DELETE",
                    &format!("/dataset/{dataset}/members"),
                    Some(json!({ "members": members, "execution": execution })),
                )?
                .json()?;
            cx.emit_field(&v, "version")
        }
        DatasetCmd::Bump {
            dataset,
            level,
            description,
            execution,
        } => {
            let v = cx
                .client()?
                .call(
                    "POST",
                    &format!("/dataset/{dataset}/version"),
                    Some(json!({ "level": level, "description": description, "execution": execution })),
                )?
                .json()?;
            cx.emit_field(&v, "version")
        }
        DatasetCmd::Versions { dataset } => {
            let r = cx.client()?.call("GET", &format!("/dataset/{dataset}/versions"), None)?;
            cx.emit_reply(r)
        }
        DatasetCmd::Members {
            dataset,
            version,
            flatten,
        } => {
            let tail = match version {
                Some(v) => format!("members@{v}"),
                None => "members".into(),
            };
            let r = cx
                .client()?
                .call("GET", &format!("/dataset/{dataset}/{tail}?flatten={flatten}"), None)?;
            cx.emit_reply(r)
        }
        DatasetCmd::Download { dataset, version } => {
            let ws = cx.local("dataset download")?;
            let cache = cx.cache_dir(&ws);
            let m = ws.resolve_dataset(&dataset, version, &cache)?;
            cx.emit_field(&serde_json::to_value(&m)?, "path")
        }
        DatasetCmd::CheckDisjoint { datasets, no_flatten } => {
            let v = cx
                .client()?
                .call(
                    "POST",
                    "/dataset/disjoint",
                    Some(json!({ "datasets": datasets, "flatten": !no_flatten })),
                )?
                .json()?;
            if cx.format() == Format::Table {
                let overlaps = &v["overlaps"];
                if overlaps.as_array().is_none_or(Vec::is_empty) {
                    writeln!(cx.out, "disjoint")?;
                    return Ok(());
                }
                return cx.emit(overlaps);
            }
            cx.emit(&v)
        }
    }
}

fn bag_cmd(cx: &mut Ctx, cmd: BagCmd) -> CliResult {
    match cmd {
        BagCmd::Export {
            dataset,
            version,
            dest,
            register,
        } => {
            let ws = cx.local("bag export")?;
            let desc = ws.export_bag(&dataset, version, &dest)?;
            let mut v = json!({
                "dataset": desc.dataset,
                "version": desc.version,
                "path": dest,
                "checksum": desc.bag_checksum,
                "length": desc.length,
            });
            if register {
                let location = ws.publish_bag(&dest, &desc)?;
                let title = format!("Dataset {} version {}", desc.dataset, desc.version);
                let minid = ws.catalog().register_minid(&desc, &location, &title)?;
                v["minid"] = json!(minid.id);
                v["location"] = json!(location);
            }
            cx.emit(&v)
        }
        BagCmd::Validate { bag, full } => {
            let report = validate_bag(&bag, full)?;
            if report.is_valid() {
                return cx.emit_field(&json!({ "valid": true, "path": bag }), "valid");
            }
            for f in &report.failures {
                writeln!(cx.out, "{}\t{}", f.path, f.reason)?;
            }
            Err(CliError {
                code: "invalid_bag".into(),
                class: ErrorClass::Integrity,
                message: format!("{} failing: {}", bag.display(), report.failing_paths().join(", ")),
            })
        }
        BagCmd::Materialize { location, dest } => {
            let ws = cx.local("bag materialize")?;
            let path = if location.starts_with("minid:") {
                let minid = ws.catalog().resolve_minid(&location)?;
                let mut last = None;
                let mut done = None;
                for loc in &minid.locations {
                    match ws.materialize_bag(loc, &dest) {
                        Ok(p) => {
                            done = Some(p);
                            break;
                        }
                        Err(e) => last = Some(e),
                    }
                }
                match done {
                    Some(p) => p,
                    None => {
                        return Err(last
                            .unwrap_or_else(|| Error::Transfer(format!("{location} has no locations")))
                            .into())
                    }
                }
            } else {
                ws.materialize_bag(&location, &dest)?
            };
            cx.emit_field(&json!({ "path": path }), "path")
        }
    }
}

fn workflow_cmd(cx: &mut Ctx, cmd: WorkflowCmd) -> CliResult {
    let client = cx.client()?;
    match cmd {
        WorkflowCmd::Register {
            name,
            url,
            workflow_type,
            version,
            checksum,
            description,
            script,
        } => {
            let checksum = match (script, checksum) {
                (Some(path), declared) => {
                    let (digest, _) = sha256_file(&path)?;
                    if let Some(d) = declared.filter(|d| !d.eq_ignore_ascii_case(&digest)) {
                        return Err(Error::ChecksumMismatch {
                            expected: d,
                            actual: digest,
                        }
                        .into());
                    }
                    Some(digest)
                }
                (None, declared) => declared,
            };
            let body = json!({
                "name": name,
                "url": url,
                "workflow_type": workflow_type,
                "version": version,
                "checksum": checksum,
                "description": description,
            });
            let v = client.call("POST", "/workflow", Some(body))?.json()?;
            cx.emit_field(&v, "rid")
        }
        WorkflowCmd::List => {
            let r = client.call("GET", "/workflow", None)?;
            cx.emit_reply(r)
        }
    }
}

fn exec_cmd(cx: &mut Ctx, cmd: ExecCmd) -> CliResult {
    match cmd {
        ExecCmd::Run {
            config,
            script,
            root,
            keep_running,
        } => {
            let ws = cx.local("exec run")?;
            let ws = match &cx.cfg.cache {
                Some(c) => ws.with_cache_dir(c),
                None => ws,
            };
            let config = ExecutionConfig::from_file(&config)?;
            let handle = ws.execution_begin(&config, &root)?;
            let rid = handle.rid().clone();
            let status = handle.run_script(&script, &BTreeMap::new())?;
            if keep_running {
                return cx.emit_field(&json!({ "execution": rid, "status": "running" }), "execution");
            }
            let (final_status, detail) = if status.success() {
                (ExecutionStatus::Completed, None)
            } else {
                (ExecutionStatus::Failed, Some(format!("script exited with {status}")))
            };
            let outcome = handle.finish(final_status, detail.as_deref())?;
            cx.emit_field(&serde_json::to_value(&outcome)?["execution"], "rid")?;
            if outcome.execution.status != ExecutionStatus::Completed {
                return Err(Error::ExecutionFailed {
                    execution: rid,
                    detail: outcome.execution.status_detail.unwrap_or_default(),
                }
                .into());
            }
            Ok(())
        }
        ExecCmd::Finish { rid, detail } => finish(cx, rid, ExecutionStatus::Completed, detail),
        ExecCmd::Fail { rid, detail } => finish(cx, rid, ExecutionStatus::Failed, detail),
        ExecCmd::Reap => {
            let r = cx.client()?.call("POST", "/execution/reap", None)?;
            cx.emit_reply(r)
        }
        ExecCmd::Show { rid } => {
            let v = cx.client()?.call("GET", &format!("/execution/{rid}"), None)?.json()?;
            if cx.format() == Format::Table {
                cx.emit(&v["execution"])?;
                for d in v["datasets"].as_array().into_iter().flatten() {
                    writeln!(cx.out, "input dataset  {}", cell(d))?;
                }
                for a in v["assets"].as_array().into_iter().flatten() {
                    writeln!(cx.out, "{} asset  {} {}", cell(&a["role"]), cell(&a["table"]), cell(&a["asset"]))?;
                }
                return Ok(());
            }
            cx.emit(&v)
        }
    }
}

fn finish(cx: &mut Ctx, rid: Rid, status: ExecutionStatus, detail: Option<String>) -> CliResult {
    let v = cx
        .client()?
        .call(
            "POST",
            &format!("/execution/{rid}/finish"),
            Some(json!({ "status": status, "detail": detail })),
        )?
        .json()?;
    if cx.format() == Format::Table {
        let e = &v["execution"];
        writeln!(cx.out, "{} {}", cell(&e["rid"]), cell(&e["status"]))?;
        for f in v["failures"].as_array().into_iter().flatten() {
            writeln!(cx.out, "failure  {}", cell(f))?;
        }
        return Ok(());
    }
    cx.emit(&v)
}

fn feature_cmd(cx: &mut Ctx, cmd: FeatureCmd) -> CliResult {
    let client = cx.client()?;
    match cmd {
        FeatureCmd::Define {
            target,
            name,
            columns: specs,
        } => {
            let body = json!({ "target": target, "name": name, "columns": columns(&specs)? });
            let v = client.call("POST", "/feature", Some(body))?.json()?;
            cx.emit_field(&v, "feature_table")
        }
        FeatureCmd::Add {
            target,
            name,
            execution,
            file,
        } => {
            let records = read_values_csv(&file, &target)?;
            let body = json!({ "execution": execution, "records": records });
            let r = client.call("POST", &format!("/feature/{}/{}", seg(&target), seg(&name)), Some(body))?;
            cx.emit_reply(r)
        }
        FeatureCmd::Values { target, name, at } => {
            let name = match at {
                Some(s) => format!("{}@{s}", seg(&name)),
                None => seg(&name),
            };
            let r = client.call("GET", &format!("/feature/{}/{name}", seg(&target)), None)?;
            cx.emit_reply(r)
        }
    }
}

fn read_values_csv(file: &Path, target: &str) -> CliResult<Vec<FeatureRecord>> {
    let mut reader = csv::Reader::from_path(file).map_err(Error::from)?;
    let header: Vec<String> = reader.headers().map_err(Error::from)?.iter().map(str::to_string).collect();
    let tcol = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| CliError::user("invalid_argument", format!("{}: missing `{target}` column", file.display())))?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(Error::from)?;
        let rid: Rid = rec[tcol]
            .trim()
            .parse()
            .map_err(|_| CliError::user("unknown_rid", format!("`{}` is not a RID", &rec[tcol])))?;
        let values = header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != tcol)
            .map(|(i, h)| {
                let cell = rec[i].trim();
                let v = if cell.is_empty() {
                    crate::Value::Null
                } else {
                    crate::Value::from(cell)
                };
                (h.clone(), v)
            })
            .collect();
        records.push(FeatureRecord::new(rid, values));
    }
    Ok(records)
}
