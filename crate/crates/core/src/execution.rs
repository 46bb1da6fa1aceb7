//! Executions: recorded runs of a workflow with pinned inputs and captured
//! outputs.
//!
//! An execution root has this layout:
//!
//! ```text
//! <root>/parameters.json
//! <root>/inputs/datasets/<RID>/          materialized bag
//! <root>/inputs/assets/<Table>/<file>
//! <root>/outputs/<AssetTable>/...        uploaded at the end
//! <root>/features/<Target>/<Feature>/values.csv
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::asset::{asset_in, asset_row_values, safe_filename, Asset, AssetMeta};
use crate::catalog::bootstrap::{
    EXECUTION, EXECUTION_ASSET, EXECUTION_CONFIG, EXECUTION_DATASET, EXECUTION_LOG, WORKFLOW,
};
use crate::catalog::{
    format_timestamp, Catalog, ColumnKind, Filter, ReadView, Row, SchemaKind, Transaction, Value, Values,
};
use crate::dataset::{find_version, DatasetVersion, SemVer};
use crate::error::{Error, Result};
use crate::feature::{definitions, FeatureDefinition, FeatureRecord};
use crate::rid::Rid;
use crate::store::sha256_file;
use crate::values;
use crate::workflow::{checksum_of, register_in, Workflow, WorkflowSpec};
use crate::workspace::Workspace;

pub const PARAMETERS_ENV: &str = "DERIVA_ML_PARAMETERS";
pub const EXEC_ROOT_ENV: &str = "DERIVA_ML_EXEC_ROOT";
pub const EXECUTION_ENV: &str = "DERIVA_ML_EXECUTION";
pub const PARAMETERS_FILE: &str = "parameters.json";
pub const LOCK_FILE: &str = ".execution.lock";
pub const ORPHANED: &str = "orphaned";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionStatus {
    Created,
    Running,
    Completed,
    Failed,
}

impl ExecutionStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExecutionStatus::Created => "created",
            ExecutionStatus::Running => "running",
            ExecutionStatus::Completed => "completed",
            ExecutionStatus::Failed => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, ExecutionStatus::Completed | ExecutionStatus::Failed)
    }

    fn may_become(self, next: ExecutionStatus) -> bool {
        use ExecutionStatus::*;
        matches!((self, next), (Created, Running) | (Running, Completed) | (Running, Failed))
    }
}

impl fmt::Display for ExecutionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExecutionStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "created" => Ok(ExecutionStatus::Created),
            "running" => Ok(ExecutionStatus::Running),
            "completed" => Ok(ExecutionStatus::Completed),
            "failed" => Ok(ExecutionStatus::Failed),
            other => Err(Error::InvalidArgument(format!("unknown execution status `{other}`"))),
        }
    }
}

/// The workflow an execution runs: a registered RID or a spec to register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkflowRef {
    Rid(Rid),
    Spec(WorkflowSpec),
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInput {
    pub rid: Rid,
    /// Latest when absent; pinned in the stored configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<SemVer>,
    #[serde(default = "default_true")]
    pub materialize: bool,
}

impl DatasetInput {
    pub fn new(rid: Rid, version: Option<SemVer>) -> Self {
        DatasetInput {
            rid,
            version,
            materialize: true,
        }
    }
}

/// The structured document an execution is started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    pub workflow: WorkflowRef,
    #[serde(default)]
    pub datasets: Vec<DatasetInput>,
    #[serde(default)]
    pub assets: Vec<Rid>,
    #[serde(default, deserialize_with = "unique_keys")]
    pub parameters: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub description: String,
}

fn unique_keys<'de, D>(d: D) -> std::result::Result<BTreeMap<String, serde_json::Value>, D::Error>
where
    D: Deserializer<'de>,
{
    struct Unique;
    impl<'de> Visitor<'de> for Unique {
        type Value = BTreeMap<String, serde_json::Value>;
        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map of parameters")
        }
        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((k, v)) = map.next_entry::<String, serde_json::Value>()? {
                if out.insert(k.clone(), v).is_some() {
                    return Err(serde::de::Error::custom(format!("duplicate parameter `{k}`")));
                }
            }
            Ok(out)
        }
    }
    d.deserialize_map(Unique)
}

impl ExecutionConfig {
    pub fn new(workflow: WorkflowRef) -> Self {
        ExecutionConfig {
            workflow,
            datasets: Vec::new(),
            assets: Vec::new(),
            parameters: BTreeMap::new(),
            description: String::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExecutionConfig = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dataset(mut self, rid: Rid, version: Option<SemVer>) -> Self {
        self.datasets.push(DatasetInput::new(rid, version));
        self
    }

    pub fn asset(mut self, rid: Rid) -> Self {
        self.assets.push(rid);
        self
    }

    pub fn parameter(mut self, key: impl Into<String>, value: impl Into<serde_json::Value>) -> Self {
        self.parameters.insert(key.into(), value.into());
        self
    }

    pub fn description(mut self, d: impl Into<String>) -> Self {
        self.description = d.into();
        self
    }

    fn check(&self) -> Result<()> {
        for (k, v) in &self.parameters {
            if v.is_object() || v.is_array() {
                return Err(Error::InvalidArgument(format!("parameter `{k}` must be a scalar")));
            }
        }
        let mut seen = BTreeSet::new();
        for d in &self.datasets {
            if !seen.insert(&d.rid) {
                return Err(Error::InvalidArgument(format!("dataset {} listed twice", d.rid)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub rid: Rid,
    pub workflow: Option<Rid>,
    pub status: ExecutionStatus,
    pub status_detail: Option<String>,
    pub started: Option<DateTime<Utc>>,
    pub stopped: Option<DateTime<Utc>>,
    /// Seconds between start and stop.
    pub duration: Option<f64>,
    pub description: Option<String>,
    pub config_asset: Option<Rid>,
    pub working_dir: Option<String>,
}

fn parse_ts(row: &Row, col: &str) -> Option<DateTime<Utc>> {
    row.text(col)
        .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
        .map(|t| t.with_timezone(&Utc))
}

impl Execution {
    fn from_row(row: &Row) -> Result<Execution> {
        Ok(Execution {
            rid: row.rid.clone(),
            workflow: row.rid_at("Workflow"),
            status: row.text("Status").unwrap_or_default().parse()?,
            status_detail: row.text("Status_Detail").map(str::to_string),
            started: parse_ts(row, "Started"),
            stopped: parse_ts(row, "Stopped"),
            duration: row.get("Duration").and_then(Value::as_f64),
            description: row.text("Description").map(str::to_string),
            config_asset: row.rid_at("Config_Asset"),
            working_dir: row.text("Working_Dir").map(str::to_string),
        })
    }
}

/// A link between an execution and an asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetLink {
    pub execution: Rid,
    pub asset: Rid,
    pub table: String,
    pub role: String,
}

impl AssetLink {
    fn from_row(row: &Row) -> Option<AssetLink> {
        Some(AssetLink {
            execution: row.rid_at("Execution")?,
            asset: row.rid_at("Asset")?,
            table: row.text("Asset_Table")?.to_string(),
            role: row.text("Asset_Role")?.to_string(),
        })
    }
}

pub(crate) fn execution_in(view: &impl ReadView, rid: &Rid) -> Result<Execution> {
    let row = view
        .row(EXECUTION, rid)?
        .ok_or_else(|| Error::NotFound(format!("execution {rid}")))?;
    Execution::from_row(&row)
}

pub(crate) fn asset_links(view: &impl ReadView, filter: Filter) -> Result<Vec<AssetLink>> {
    Ok(view
        .rows(EXECUTION_ASSET, &filter)?
        .iter()
        .filter_map(AssetLink::from_row)
        .collect())
}

pub(crate) fn dataset_links(view: &impl ReadView, execution: &Rid) -> Result<Vec<DatasetVersion>> {
    let mut out = Vec::new();
    for row in view.rows(EXECUTION_DATASET, &Filter::all().eq("Execution", execution))? {
        let Some(dv) = row.rid_at("Dataset_Version") else { continue };
        if let Some(r) = view.row(crate::catalog::bootstrap::DATASET_VERSION, &dv)? {
            out.push(DatasetVersion::from_row(&r)?);
        }
    }
    Ok(out)
}

fn link_asset_in(tx: &mut Transaction<'_>, execution: &Rid, asset: &Rid, table: &str, role: &str) -> Result<()> {
    let existing = tx.query(
        EXECUTION_ASSET,
        &Filter::all()
            .eq("Execution", execution)
            .eq("Asset", asset)
            .eq("Asset_Role", role),
    )?;
    if existing.is_empty() {
        tx.insert(
            EXECUTION_ASSET,
            values! {
                "Execution" => execution,
                "Asset" => asset,
                "Asset_Table" => table,
                "Asset_Role" => role,
            },
        )?;
    }
    Ok(())
}

/// Applies a status transition, rejecting anything outside
/// created -> running -> {completed, failed}.
fn transition_in(
    tx: &mut Transaction<'_>,
    rid: &Rid,
    next: ExecutionStatus,
    detail: Option<String>,
) -> Result<Execution> {
    let current = execution_in(tx, rid)?;
    if !current.status.may_become(next) {
        return Err(Error::InvalidState(format!(
            "execution {rid} cannot go from {} to {next}",
            current.status
        )));
    }
    let now = tx.timestamp();
    let mut values = values! { "Status" => next.as_str() };
    if let Some(d) = detail {
        values.insert("Status_Detail".into(), d.into());
    }
    match next {
        ExecutionStatus::Running => {
            values.insert("Started".into(), format_timestamp(&now).into());
        }
        ExecutionStatus::Completed | ExecutionStatus::Failed => {
            values.insert("Stopped".into(), format_timestamp(&now).into());
            let started = current.started.unwrap_or(now);
            let secs = (now - started).num_microseconds().unwrap_or(0) as f64 / 1e6;
            values.insert("Duration".into(), secs.into());
        }
        ExecutionStatus::Created => {}
    }
    tx.update(EXECUTION, rid, values)?;
    execution_in(tx, rid)
}

fn join_detail(parts: &[String]) -> Option<String> {
    if parts.is_empty() {
        None
    } else {
        Some(parts.join("; "))
    }
}

/// Exclusive lock on an execution root, held while a handle is alive.
#[derive(Debug)]
struct RootLock(File);

impl RootLock {
    fn open(root: &Path) -> Result<File> {
        Ok(OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(root.join(LOCK_FILE))?)
    }

    fn acquire(root: &Path) -> Result<RootLock> {
        let f = Self::open(root)?;
        match f.try_lock() {
            Ok(()) => Ok(RootLock(f)),
            Err(fs::TryLockError::WouldBlock) => Err(Error::Conflict(format!(
                "execution root {} is in use",
                root.display()
            ))),
            Err(fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }

    /// True if some live handle holds the lock on `root`.
    fn is_held(root: &Path) -> bool {
        let Ok(f) = OpenOptions::new().write(true).open(root.join(LOCK_FILE)) else {
            return false;
        };
        match f.try_lock() {
            Ok(()) => {
                let _ = f.unlock();
                false
            }
            Err(_) => true,
        }
    }
}

impl Drop for RootLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

/// A staged dataset input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedDataset {
    pub dataset: Rid,
    pub version: SemVer,
    pub version_rid: Rid,
    /// Materialized bag, when requested.
    pub path: Option<PathBuf>,
}

/// A staged asset input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedAsset {
    pub asset: Asset,
    pub path: PathBuf,
}

/// A running execution. Dropping the handle without calling
/// [`ExecutionHandle::finish`] leaves the execution running until it is
/// resumed or reaped.
#[derive(Debug)]
pub struct ExecutionHandle {
    ws: Workspace,
    rid: Rid,
    workflow: Option<Workflow>,
    root: PathBuf,
    config: ExecutionConfig,
    datasets: Vec<StagedDataset>,
    assets: Vec<StagedAsset>,
    _lock: RootLock,
}

/// Unified outcome of resolving a config against the catalog.
struct Pinned {
    workflow: std::result::Result<Workflow, String>,
    datasets: Vec<(DatasetInput, std::result::Result<DatasetVersion, String>)>,
    assets: Vec<(Rid, std::result::Result<Asset, String>)>,
}

impl Pinned {
    fn errors(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = &self.workflow {
            out.push(e.clone());
        }
        out.extend(self.datasets.iter().filter_map(|(_, r)| r.as_ref().err().cloned()));
        out.extend(self.assets.iter().filter_map(|(_, r)| r.as_ref().err().cloned()));
        out
    }
}

fn pin_in(tx: &mut Transaction<'_>, config: &ExecutionConfig) -> Result<Pinned> {
    let workflow = match &config.workflow {
        WorkflowRef::Rid(rid) => match tx.get(WORKFLOW, rid)? {
            Some(row) => Ok(Workflow::from_row(&row)),
            None => Err(format!("workflow {rid} not found")),
        },
        WorkflowRef::Spec(spec) => match &spec.checksum {
            Some(_) => checksum_of(spec, None)
                .and_then(|c| register_in(tx, spec, &c))
                .map_err(|e| format!("workflow: {e}")),
            None => Err(format!("inline workflow `{}` has no checksum", spec.name)),
        },
    };
    let mut datasets = Vec::new();
    for d in &config.datasets {
        let r = find_version(tx, &d.rid, d.version).map_err(|e| format!("dataset {}: {e}", d.rid));
        datasets.push((d.clone(), r));
    }
    let mut assets = Vec::new();
    for a in &config.assets {
        let r = asset_in(tx, a).map_err(|e| format!("asset {a}: {e}"));
        assets.push((a.clone(), r));
    }
    Ok(Pinned {
        workflow,
        datasets,
        assets,
    })
}

fn link_dir(src: &Path, dest: &Path) -> Result<()> {
    if dest.exists() || dest.symlink_metadata().is_ok() {
        if dest.is_dir() && !dest.symlink_metadata()?.file_type().is_symlink() {
            fs::remove_dir_all(dest)?;
        } else {
            fs::remove_file(dest)?;
        }
    }
    #[cfg(unix)]
    {
        std::os::unix::fs::symlink(src, dest)?;
    }
    #[cfg(not(unix))]
    {
        for entry in walkdir::WalkDir::new(src) {
            let entry = entry.map_err(|e| Error::Io(e.into()))?;
            let rel = entry.path().strip_prefix(src).expect("under src");
            let out = dest.join(rel);
            if entry.file_type().is_dir() {
                fs::create_dir_all(&out)?;
            } else {
                fs::copy(entry.path(), &out)?;
            }
        }
    }
    Ok(())
}

fn make_layout(ws: &Workspace, root: &Path) -> Result<()> {
    fs::create_dir_all(root.join("inputs").join("datasets"))?;
    fs::create_dir_all(root.join("inputs").join("assets"))?;
    for def in ws.catalog().tables(None)? {
        if def.is_asset() && (def.schema == SchemaKind::Domain || def.name == EXECUTION_LOG) {
            fs::create_dir_all(root.join("outputs").join(&def.name))?;
        }
    }
    for f in definitions(&ws.catalog().at(None)?, &Filter::all())? {
        fs::create_dir_all(root.join("features").join(&f.target_table).join(&f.feature_name))?;
    }
    Ok(())
}

impl Workspace {
    /// Starts an execution rooted at `exec_root`.
    ///
    /// The execution is recorded before any input is resolved, so a config
    /// naming a missing workflow, dataset version or asset still leaves a
    /// failed execution behind; the error is [`Error::ExecutionFailed`].
    pub fn execution_begin(&self, config: &ExecutionConfig, exec_root: &Path) -> Result<ExecutionHandle> {
        config.check()?;
        fs::create_dir_all(exec_root)?;
        let root = exec_root.canonicalize()?;
        let lock = RootLock::acquire(&root)?;

        let rid = self.catalog().write(|tx| {
            let rid = tx.insert(
                EXECUTION,
                values! {
                    "Status" => ExecutionStatus::Created.as_str(),
                    "Description" => (!config.description.is_empty()).then(|| config.description.clone()),
                    "Working_Dir" => root.to_string_lossy().into_owned(),
                },
            )?;
            Ok(rid)
        })?.value;

        let pinned = self.catalog().write(|tx| {
            let pinned = pin_in(tx, config)?;
            let mut stored = config.clone();
            if let Ok(wf) = &pinned.workflow {
                stored.workflow = WorkflowRef::Rid(wf.rid.clone());
            }
            for (slot, (_, r)) in stored.datasets.iter_mut().zip(&pinned.datasets) {
                if let Ok(v) = r {
                    slot.version = Some(v.version);
                }
            }
            let json = stored.to_json();
            let name = format!("config-{}.json", &crate::store::sha256_hex(json.as_bytes())[..12]);
            let obj = self.store_asset_bytes(EXECUTION_CONFIG, &name, json.as_bytes(), None)?;
            let config_rid = tx.insert(
                EXECUTION_CONFIG,
                asset_row_values(&obj, &name, AssetMeta::described(format!("configuration of execution {rid}"))),
            )?;
            link_asset_in(tx, &rid, &config_rid, EXECUTION_CONFIG, "input")?;
            let mut values = values! { "Config_Asset" => &config_rid };
            if let Ok(wf) = &pinned.workflow {
                values.insert("Workflow".into(), Value::from(&wf.rid));
            }
            tx.update(EXECUTION, &rid, values)?;
            transition_in(tx, &rid, ExecutionStatus::Running, None)?;
            Ok((pinned, stored))
        });
        let (pinned, stored) = match pinned {
            Ok(c) => c.value,
            Err(e) => {
                let detail = e.to_string();
                self.fail_quietly(&rid, &detail);
                return Err(Error::ExecutionFailed { execution: rid, detail });
            }
        };

        let mut errors = pinned.errors();
        let mut datasets = Vec::new();
        let mut assets = Vec::new();
        if errors.is_empty() {
            if let Err(e) = make_layout(self, &root) {
                errors.push(format!("layout: {e}"));
            }
        }
        if errors.is_empty() {
            let cache = self.default_cache_dir();
            for (input, r) in &pinned.datasets {
                let dv = r.as_ref().expect("no pin errors");
                let mut staged = StagedDataset {
                    dataset: dv.dataset.clone(),
                    version: dv.version,
                    version_rid: dv.rid.clone(),
                    path: None,
                };
                if input.materialize {
                    let dest = root.join("inputs").join("datasets").join(dv.dataset.as_str());
                    match self
                        .resolve_dataset(&dv.dataset, Some(dv.version), &cache)
                        .and_then(|m| link_dir(&m.path, &dest).map(|_| m))
                    {
                        Ok(_) => staged.path = Some(dest),
                        Err(e) => errors.push(format!("dataset {} {}: {e}", dv.dataset, dv.version)),
                    }
                }
                datasets.push(staged);
            }
            for (rid_a, r) in &pinned.assets {
                let a = r.as_ref().expect("no pin errors");
                let dest = root
                    .join("inputs")
                    .join("assets")
                    .join(&a.table)
                    .join(safe_filename(&a.filename));
                match self.download_asset(rid_a, &dest) {
                    Ok(asset) => assets.push(StagedAsset { asset, path: dest }),
                    Err(e) => errors.push(format!("asset {rid_a}: {e}")),
                }
            }
        }

        let detail = join_detail(&errors);
        let linked = self.catalog().write(|tx| {
            for (_, r) in &pinned.datasets {
                if let Ok(dv) = r {
                    tx.insert(
                        EXECUTION_DATASET,
                        values! { "Execution" => &rid, "Dataset_Version" => &dv.rid },
                    )?;
                }
            }
            for (_, r) in &pinned.assets {
                if let Ok(a) = r {
                    link_asset_in(tx, &rid, &a.rid, &a.table, "input")?;
                }
            }
            if let Some(d) = &detail {
                transition_in(tx, &rid, ExecutionStatus::Failed, Some(d.clone()))?;
            }
            Ok(())
        });
        if let Err(e) = linked {
            let detail = e.to_string();
            self.fail_quietly(&rid, &detail);
            return Err(Error::ExecutionFailed { execution: rid, detail });
        }
        if let Some(detail) = detail {
            return Err(Error::ExecutionFailed { execution: rid, detail });
        }
        Ok(ExecutionHandle {
            ws: self.clone(),
            rid,
            workflow: pinned.workflow.ok(),
            root,
            config: stored,
            datasets,
            assets,
            _lock: lock,
        })
    }

    fn fail_quietly(&self, rid: &Rid, detail: &str) {
        let _ = self.catalog().write(|tx| {
            let current = execution_in(tx, rid)?;
            if current.status == ExecutionStatus::Created {
                transition_in(tx, rid, ExecutionStatus::Running, None)?;
            }
            transition_in(tx, rid, ExecutionStatus::Failed, Some(detail.to_string()))
        });
    }

    /// Rebuilds a handle for a running execution, e.g. in a new process.
    pub fn resume_execution(&self, rid: &Rid) -> Result<ExecutionHandle> {
        let exec = self.catalog().execution(rid)?;
        if exec.status != ExecutionStatus::Running {
            return Err(Error::InvalidState(format!("execution {rid} is {}", exec.status)));
        }
        let root = PathBuf::from(
            exec.working_dir
                .clone()
                .ok_or_else(|| Error::InvalidState(format!("execution {rid} has no working directory")))?,
        );
        fs::create_dir_all(&root)?;
        let lock = RootLock::acquire(&root)?;
        let config = self.execution_config(rid)?;
        let workflow = exec.workflow.as_ref().map(|w| self.catalog().workflow(w)).transpose()?;
        let view = self.catalog().at(None)?;
        let datasets = dataset_links(&view, rid)?
            .into_iter()
            .map(|dv| {
                let path = root.join("inputs").join("datasets").join(dv.dataset.as_str());
                StagedDataset {
                    path: path.exists().then_some(path),
                    dataset: dv.dataset,
                    version: dv.version,
                    version_rid: dv.rid,
                }
            })
            .collect();
        let mut assets = Vec::new();
        for link in asset_links(&view, Filter::all().eq("Execution", rid).eq("Asset_Role", "input"))? {
            if link.table == EXECUTION_CONFIG {
                continue;
            }
            let asset = asset_in(&view, &link.asset)?;
            let path = root
                .join("inputs")
                .join("assets")
                .join(&asset.table)
                .join(safe_filename(&asset.filename));
            assets.push(StagedAsset { asset, path });
        }
        Ok(ExecutionHandle {
            ws: self.clone(),
            rid: rid.clone(),
            workflow,
            root,
            config,
            datasets,
            assets,
            _lock: lock,
        })
    }

    /// The configuration document stored with an execution, with dataset
    /// versions pinned.
    pub fn execution_config(&self, rid: &Rid) -> Result<ExecutionConfig> {
        let exec = self.catalog().execution(rid)?;
        let asset = exec
            .config_asset
            .ok_or_else(|| Error::NotFound(format!("configuration of execution {rid}")))?;
        let (_, bytes) = self.asset_bytes(&asset)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Marks running executions whose root is not locked by a live handle
    /// as failed ("orphaned"). Returns the reaped RIDs.
    pub fn reap(&self) -> Result<Vec<Rid>> {
        let running = self.catalog().list_executions(Some(ExecutionStatus::Running))?;
        let mut reaped = Vec::new();
        for exec in running {
            let held = exec
                .working_dir
                .as_deref()
                .is_some_and(|d| RootLock::is_held(Path::new(d)));
            if held {
                continue;
            }
            let done = self.catalog().write(|tx| {
                let now = execution_in(tx, &exec.rid)?;
                if now.status != ExecutionStatus::Running {
                    return Ok(false);
                }
                transition_in(tx, &exec.rid, ExecutionStatus::Failed, Some(ORPHANED.into()))?;
                Ok(true)
            })?;
            if done.value {
                reaped.push(exec.rid);
            }
        }
        Ok(reaped)
    }
}

/// Result of finishing an execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub execution: Execution,
    pub outputs: Vec<Asset>,
    /// Feature rows written, per feature table.
    pub features: BTreeMap<String, usize>,
    /// Uploads or ingestions that did not succeed.
    pub failures: Vec<String>,
}

impl ExecutionHandle {
    pub fn rid(&self) -> &Rid {
        &self.rid
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn workflow(&self) -> Option<&Workflow> {
        self.workflow.as_ref()
    }

    pub fn config(&self) -> &ExecutionConfig {
        &self.config
    }

    pub fn parameters(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.config.parameters
    }

    pub fn datasets(&self) -> &[StagedDataset] {
        &self.datasets
    }

    pub fn assets(&self) -> &[StagedAsset] {
        &self.assets
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    /// Materialized bag directory of an input dataset.
    pub fn dataset_path(&self, dataset: &Rid) -> Option<&Path> {
        self.datasets
            .iter()
            .find(|d| &d.dataset == dataset)
            .and_then(|d| d.path.as_deref())
    }

    /// Directory whose files become rows of `asset_table` at the end.
    pub fn output_dir(&self, asset_table: &str) -> Result<PathBuf> {
        if !self.ws.catalog().table_def(asset_table, None)?.is_asset() {
            return Err(Error::InvalidArgument(format!("`{asset_table}` is not an asset table")));
        }
        let dir = self.root.join("outputs").join(asset_table);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Directory for `values.csv` of a feature.
    pub fn feature_dir(&self, target: &str, feature: &str) -> Result<PathBuf> {
        let dir = self.root.join("features").join(target).join(feature);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn update_status(&self, detail: &str) -> Result<()> {
        self.ws.catalog().write(|tx| {
            let exec = execution_in(tx, &self.rid)?;
            if exec.status != ExecutionStatus::Running {
                return Err(Error::InvalidState(format!("execution {} is {}", self.rid, exec.status)));
            }
            tx.update(EXECUTION, &self.rid, values! { "Status_Detail" => detail })
        })?;
        Ok(())
    }

    /// Runs a script with the execution's parameters.
    ///
    /// Parameters (config merged with `extra`) are written to
    /// `parameters.json`; the child sees its path in `DERIVA_ML_PARAMETERS`
    /// and the root in `DERIVA_ML_EXEC_ROOT`, and runs with the root as its
    /// working directory. Output streams go to `outputs/Execution_Log/`.
    /// A script whose checksum differs from the workflow's is noted in the
    /// status detail. A failing script does not fail the execution.
    pub fn run_script(
        &self,
        script: &Path,
        extra: &BTreeMap<String, serde_json::Value>,
    ) -> Result<ExitStatus> {
        let script = script
            .canonicalize()
            .map_err(|e| Error::InvalidArgument(format!("script {}: {e}", script.display())))?;
        let (digest, _) = sha256_file(&script)?;
        if let Some(wf) = &self.workflow {
            if wf.checksum != digest {
                self.update_status(&format!(
                    "script checksum {digest} differs from workflow {} checksum {}",
                    wf.rid, wf.checksum
                ))?;
            }
        }
        let mut params = self.config.parameters.clone();
        params.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        let params_path = self.root.join(PARAMETERS_FILE);
        fs::write(&params_path, serde_json::to_string_pretty(&params)?)?;

        let logs = self.root.join("outputs").join(EXECUTION_LOG);
        fs::create_dir_all(&logs)?;
        let stem = safe_filename(
            &script
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "script".into()),
        );
        let stdout = File::create(logs.join(format!("{stem}.stdout.log")))?;
        let stderr = File::create(logs.join(format!("{stem}.stderr.log")))?;

        let mut cmd = if is_executable(&script) {
            Command::new(&script)
        } else {
            let mut c = Command::new("sh");
            c.arg(&script);
            c
        };
        let status = cmd
            .current_dir(&self.root)
            .env(PARAMETERS_ENV, &params_path)
            .env(EXEC_ROOT_ENV, &self.root)
            .env(EXECUTION_ENV, self.rid.as_str())
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .status()?;
        Ok(status)
    }

    /// Uploads outputs, ingests feature files and applies the final status.
    /// Any upload or ingestion failure turns the status into `failed`;
    /// whatever was uploaded stays linked.
    pub fn finish(self, status: ExecutionStatus, detail: Option<&str>) -> Result<ExecutionOutcome> {
        if !status.is_terminal() {
            return Err(Error::InvalidArgument(format!("{status} is not a final status")));
        }
        let current = self.ws.catalog().execution(&self.rid)?;
        if current.status != ExecutionStatus::Running {
            return Err(Error::InvalidState(format!("execution {} is {}", self.rid, current.status)));
        }
        let mut failures = Vec::new();
        let mut outputs = Vec::new();
        let mut by_path: HashMap<String, Rid> = HashMap::new();
        self.upload_outputs(&mut outputs, &mut by_path, &mut failures)?;
        let features = self.ingest_features(&by_path, &mut failures)?;

        let final_status = if failures.is_empty() {
            status
        } else {
            ExecutionStatus::Failed
        };
        let mut parts: Vec<String> = Vec::new();
        match detail {
            Some(d) => parts.push(d.to_string()),
            None => parts.extend(current.status_detail.clone()),
        }
        parts.extend(failures.iter().cloned());
        let execution = self
            .ws
            .catalog()
            .write(|tx| transition_in(tx, &self.rid, final_status, join_detail(&parts)))?
            .value;
        Ok(ExecutionOutcome {
            execution,
            outputs,
            features,
            failures,
        })
    }

    fn upload_outputs(
        &self,
        outputs: &mut Vec<Asset>,
        by_path: &mut HashMap<String, Rid>,
        failures: &mut Vec<String>,
    ) -> Result<()> {
        let out_root = self.root.join("outputs");
        if !out_root.is_dir() {
            return Ok(());
        }
        let mut tables: Vec<PathBuf> = fs::read_dir(&out_root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        tables.sort();
        for dir in tables {
            let table = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let is_asset = self
                .ws
                .catalog()
                .table_def(&table, None)
                .map(|d| d.is_asset())
                .unwrap_or(false);
            let files: Vec<PathBuf> = walkdir::WalkDir::new(&dir)
                .sort_by_file_name()
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .collect();
            if dir.is_file() || (!is_asset && !files.is_empty()) {
                failures.push(format!("outputs/{table} is not an asset table directory"));
                continue;
            }
            for file in files {
                let rel = file.strip_prefix(&dir).expect("under dir").to_string_lossy().replace('\\', "/");
                match self.upload_one(&table, &file, &rel) {
                    Ok(asset) => {
                        by_path.insert(format!("outputs/{table}/{rel}"), asset.rid.clone());
                        outputs.push(asset);
                    }
                    Err(e) => failures.push(format!("upload outputs/{table}/{rel}: {e}")),
                }
            }
        }
        Ok(())
    }

    fn upload_one(&self, table: &str, file: &Path, rel: &str) -> Result<Asset> {
        let filename = safe_filename(rel);
        let path = format!("/assets/{table}/{filename}");
        let obj = self.ws.store().put_file(&path, file, Default::default())?;
        let values = asset_row_values(&obj, &filename, AssetMeta::default());
        let rid = self
            .ws
            .catalog()
            .write(|tx| {
                let rid = tx.insert(table, values)?;
                link_asset_in(tx, &self.rid, &rid, table, "output")?;
                Ok(rid)
            })?
            .value;
        self.ws.catalog().asset(&rid)
    }

    fn ingest_features(
        &self,
        by_path: &HashMap<String, Rid>,
        failures: &mut Vec<String>,
    ) -> Result<BTreeMap<String, usize>> {
        let mut counts = BTreeMap::new();
        let feat_root = self.root.join("features");
        if !feat_root.is_dir() {
            return Ok(counts);
        }
        let defs = definitions(&self.ws.catalog().at(None)?, &Filter::all())?;
        let files: Vec<PathBuf> = walkdir::WalkDir::new(&feat_root)
            .min_depth(3)
            .max_depth(3)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file() && e.file_name() == "values.csv")
            .map(|e| e.into_path())
            .collect();
        for file in files {
            let rel = file.strip_prefix(&feat_root).expect("under root");
            let mut parts = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned());
            let (target, feature) = (parts.next().unwrap_or_default(), parts.next().unwrap_or_default());
            let Some(def) = defs.iter().find(|d| d.target_table == target && d.feature_name == feature) else {
                failures.push(format!("features/{target}/{feature}: no such feature"));
                continue;
            };
            let result = read_feature_csv(&file, def, by_path).and_then(|records| {
                self.ws
                    .catalog()
                    .add_feature_values(&self.rid, &target, &feature, records)
            });
            match result {
                Ok(rids) => {
                    *counts.entry(def.feature_table.clone()).or_insert(0) += rids.len();
                }
                Err(e) => failures.push(format!("features/{target}/{feature}/values.csv: {e}")),
            }
        }
        Ok(counts)
    }
}

fn read_feature_csv(
    file: &Path,
    def: &FeatureDefinition,
    by_path: &HashMap<String, Rid>,
) -> Result<Vec<FeatureRecord>> {
    let mut reader = csv::Reader::from_path(file)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_col = header
        .iter()
        .position(|h| h == &def.target_table)
        .ok_or_else(|| Error::InvalidArgument(format!("missing `{}` column", def.target_table)))?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let target: Rid = rec[target_col]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("`{}` is not a RID", &rec[target_col])))?;
        let mut values = Values::new();
        for (i, name) in header.iter().enumerate() {
            if i == target_col {
                continue;
            }
            let col = def
                .value_columns
                .iter()
                .find(|c| &c.name == name)
                .ok_or_else(|| Error::UnknownColumn {
                    table: def.feature_table.clone(),
                    column: name.clone(),
                })?;
            let cell = rec[i].trim();
            let v = if cell.is_empty() {
                Value::Null
            } else if let ColumnKind::AssetRef(_) = col.kind {
                match by_path.get(cell) {
                    Some(rid) => Value::from(rid),
                    None => Value::from(cell),
                }
            } else {
                Value::from(cell)
            };
            values.insert(name.clone(), v);
        }
        records.push(FeatureRecord::new(target, values));
    }
    Ok(records)
}

#[cfg(unix)]
fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    fs::metadata(path).is_ok_and(|m| m.permissions().mode() & 0o111 != 0)
}

#[cfg(not(unix))]
fn is_executable(_: &Path) -> bool {
    false
}

impl Catalog {
    pub fn execution(&self, rid: &Rid) -> Result<Execution> {
        execution_in(&self.at(None)?, rid)
    }

    /// Executions in RID order, optionally only those with `status`.
    pub fn list_executions(&self, status: Option<ExecutionStatus>) -> Result<Vec<Execution>> {
        let filter = match status {
            Some(s) => Filter::all().eq("Status", s.as_str()),
            None => Filter::all(),
        };
        self.query(EXECUTION, &filter, None)?
            .iter()
            .map(Execution::from_row)
            .collect()
    }

    /// Asset links of an execution, optionally restricted to one role.
    pub fn execution_assets(&self, execution: &Rid, role: Option<&str>) -> Result<Vec<AssetLink>> {
        let mut filter = Filter::all().eq("Execution", execution);
        if let Some(r) = role {
            filter = filter.eq("Asset_Role", r);
        }
        asset_links(&self.at(None)?, filter)
    }

    /// Dataset versions an execution consumed.
    pub fn execution_datasets(&self, execution: &Rid) -> Result<Vec<DatasetVersion>> {
        dataset_links(&self.at(None)?, execution)
    }
}
