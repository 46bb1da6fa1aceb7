//! Snapshot-isolated, append-only entity store.
//!
//! Every write is a [`Transaction`] that commits atomically as exactly one new
//! snapshot. Reads address any committed snapshot and see the schema and the
//! rows that were live at that point. Referential integrity is checked at
//! write time; nothing cascades.

pub mod bootstrap;
pub(crate) mod log;
mod query;
mod schema;
mod state;
mod value;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rid::Rid;

pub use self::log::{ClockMode, FORMAT_VERSION};
pub use self::query::{CompareOp, Filter, Predicate, Row};
pub(crate) use self::schema::is_identifier;
pub use self::schema::{ColumnDef, ColumnKind, SchemaKind, TableDef, TableKind, SYSTEM_COLUMNS};
pub use self::value::{format_timestamp, Value, Values};

use self::log::{Meta, TxRecord, WriterLock};
use self::state::{LogOp, RecordVersion, State, TableEntry, Undo};

/// Commit sequence number. Snapshot 0 is the bootstrapped empty catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnapshotId(pub u64);

impl fmt::Display for SnapshotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone)]
pub struct CatalogOptions {
    pub rid_prefix: String,
    pub clock: ClockMode,
    /// fsync log entries and metadata on every commit.
    pub sync: bool,
    /// Free-form settings persisted in `catalog.meta`.
    pub options: BTreeMap<String, String>,
}

impl Default for CatalogOptions {
    fn default() -> Self {
        CatalogOptions {
            rid_prefix: "1".into(),
            clock: ClockMode::System,
            sync: true,
            options: BTreeMap::new(),
        }
    }
}

impl CatalogOptions {
    pub fn logical() -> Self {
        CatalogOptions {
            clock: ClockMode::Logical,
            ..Default::default()
        }
    }
}

/// Result of a write: the closure's value and the committed snapshot, if
/// the transaction changed anything.
#[derive(Debug, Clone)]
pub struct Committed<T> {
    pub value: T,
    pub snapshot: Option<SnapshotId>,
}

struct Inner {
    root: Option<PathBuf>,
    prefix: String,
    clock: ClockMode,
    created: DateTime<Utc>,
    sync: bool,
    options: BTreeMap<String, String>,
    state: RwLock<State>,
    writer: Mutex<()>,
}

/// Shared handle to one catalog. Cloning is cheap.
#[derive(Clone)]
pub struct Catalog {
    inner: Arc<Inner>,
}

impl fmt::Debug for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Catalog")
            .field("root", &self.inner.root)
            .field("snapshot", &self.current_snapshot())
            .finish()
    }
}

fn logical_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
}

impl Catalog {
    /// Creates a catalog under `root`, or opens it if one already exists.
    pub fn init(root: impl AsRef<Path>, opts: CatalogOptions) -> Result<Catalog> {
        let root = root.as_ref();
        if root.exists() && !root.is_dir() {
            return Err(Error::InvalidArgument(format!(
                "{} is not a directory",
                root.display()
            )));
        }
        if root.join(log::META_FILE).exists() {
            return Catalog::open(root);
        }
        if !Rid::is_valid_prefix(&opts.rid_prefix) {
            return Err(Error::InvalidArgument(format!(
                "invalid RID prefix `{}`",
                opts.rid_prefix
            )));
        }
        fs::create_dir_all(root.join(log::LOG_DIR))?;
        let created = match opts.clock {
            ClockMode::System => Utc::now(),
            ClockMode::Logical => logical_epoch(),
        };
        let meta = Meta {
            format_version: FORMAT_VERSION,
            rid_prefix: opts.rid_prefix.clone(),
            current_snapshot: 0,
            clock: opts.clock,
            created,
            options: opts.options.clone(),
        };
        log::write_meta(root, &meta, opts.sync)?;
        Ok(Catalog::from_parts(Some(root.to_path_buf()), &meta, opts.sync))
    }

    /// Opens an existing catalog and replays its log.
    pub fn open(root: impl AsRef<Path>) -> Result<Catalog> {
        Catalog::open_with_sync(root, true)
    }

    pub fn open_with_sync(root: impl AsRef<Path>, sync: bool) -> Result<Catalog> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(Error::NotFound(format!("catalog at {}", root.display())));
        }
        let meta = log::read_meta(root)?;
        let catalog = Catalog::from_parts(Some(root.to_path_buf()), &meta, sync);
        let last = log::last_logged(root)?;
        if meta.current_snapshot > last {
            return Err(Error::Integrity(format!(
                "catalog.meta records snapshot {} but log ends at {last}",
                meta.current_snapshot
            )));
        }
        {
            let mut state = catalog.write_state();
            catalog.catch_up(&mut state)?;
            if state.current != last {
                return Err(Error::Integrity(format!(
                    "log has a gap after snapshot {}",
                    state.current
                )));
            }
        }
        if meta.current_snapshot < last {
            // Crash after the log entry was durable but before the meta update.
            let mut meta = meta;
            meta.current_snapshot = last;
            log::write_meta(root, &meta, sync)?;
        }
        Ok(catalog)
    }

    /// A catalog that lives only in memory.
    pub fn in_memory(opts: CatalogOptions) -> Catalog {
        let created = match opts.clock {
            ClockMode::System => Utc::now(),
            ClockMode::Logical => logical_epoch(),
        };
        let meta = Meta {
            format_version: FORMAT_VERSION,
            rid_prefix: opts.rid_prefix,
            current_snapshot: 0,
            clock: opts.clock,
            created,
            options: opts.options,
        };
        Catalog::from_parts(None, &meta, false)
    }

    fn from_parts(root: Option<PathBuf>, meta: &Meta, sync: bool) -> Catalog {
        let mut state = State {
            commit_times: vec![meta.created],
            ..Default::default()
        };
        bootstrap_state(&mut state, &meta.rid_prefix, meta.created);
        Catalog {
            inner: Arc::new(Inner {
                root,
                prefix: meta.rid_prefix.clone(),
                clock: meta.clock,
                created: meta.created,
                sync,
                options: meta.options.clone(),
                state: RwLock::new(state),
                writer: Mutex::new(()),
            }),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.inner.root.as_deref()
    }

    pub fn rid_prefix(&self) -> &str {
        &self.inner.prefix
    }

    pub fn clock(&self) -> ClockMode {
        self.inner.clock
    }

    pub fn option(&self, key: &str) -> Option<&str> {
        self.inner.options.get(key).map(String::as_str)
    }

    fn read_state(&self) -> RwLockReadGuard<'_, State> {
        self.inner.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_state(&self) -> RwLockWriteGuard<'_, State> {
        self.inner.state.write().unwrap_or_else(|e| e.into_inner())
    }

    fn catch_up(&self, state: &mut State) -> Result<()> {
        let Some(root) = &self.inner.root else {
            return Ok(());
        };
        while let Some(tx) = log::read_tx(root, state.current + 1)? {
            for op in &tx.ops {
                state.apply(op, tx.snapshot, tx.timestamp);
            }
            state.current = tx.snapshot;
            state.commit_times.push(tx.timestamp);
        }
        Ok(())
    }

    /// Picks up transactions committed by other handles on the same root.
    pub fn refresh(&self) -> Result<()> {
        let mut state = self.write_state();
        self.catch_up(&mut state)
    }

    fn next_timestamp(&self, state: &State, snapshot: u64) -> DateTime<Utc> {
        match self.inner.clock {
            ClockMode::Logical => self.inner.created + Duration::seconds(snapshot as i64),
            ClockMode::System => {
                let prev = state.commit_times.last().copied().unwrap_or(self.inner.created);
                Utc::now().max(prev + Duration::microseconds(1))
            }
        }
    }

    /// Runs `f` as one atomic transaction. All of its writes commit in a
    /// single new snapshot, or none do. A transaction that writes nothing
    /// does not advance the snapshot.
    pub fn write<T>(&self, f: impl FnOnce(&mut Transaction<'_>) -> Result<T>) -> Result<Committed<T>> {
        let _serial = self.inner.writer.lock().unwrap_or_else(|e| e.into_inner());
        let _file_lock = match &self.inner.root {
            Some(root) => Some(WriterLock::acquire(root)?),
            None => None,
        };
        let mut state = self.write_state();
        self.catch_up(&mut state)?;
        let snapshot = state.current + 1;
        let timestamp = self.next_timestamp(&state, snapshot);
        let next_rid = state.next_rid;
        let mut tx = Transaction {
            state: &mut state,
            prefix: &self.inner.prefix,
            snapshot,
            timestamp,
            ops: Vec::new(),
            undo: Vec::new(),
        };
        let value = match f(&mut tx) {
            Ok(v) => v,
            Err(e) => {
                tx.rollback(next_rid);
                return Err(e);
            }
        };
        if tx.ops.is_empty() {
            return Ok(Committed {
                value,
                snapshot: None,
            });
        }
        if let Some(root) = &self.inner.root {
            let record = TxRecord {
                snapshot,
                timestamp,
                ops: tx.ops.clone(),
            };
            if let Err(e) = log::write_tx(root, &record, self.inner.sync) {
                tx.rollback(next_rid);
                return Err(e);
            }
        }
        drop(tx);
        state.current = snapshot;
        state.commit_times.push(timestamp);
        drop(state);
        if let Some(root) = &self.inner.root {
            let meta = Meta {
                format_version: FORMAT_VERSION,
                rid_prefix: self.inner.prefix.clone(),
                current_snapshot: snapshot,
                clock: self.inner.clock,
                created: self.inner.created,
                options: self.inner.options.clone(),
            };
            if let Err(e) = log::write_meta(root, &meta, self.inner.sync) {
                // The log entry is authoritative; the next open repairs meta.
                tracing::warn!("catalog.meta update failed after commit {snapshot}: {e}");
            }
        }
        Ok(Committed {
            value,
            snapshot: Some(SnapshotId(snapshot)),
        })
    }

    pub fn current_snapshot(&self) -> SnapshotId {
        SnapshotId(self.read_state().current)
    }

    fn resolve_snapshot(state: &State, as_of: Option<SnapshotId>) -> Result<u64> {
        match as_of {
            None => Ok(state.current),
            Some(SnapshotId(s)) if s <= state.current => Ok(s),
            Some(SnapshotId(s)) => Err(Error::FutureSnapshot {
                requested: s,
                current: state.current,
            }),
        }
    }

    /// Commit time of `snapshot`.
    pub fn commit_time(&self, snapshot: SnapshotId) -> Option<DateTime<Utc>> {
        self.read_state().commit_times.get(snapshot.0 as usize).copied()
    }

    pub fn table_def(&self, name: &str, as_of: Option<SnapshotId>) -> Result<TableDef> {
        let state = self.read_state();
        let s = Self::resolve_snapshot(&state, as_of)?;
        state
            .table_at(name, s)
            .map(|t| t.def.clone())
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    /// Snapshot at which `name` was defined.
    pub fn table_defined_at(&self, name: &str) -> Option<u64> {
        self.read_state().tables.get(name).map(|t| t.defined_at)
    }

    /// Table definitions live at `as_of`, ordered by name.
    pub fn tables(&self, as_of: Option<SnapshotId>) -> Result<Vec<TableDef>> {
        let state = self.read_state();
        let s = Self::resolve_snapshot(&state, as_of)?;
        Ok(state
            .tables
            .values()
            .filter(|t| t.defined_at <= s)
            .map(|t| t.def.clone())
            .collect())
    }

    /// Rows of `table` live at `as_of` (default: current) that satisfy
    /// `filter`, ordered by RID.
    pub fn query(&self, table: &str, filter: &Filter, as_of: Option<SnapshotId>) -> Result<Vec<Row>> {
        let state = self.read_state();
        let s = Self::resolve_snapshot(&state, as_of)?;
        query_rows(&state, table, filter, s)
    }

    pub fn get(&self, table: &str, rid: &Rid, as_of: Option<SnapshotId>) -> Result<Option<Row>> {
        let state = self.read_state();
        let s = Self::resolve_snapshot(&state, as_of)?;
        let entry = state
            .table_at(table, s)
            .ok_or_else(|| Error::UnknownTable(table.to_string()))?;
        Ok(entry.live_version(rid, s).map(|v| TableEntry::row(rid, v)))
    }

    /// The table a RID was assigned in, whether or not it is still live.
    pub fn table_of(&self, rid: &Rid) -> Option<String> {
        self.read_state().rid_index.get(rid).cloned()
    }

    /// Looks a RID up in whatever table holds it.
    pub fn resolve(&self, rid: &Rid, as_of: Option<SnapshotId>) -> Result<Option<(String, Row)>> {
        let state = self.read_state();
        let s = Self::resolve_snapshot(&state, as_of)?;
        let Some(table) = state.rid_index.get(rid) else {
            return Ok(None);
        };
        Ok(state
            .table_at(table, s)
            .and_then(|t| t.live_version(rid, s))
            .map(|v| (table.clone(), TableEntry::row(rid, v))))
    }

    /// Every RID ever assigned, in assignment order.
    pub fn all_rids(&self) -> Vec<Rid> {
        let mut rids: Vec<Rid> = self.read_state().rid_index.keys().cloned().collect();
        rids.sort();
        rids
    }

    pub fn define_table(&self, def: TableDef) -> Result<String> {
        let name = def.name.clone();
        self.write(|tx| tx.define_table(def))?;
        Ok(name)
    }

    /// Inserts all rows in one snapshot, or rejects the whole batch.
    pub fn insert_entities(&self, table: &str, rows: Vec<Values>) -> Result<Vec<Rid>> {
        Ok(self
            .write(|tx| rows.into_iter().map(|r| tx.insert(table, r)).collect())?
            .value)
    }

    pub fn update_entities(&self, table: &str, updates: Vec<(Rid, Values)>) -> Result<SnapshotId> {
        let c = self.write(|tx| {
            for (rid, values) in updates {
                tx.update(table, &rid, values)?;
            }
            Ok(())
        })?;
        Ok(c.snapshot.unwrap_or_else(|| self.current_snapshot()))
    }

    pub fn delete_entities(&self, table: &str, rids: &[Rid]) -> Result<SnapshotId> {
        let c = self.write(|tx| {
            for rid in rids {
                tx.delete(table, rid)?;
            }
            Ok(())
        })?;
        Ok(c.snapshot.unwrap_or_else(|| self.current_snapshot()))
    }

    /// Canonical text dump of the full history of every table: definitions
    /// and every record version with its validity interval. Two catalogs
    /// that went through the same operations under a logical clock produce
    /// identical dumps.
    pub fn dump(&self) -> String {
        let state = self.read_state();
        let mut out = String::new();
        out.push_str(&format!("snapshot {}\n", state.current));
        for (name, entry) in &state.tables {
            out.push_str(&format!(
                "table {name} defined_at={} {}\n",
                entry.defined_at,
                serde_json::to_string(&entry.def).unwrap_or_default()
            ));
            for (rid, chain) in &entry.records {
                for v in chain {
                    out.push_str(&dump_version(rid, v));
                }
            }
        }
        out
    }
}

fn dump_version(rid: &Rid, v: &RecordVersion) -> String {
    let line = serde_json::json!({
        "rid": rid,
        "from": v.valid_from,
        "to": v.valid_to,
        "rct": format_timestamp(&v.rct),
        "rmt": format_timestamp(&v.rmt),
        "values": v.values,
    });
    format!("{line}\n")
}

fn query_rows(state: &State, table: &str, filter: &Filter, snapshot: u64) -> Result<Vec<Row>> {
    let entry = state
        .table_at(table, snapshot)
        .ok_or_else(|| Error::UnknownTable(table.to_string()))?;
    for p in &filter.predicates {
        if !SYSTEM_COLUMNS.contains(&p.column.as_str()) && entry.def.column_def(&p.column).is_none() {
            return Err(Error::UnknownColumn {
                table: table.to_string(),
                column: p.column.clone(),
            });
        }
    }
    Ok(entry
        .live_rows(snapshot)
        .map(|(rid, v)| TableEntry::row(rid, v))
        .filter(|row| filter.matches(row))
        .collect())
}

fn bootstrap_state(state: &mut State, prefix: &str, created: DateTime<Utc>) {
    for def in bootstrap::ml_schema() {
        state.apply(&LogOp::DefineTable { def }, 0, created);
    }
    let mut counters: BTreeMap<&str, u64> = BTreeMap::new();
    for (vocab, name, description) in bootstrap::BUILTIN_TERMS {
        let prefix_of = bootstrap::BUILTIN_VOCABULARIES
            .iter()
            .find(|(v, _)| *v == vocab)
            .map(|(_, p)| *p)
            .expect("builtin vocabulary");
        let n = counters.entry(vocab).or_insert(0);
        *n += 1;
        let rid = Rid::encode(prefix, state.next_rid);
        let values = crate::values! {
            bootstrap::VOCAB_NAME => name,
            bootstrap::VOCAB_SYNONYMS => "[]",
            bootstrap::VOCAB_DESCRIPTION => description,
            bootstrap::VOCAB_CURIE => format!("{prefix_of}:{n}"),
            bootstrap::VOCAB_DEPRECATED => false,
        };
        state.apply(
            &LogOp::Insert {
                table: vocab.to_string(),
                rid,
                values,
            },
            0,
            created,
        );
    }
}

/// Parses the JSON list stored in a vocabulary `Synonyms` column.
pub(crate) fn parse_synonyms(v: Option<&Value>) -> Vec<String> {
    v.and_then(Value::as_str)
        .and_then(|s| serde_json::from_str(s).ok())
        .unwrap_or_default()
}

/// Read access at one fixed snapshot, either inside an open transaction or
/// pinned on a catalog handle.
pub trait ReadView {
    fn snapshot_id(&self) -> SnapshotId;
    fn rows(&self, table: &str, filter: &Filter) -> Result<Vec<Row>>;
    fn row(&self, table: &str, rid: &Rid) -> Result<Option<Row>>;
    fn def(&self, table: &str) -> Result<TableDef>;
    fn table_for(&self, rid: &Rid) -> Option<String>;
}

/// A catalog handle pinned at one snapshot.
#[derive(Debug, Clone)]
pub struct AsOf<'a> {
    pub catalog: &'a Catalog,
    pub snapshot: SnapshotId,
}

impl Catalog {
    /// A read view at `as_of` (default: current).
    pub fn at(&self, as_of: Option<SnapshotId>) -> Result<AsOf<'_>> {
        let current = self.current_snapshot();
        let snapshot = match as_of {
            Some(s) if s > current => {
                return Err(Error::FutureSnapshot {
                    requested: s.0,
                    current: current.0,
                })
            }
            Some(s) => s,
            None => current,
        };
        Ok(AsOf {
            catalog: self,
            snapshot,
        })
    }
}

impl ReadView for AsOf<'_> {
    fn snapshot_id(&self) -> SnapshotId {
        self.snapshot
    }
    fn rows(&self, table: &str, filter: &Filter) -> Result<Vec<Row>> {
        self.catalog.query(table, filter, Some(self.snapshot))
    }
    fn row(&self, table: &str, rid: &Rid) -> Result<Option<Row>> {
        self.catalog.get(table, rid, Some(self.snapshot))
    }
    fn def(&self, table: &str) -> Result<TableDef> {
        self.catalog.table_def(table, Some(self.snapshot))
    }
    fn table_for(&self, rid: &Rid) -> Option<String> {
        self.catalog.table_of(rid)
    }
}

impl ReadView for Transaction<'_> {
    fn snapshot_id(&self) -> SnapshotId {
        self.snapshot()
    }
    fn rows(&self, table: &str, filter: &Filter) -> Result<Vec<Row>> {
        self.query(table, filter)
    }
    fn row(&self, table: &str, rid: &Rid) -> Result<Option<Row>> {
        self.get(table, rid)
    }
    fn def(&self, table: &str) -> Result<TableDef> {
        self.table_def(table).cloned()
    }
    fn table_for(&self, rid: &Rid) -> Option<String> {
        self.table_of(rid).map(str::to_string)
    }
}

/// An open write transaction. Reads through it see its own pending writes.
pub struct Transaction<'a> {
    state: &'a mut State,
    prefix: &'a str,
    snapshot: u64,
    timestamp: DateTime<Utc>,
    ops: Vec<LogOp>,
    undo: Vec<Undo>,
}

impl Transaction<'_> {
    /// The snapshot this transaction will commit as.
    pub fn snapshot(&self) -> SnapshotId {
        SnapshotId(self.snapshot)
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    pub fn has_writes(&self) -> bool {
        !self.ops.is_empty()
    }

    fn rollback(&mut self, next_rid: u64) {
        while let Some(u) = self.undo.pop() {
            self.state.revert(u);
        }
        self.ops.clear();
        self.state.next_rid = next_rid;
    }

    fn push(&mut self, op: LogOp) {
        let undo = self.state.apply(&op, self.snapshot, self.timestamp);
        self.undo.push(undo);
        self.ops.push(op);
    }

    fn entry(&self, table: &str) -> Result<&TableEntry> {
        self.state
            .table_at(table, self.snapshot)
            .ok_or_else(|| Error::UnknownTable(table.to_string()))
    }

    pub fn table_def(&self, table: &str) -> Result<&TableDef> {
        self.entry(table).map(|e| &e.def)
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableDef> {
        self.state.tables.values().map(|t| &t.def)
    }

    pub fn query(&self, table: &str, filter: &Filter) -> Result<Vec<Row>> {
        query_rows(self.state, table, filter, self.snapshot)
    }

    pub fn get(&self, table: &str, rid: &Rid) -> Result<Option<Row>> {
        let entry = self.entry(table)?;
        Ok(entry
            .live_version(rid, self.snapshot)
            .map(|v| TableEntry::row(rid, v)))
    }

    pub fn table_of(&self, rid: &Rid) -> Option<&str> {
        self.state.rid_index.get(rid).map(String::as_str)
    }

    pub fn is_live(&self, rid: &Rid) -> bool {
        self.state
            .rid_index
            .get(rid)
            .and_then(|t| self.state.table_at(t, self.snapshot))
            .and_then(|e| e.live_version(rid, self.snapshot))
            .is_some()
    }

    pub fn define_table(&mut self, def: TableDef) -> Result<()> {
        def.validate_shape()?;
        if self.state.tables.contains_key(&def.name) {
            return Err(Error::DuplicateTable(def.name));
        }
        for col in &def.columns {
            let dangling = |target: &str| Error::DanglingReference {
                table: def.name.clone(),
                column: col.name.clone(),
                value: target.to_string(),
            };
            match &col.kind {
                ColumnKind::TermRef(v) => match self.state.table_at(v, self.snapshot) {
                    Some(e) if e.def.is_vocabulary() => {}
                    _ => return Err(dangling(v)),
                },
                ColumnKind::RidRef(t) if t != &def.name => {
                    if self.state.table_at(t, self.snapshot).is_none() {
                        return Err(dangling(t));
                    }
                }
                ColumnKind::AssetRef(t) => match self.state.table_at(t, self.snapshot) {
                    Some(e) if e.def.is_asset() => {}
                    _ => return Err(dangling(t)),
                },
                _ => {}
            }
        }
        self.push(LogOp::DefineTable { def });
        Ok(())
    }

    pub fn insert(&mut self, table: &str, values: Values) -> Result<Rid> {
        let def = self.entry(table)?.def.clone();
        let values = self.check_values(&def, values)?;
        let rid = Rid::encode(self.prefix, self.state.next_rid);
        self.push(LogOp::Insert {
            table: table.to_string(),
            rid: rid.clone(),
            values,
        });
        Ok(rid)
    }

    /// Applies a partial update to a live record.
    pub fn update(&mut self, table: &str, rid: &Rid, partial: Values) -> Result<()> {
        let entry = self.entry(table)?;
        let current = self.live_in(entry, table, rid)?.values.clone();
        let def = entry.def.clone();
        let mut merged = current;
        for (k, v) in partial {
            if SYSTEM_COLUMNS.contains(&k.as_str()) {
                return Err(Error::ReservedColumn(k));
            }
            merged.insert(k, v);
        }
        let values = self.check_values(&def, merged)?;
        self.push(LogOp::Update {
            table: table.to_string(),
            rid: rid.clone(),
            values,
        });
        Ok(())
    }

    pub fn delete(&mut self, table: &str, rid: &Rid) -> Result<()> {
        let entry = self.entry(table)?;
        if entry.def.is_vocabulary() {
            return Err(Error::InvalidState(format!(
                "terms of `{table}` are deprecated, never deleted"
            )));
        }
        self.live_in(entry, table, rid)?;
        if let Some(referrer) = self.inbound_reference(table, rid) {
            return Err(Error::InboundReference {
                rid: rid.clone(),
                referencing_table: referrer,
            });
        }
        self.push(LogOp::Delete {
            table: table.to_string(),
            rid: rid.clone(),
        });
        Ok(())
    }

    fn live_in<'e>(&self, entry: &'e TableEntry, table: &str, rid: &Rid) -> Result<&'e RecordVersion> {
        match entry.live_version(rid, self.snapshot) {
            Some(v) => Ok(v),
            None if entry.records.contains_key(rid) => Err(Error::StaleRid {
                table: table.to_string(),
                rid: rid.clone(),
            }),
            None => Err(Error::UnknownRid(rid.to_string())),
        }
    }

    fn inbound_reference(&self, table: &str, rid: &Rid) -> Option<String> {
        for (name, entry) in &self.state.tables {
            let cols: Vec<&ColumnDef> = entry
                .def
                .columns
                .iter()
                .filter(|c| !matches!(c.kind, ColumnKind::TermRef(_)) && c.kind.may_reference(table))
                .collect();
            if cols.is_empty() {
                continue;
            }
            let referenced = entry.live_rows(self.snapshot).any(|(other, v)| {
                other != rid
                    && cols
                        .iter()
                        .any(|c| v.values.get(&c.name).and_then(Value::as_str) == Some(rid.as_str()))
            });
            if referenced {
                return Some(name.clone());
            }
        }
        None
    }

    /// Resolves `text` to the canonical name of a live term by name or synonym.
    pub fn resolve_term(&self, vocabulary: &str, text: &str) -> Result<Option<String>> {
        let entry = self.entry(vocabulary)?;
        if !entry.def.is_vocabulary() {
            return Err(Error::InvalidArgument(format!("`{vocabulary}` is not a vocabulary")));
        }
        Ok(resolve_term_in(entry, text, self.snapshot))
    }

    fn check_values(&self, def: &TableDef, mut values: Values) -> Result<Values> {
        for key in values.keys() {
            if SYSTEM_COLUMNS.contains(&key.as_str()) {
                return Err(Error::ReservedColumn(key.clone()));
            }
            if def.column_def(key).is_none() {
                return Err(Error::UnknownColumn {
                    table: def.name.clone(),
                    column: key.clone(),
                });
            }
        }
        let mut out = Values::new();
        for col in &def.columns {
            let v = values.remove(&col.name).unwrap_or(Value::Null);
            if v.is_null() {
                if !col.nullable {
                    return Err(Error::invalid(format!(
                        "{}.{} is required",
                        def.name, col.name
                    )));
                }
                out.insert(col.name.clone(), Value::Null);
                continue;
            }
            let v = self.coerce(def, col, v)?;
            out.insert(col.name.clone(), v);
        }
        Ok(out)
    }

    fn coerce(&self, def: &TableDef, col: &ColumnDef, v: Value) -> Result<Value> {
        let mismatch = |v: &Value| {
            Error::invalid(format!(
                "{}.{} expects {}, got `{}`",
                def.name, col.name, col.kind, v
            ))
        };
        let dangling = |value: &str| Error::DanglingReference {
            table: def.name.clone(),
            column: col.name.clone(),
            value: value.to_string(),
        };
        match &col.kind {
            ColumnKind::Text => match v {
                Value::Text(_) => Ok(v),
                other => Err(mismatch(&other)),
            },
            ColumnKind::Integer => match v {
                Value::Int(_) => Ok(v),
                Value::Text(ref s) => s.trim().parse::<i64>().map(Value::Int).map_err(|_| mismatch(&v)),
                other => Err(mismatch(&other)),
            },
            ColumnKind::Float => match v {
                Value::Float(_) => Ok(v),
                Value::Int(i) => Ok(Value::Float(i as f64)),
                Value::Text(ref s) => s.trim().parse::<f64>().map(Value::Float).map_err(|_| mismatch(&v)),
                other => Err(mismatch(&other)),
            },
            ColumnKind::Boolean => match v {
                Value::Bool(_) => Ok(v),
                Value::Text(ref s) => match s.trim() {
                    "true" => Ok(Value::Bool(true)),
                    "false" => Ok(Value::Bool(false)),
                    _ => Err(mismatch(&v)),
                },
                other => Err(mismatch(&other)),
            },
            ColumnKind::Timestamp => match &v {
                Value::Text(s) => DateTime::parse_from_rfc3339(s.trim())
                    .map(|t| Value::Text(format_timestamp(&t.with_timezone(&Utc))))
                    .map_err(|_| mismatch(&v)),
                _ => Err(mismatch(&v)),
            },
            ColumnKind::TermRef(vocab) => {
                let s = v.as_str().ok_or_else(|| mismatch(&v))?;
                let entry = self
                    .state
                    .table_at(vocab, self.snapshot)
                    .ok_or_else(|| dangling(s))?;
                resolve_term_in(entry, s, self.snapshot)
                    .map(Value::Text)
                    .ok_or_else(|| dangling(s))
            }
            ColumnKind::RidRef(target) | ColumnKind::AssetRef(target) => {
                let s = v.as_str().ok_or_else(|| mismatch(&v))?;
                let rid: Rid = s.parse().map_err(|_| dangling(s))?;
                let live = self
                    .state
                    .table_at(target, self.snapshot)
                    .and_then(|e| e.live_version(&rid, self.snapshot))
                    .is_some();
                if live {
                    Ok(Value::Text(rid.to_string()))
                } else {
                    Err(dangling(s))
                }
            }
            ColumnKind::AnyRidRef => {
                let s = v.as_str().ok_or_else(|| mismatch(&v))?;
                let rid: Rid = s.parse().map_err(|_| dangling(s))?;
                if self.is_live(&rid) {
                    Ok(Value::Text(rid.to_string()))
                } else {
                    Err(dangling(s))
                }
            }
        }
    }
}

fn resolve_term_in(entry: &TableEntry, text: &str, snapshot: u64) -> Option<String> {
    entry.live_rows(snapshot).find_map(|(_, v)| {
        let name = v.values.get(bootstrap::VOCAB_NAME).and_then(Value::as_str)?;
        if name == text || parse_synonyms(v.values.get(bootstrap::VOCAB_SYNONYMS)).iter().any(|s| s == text) {
            Some(name.to_string())
        } else {
            None
        }
    })
}
