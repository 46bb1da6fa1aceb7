//! In-memory MVCC state rebuilt from the transaction log.
//!
//! Each record is a chain of versions with half-open validity intervals
//! `[valid_from, valid_to)` over snapshot ids. Versions are never edited once
//! their snapshot has committed; a write at snapshot `S` closes the live
//! version at `S` and opens a new one at `S`.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::query::Row;
use super::schema::TableDef;
use super::value::Values;
use crate::rid::Rid;

#[derive(Debug, Clone)]
pub(crate) struct RecordVersion {
    pub values: Values,
    pub rct: DateTime<Utc>,
    pub rmt: DateTime<Utc>,
    pub valid_from: u64,
    pub valid_to: Option<u64>,
}

impl RecordVersion {
    pub fn live_at(&self, snapshot: u64) -> bool {
        self.valid_from <= snapshot && self.valid_to.is_none_or(|t| snapshot < t)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TableEntry {
    pub def: TableDef,
    pub defined_at: u64,
    pub records: BTreeMap<Rid, Vec<RecordVersion>>,
}

impl TableEntry {
    pub fn live_version(&self, rid: &Rid, snapshot: u64) -> Option<&RecordVersion> {
        self.records
            .get(rid)?
            .iter()
            .rev()
            .find(|v| v.live_at(snapshot))
    }

    pub fn row(rid: &Rid, v: &RecordVersion) -> Row {
        Row {
            rid: rid.clone(),
            rct: v.rct,
            rmt: v.rmt,
            values: v.values.clone(),
        }
    }

    pub fn live_rows(&self, snapshot: u64) -> impl Iterator<Item = (&Rid, &RecordVersion)> {
        self.records.iter().filter_map(move |(rid, chain)| {
            chain
                .iter()
                .rev()
                .find(|v| v.live_at(snapshot))
                .map(|v| (rid, v))
        })
    }
}

/// One logged effect. Updates carry the full post-image so replay needs no
/// validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub(crate) enum LogOp {
    DefineTable { def: TableDef },
    Insert { table: String, rid: Rid, values: Values },
    Update { table: String, rid: Rid, values: Values },
    Delete { table: String, rid: Rid },
}

pub(crate) enum Undo {
    DefineTable(String),
    Insert { table: String, rid: Rid, new_entry: bool },
    UpdateInPlace { table: String, rid: Rid, values: Values, rmt: DateTime<Utc> },
    UpdateClosed { table: String, rid: Rid },
    DeletePopped { table: String, rid: Rid, version: RecordVersion },
    DeleteClosed { table: String, rid: Rid },
}

#[derive(Debug, Clone, Default)]
pub(crate) struct State {
    pub current: u64,
    pub tables: BTreeMap<String, TableEntry>,
    pub rid_index: HashMap<Rid, String>,
    pub next_rid: u64,
    /// Commit time of every snapshot, indexed by snapshot id.
    pub commit_times: Vec<DateTime<Utc>>,
}

impl State {
    pub fn table_at(&self, name: &str, snapshot: u64) -> Option<&TableEntry> {
        self.tables.get(name).filter(|t| t.defined_at <= snapshot)
    }

    pub fn apply(&mut self, op: &LogOp, snapshot: u64, ts: DateTime<Utc>) -> Undo {
        match op {
            LogOp::DefineTable { def } => {
                self.tables.insert(
                    def.name.clone(),
                    TableEntry {
                        def: def.clone(),
                        defined_at: snapshot,
                        records: BTreeMap::new(),
                    },
                );
                Undo::DefineTable(def.name.clone())
            }
            LogOp::Insert { table, rid, values } => {
                let entry = self.tables.get_mut(table).expect("validated table");
                let chain = entry.records.entry(rid.clone()).or_default();
                let new_entry = chain.is_empty();
                chain.push(RecordVersion {
                    values: values.clone(),
                    rct: ts,
                    rmt: ts,
                    valid_from: snapshot,
                    valid_to: None,
                });
                self.rid_index.insert(rid.clone(), table.clone());
                self.next_rid = self.next_rid.max(rid.counter() + 1);
                Undo::Insert {
                    table: table.clone(),
                    rid: rid.clone(),
                    new_entry,
                }
            }
            LogOp::Update { table, rid, values } => {
                let entry = self.tables.get_mut(table).expect("validated table");
                let chain = entry.records.get_mut(rid).expect("validated rid");
                let last = chain.last_mut().expect("non-empty chain");
                if last.valid_from == snapshot {
                    let prev = std::mem::replace(&mut last.values, values.clone());
                    let prev_rmt = std::mem::replace(&mut last.rmt, ts);
                    Undo::UpdateInPlace {
                        table: table.clone(),
                        rid: rid.clone(),
                        values: prev,
                        rmt: prev_rmt,
                    }
                } else {
                    last.valid_to = Some(snapshot);
                    let rct = last.rct;
                    chain.push(RecordVersion {
                        values: values.clone(),
                        rct,
                        rmt: ts,
                        valid_from: snapshot,
                        valid_to: None,
                    });
                    Undo::UpdateClosed {
                        table: table.clone(),
                        rid: rid.clone(),
                    }
                }
            }
            LogOp::Delete { table, rid } => {
                let entry = self.tables.get_mut(table).expect("validated table");
                let chain = entry.records.get_mut(rid).expect("validated rid");
                let last = chain.last_mut().expect("non-empty chain");
                if last.valid_from == snapshot {
                    let version = chain.pop().expect("non-empty chain");
                    if chain.is_empty() {
                        entry.records.remove(rid);
                    }
                    Undo::DeletePopped {
                        table: table.clone(),
                        rid: rid.clone(),
                        version,
                    }
                } else {
                    last.valid_to = Some(snapshot);
                    Undo::DeleteClosed {
                        table: table.clone(),
                        rid: rid.clone(),
                    }
                }
            }
        }
    }

    pub fn revert(&mut self, undo: Undo) {
        match undo {
            Undo::DefineTable(name) => {
                self.tables.remove(&name);
            }
            Undo::Insert {
                table,
                rid,
                new_entry,
            } => {
                let entry = self.tables.get_mut(&table).expect("table");
                if new_entry {
                    entry.records.remove(&rid);
                    self.rid_index.remove(&rid);
                } else if let Some(chain) = entry.records.get_mut(&rid) {
                    chain.pop();
                }
            }
            Undo::UpdateInPlace {
                table,
                rid,
                values,
                rmt,
            } => {
                let entry = self.tables.get_mut(&table).expect("table");
                let last = entry
                    .records
                    .get_mut(&rid)
                    .and_then(|c| c.last_mut())
                    .expect("version");
                last.values = values;
                last.rmt = rmt;
            }
            Undo::UpdateClosed { table, rid } => {
                let entry = self.tables.get_mut(&table).expect("table");
                let chain = entry.records.get_mut(&rid).expect("chain");
                chain.pop();
                if let Some(last) = chain.last_mut() {
                    last.valid_to = None;
                }
            }
            Undo::DeletePopped {
                table,
                rid,
                version,
            } => {
                let entry = self.tables.get_mut(&table).expect("table");
                entry.records.entry(rid).or_default().push(version);
            }
            Undo::DeleteClosed { table, rid } => {
                let entry = self.tables.get_mut(&table).expect("table");
                if let Some(last) = entry.records.get_mut(&rid).and_then(|c| c.last_mut()) {
                    last.valid_to = None;
                }
            }
        }
    }
}
