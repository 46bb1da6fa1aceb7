//! SQLite index over the record files of a materialized bag.

use std::fs;
use std::path::{Path, PathBuf};

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use super::{COMPLETE_MARKER, INDEX_FILE};
use crate::error::{Error, Result};

const TABLES_META: &str = "_exported_tables";

/// Rows of one exported table in file order, with the original header.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRows {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TableRows {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn get(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.column_index(column)?;
        self.rows.get(row).map(|r| r[c].as_str())
    }
}

pub struct LocalIndex {
    conn: Connection,
    path: PathBuf,
}

impl std::fmt::Debug for LocalIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalIndex").field("path", &self.path).finish()
    }
}

fn quote(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

/// Loads every `data/records/*.csv` file of a materialized bag into
/// `<bag>/index.sqlite`, replacing any earlier index.
pub fn build_local_index(bag: &Path) -> Result<LocalIndex> {
    if !bag.join(COMPLETE_MARKER).exists() {
        return Err(Error::InvalidState(format!(
            "{} is not a completed materialization",
            bag.display()
        )));
    }
    let final_path = bag.join(INDEX_FILE);
    let tmp = bag.join(format!("{INDEX_FILE}.{}.tmp", std::process::id()));
    let _ = fs::remove_file(&tmp);
    {
        let mut conn = Connection::open(&tmp)?;
        let tx = conn.transaction()?;
        tx.execute(
            &format!("CREATE TABLE {TABLES_META} (name TEXT PRIMARY KEY, columns TEXT NOT NULL)"),
            [],
        )?;
        let mut files: Vec<PathBuf> = fs::read_dir(bag.join("data").join("records"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for file in files {
            let name = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut reader = csv::ReaderBuilder::new().from_path(&file)?;
            let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
            let cols_sql: Vec<String> = columns.iter().map(|c| format!("{} TEXT", quote(c))).collect();
            tx.execute(&format!("CREATE TABLE {} ({})", quote(&name), cols_sql.join(", ")), [])?;
            tx.execute(
                &format!("INSERT INTO {TABLES_META} (name, columns) VALUES (?1, ?2)"),
                rusqlite::params![name, serde_json::to_string(&columns)?],
            )?;
            let placeholders: Vec<String> = (1..=columns.len()).map(|i| format!("?{i}")).collect();
            let mut stmt = tx.prepare(&format!(
                "INSERT INTO {} VALUES ({})",
                quote(&name),
                placeholders.join(", ")
            ))?;
            for record in reader.records() {
                let record = record?;
                stmt.execute(rusqlite::params_from_iter(record.iter()))?;
            }
        }
        tx.commit()?;
    }
    fs::rename(&tmp, &final_path)?;
    LocalIndex::open(bag)
}

impl LocalIndex {
    pub fn open(bag: &Path) -> Result<LocalIndex> {
        let path = bag.join(INDEX_FILE);
        if !path.exists() {
            return Err(Error::NotFound(format!("index {}", path.display())));
        }
        Ok(LocalIndex {
            conn: Connection::open(&path)?,
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Names of the exported tables.
    pub fn tables(&self) -> Result<Vec<String>> {
        let mut stmt = self
            .conn
            .prepare(&format!("SELECT name FROM {TABLES_META} ORDER BY name"))?;
        let names = stmt
            .query_map([], |r| r.get::<_, String>(0))?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(names)
    }

    /// All rows of an exported table in export order.
    pub fn dataset_table(&self, table: &str) -> Result<TableRows> {
        let columns: String = self
            .conn
            .query_row(
                &format!("SELECT columns FROM {TABLES_META} WHERE name = ?1"),
                [table],
                |r| r.get(0),
            )
            .map_err(|e| match e {
                rusqlite::Error::QueryReturnedNoRows => {
                    Error::NotFound(format!("table `{table}` in this bag"))
                }
                other => other.into(),
            })?;
        let columns: Vec<String> = serde_json::from_str(&columns)?;
        let mut stmt = self
            .conn
            .prepare(&format!("SELECT * FROM {} ORDER BY rowid", quote(table)))?;
        let n = columns.len();
        let rows = stmt
            .query_map([], |r| (0..n).map(|i| r.get::<_, String>(i)).collect::<rusqlite::Result<Vec<_>>>())?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(TableRows { columns, rows })
    }

    /// Runs a read-only SQL query and returns every cell as text.
    pub fn query(&self, sql: &str) -> Result<TableRows> {
        let mut stmt = self.conn.prepare(sql)?;
        if !stmt.readonly() {
            return Err(Error::InvalidArgument("only read-only queries are allowed".into()));
        }
        let columns: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
        let n = columns.len();
        let rows = stmt
            .query_map([], |r| {
                (0..n)
                    .map(|i| {
                        r.get::<_, Option<String>>(i)
                            .map(Option::unwrap_or_default)
                            .or_else(|_| r.get::<_, i64>(i).map(|v| v.to_string()))
                            .or_else(|_| r.get::<_, f64>(i).map(|v| v.to_string()))
                    })
                    .collect::<rusqlite::Result<Vec<_>>>()
            })?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(TableRows { columns, rows })
    }
}
