//! On-disk layout: `catalog.meta` plus one file per committed transaction
//! under `log/`, named by zero-padded snapshot id. Each file holds the
//! transaction and a SHA-256 digest of its canonical JSON encoding.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::state::LogOp;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "catalog.meta";
pub const LOG_DIR: &str = "log";
const LOCK_FILE: &str = ".writer.lock";

/// How commit timestamps are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Wall-clock time, never moving backwards across commits.
    #[default]
    System,
    /// Creation time plus one second per snapshot. Replaying the same
    /// operations yields byte-identical catalogs.
    Logical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Meta {
    pub format_version: u32,
    pub rid_prefix: String,
    pub current_snapshot: u64,
    #[serde(default)]
    pub clock: ClockMode,
    pub created: DateTime<Utc>,
    #[serde(default)]
    pub options: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct TxRecord {
    pub snapshot: u64,
    pub timestamp: DateTime<Utc>,
    pub ops: Vec<LogOp>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    digest: String,
    tx: serde_json::Value,
}

pub(crate) fn log_path(root: &Path, snapshot: u64) -> PathBuf {
    root.join(LOG_DIR).join(format!("{snapshot:016}.json"))
}

pub(crate) fn lock_path(root: &Path) -> PathBuf {
    root.join(LOCK_FILE)
}

pub(crate) fn read_meta(root: &Path) -> Result<Meta> {
    let bytes = fs::read(root.join(META_FILE))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Integrity(format!("catalog.meta unreadable: {e}")))?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Integrity("catalog.meta lacks format_version".into()))?
        as u32;
    if found != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(|e| Error::Integrity(format!("catalog.meta: {e}")))
}

pub(crate) fn write_meta(root: &Path, meta: &Meta, sync: bool) -> Result<()> {
    write_atomic(&root.join(META_FILE), &serde_json::to_vec_pretty(meta)?, sync)
}

pub(crate) fn write_tx(root: &Path, tx: &TxRecord, sync: bool) -> Result<()> {
    let body = serde_json::to_value(tx)?;
    let digest = hex::encode(Sha256::digest(serde_json::to_vec(&body)?));
    let envelope = Envelope { digest, tx: body };
    let path = log_path(root, tx.snapshot);
    if path.exists() {
        return Err(Error::Integrity(format!(
            "log entry for snapshot {} already exists",
            tx.snapshot
        )));
    }
    write_atomic(&path, &serde_json::to_vec(&envelope)?, sync)
}

/// Reads the log entry for `snapshot`, or `None` if it was never written.
pub(crate) fn read_tx(root: &Path, snapshot: u64) -> Result<Option<TxRecord>> {
    let path = log_path(root, snapshot);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let corrupt = |why: String| Error::Integrity(format!("{}: {why}", path.display()));
    let envelope: Envelope = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let digest = hex::encode(Sha256::digest(serde_json::to_vec(&envelope.tx)?));
    if digest != envelope.digest {
        return Err(corrupt("digest mismatch".into()));
    }
    let tx: TxRecord = serde_json::from_value(envelope.tx).map_err(|e| corrupt(e.to_string()))?;
    if tx.snapshot != snapshot {
        return Err(corrupt(format!("holds snapshot {}", tx.snapshot)));
    }
    Ok(Some(tx))
}

/// Highest snapshot present in the log directory.
pub(crate) fn last_logged(root: &Path) -> Result<u64> {
    let mut max = 0;
    for entry in fs::read_dir(root.join(LOG_DIR))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = name.strip_suffix(".json").and_then(|s| s.parse::<u64>().ok()) {
            max = max.max(n);
        }
    }
    Ok(max)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8], sync: bool) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file")
    ));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        if sync {
            f.sync_all()?;
        }
    }
    fs::rename(&tmp, path)?;
    if sync {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

/// Exclusive advisory lock on the catalog writer file, held for one write.
pub(crate) struct WriterLock(File);

impl WriterLock {
    pub fn acquire(root: &Path) -> Result<WriterLock> {
        let f = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(lock_path(root))?;
        f.lock()?;
        Ok(WriterLock(f))
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}
