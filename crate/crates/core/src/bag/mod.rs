//! Dataset bags: deterministic BagIt packages of one dataset version.
//!
//! Layout of an exported bag:
//!
//! ```text
//! bagit.txt
//! bag-info.txt              Dataset-RID, Dataset-Version, Snapshot-Id, ...
//! data/records/<Table>.csv  exported rows, sorted by RID
//! data/assets/<Table>/<RID>/<filename>   filled in by materialization
//! manifest-sha256.txt       digest of every payload file
//! fetch.txt                 url, length and path of every asset file
//! tagmanifest-sha256.txt    digest of every other tag file
//! ```
//!
//! The bag checksum is the SHA-256 of `tagmanifest-sha256.txt`, which
//! transitively covers every byte of the payload.

mod export;
mod index;
mod materialize;
mod minid;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use crate::dataset::SemVer;
use crate::error::{Error, Result};
use crate::rid::Rid;
use crate::catalog::SnapshotId;
use crate::store::sha256_file;

pub use index::{build_local_index, LocalIndex, TableRows};
pub use materialize::MaterializedDataset;
pub use minid::Minid;

pub const BAGIT_TXT: &[u8] = b"BagIt-Version: 1.0\nTag-File-Character-Encoding: UTF-8\n";
pub const BAG_INFO: &str = "bag-info.txt";
pub const MANIFEST: &str = "manifest-sha256.txt";
pub const FETCH: &str = "fetch.txt";
pub const TAGMANIFEST: &str = "tagmanifest-sha256.txt";
/// Written last by a successful materialization.
pub const COMPLETE_MARKER: &str = ".materialized";
/// Local query index; never part of any manifest.
pub const INDEX_FILE: &str = "index.sqlite";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub checksum: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchEntry {
    pub url: String,
    pub length: u64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagDescriptor {
    pub dataset: Rid,
    pub version: SemVer,
    pub snapshot: SnapshotId,
    pub bag_checksum: String,
    /// Total bytes of tag files and payload.
    pub length: u64,
    pub payload: Vec<ManifestEntry>,
    pub fetch: Vec<FetchEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValidationFailure {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub full: bool,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }

    /// Failing paths, each once, sorted.
    pub fn failing_paths(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.failures.iter().map(|f| f.path.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    fn fail(&mut self, path: &str, reason: impl Into<String>) {
        self.failures.push(ValidationFailure {
            path: path.to_string(),
            reason: reason.into(),
        });
    }
}

/// A relative bag path that stays inside the bag.
pub(crate) fn check_rel_path(rel: &str) -> Result<()> {
    let p = Path::new(rel);
    let ok = !rel.is_empty()
        && !rel.contains('\\')
        && p.components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidBag(format!("unsafe path `{rel}`")))
    }
}

pub(crate) fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            let (checksum, path) = line
                .split_once(' ')
                .map(|(c, p)| (c, p.trim_start_matches(' ')))
                .ok_or_else(|| Error::InvalidBag(format!("malformed manifest line `{line}`")))?;
            if checksum.len() != 64 || !checksum.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::InvalidBag(format!("malformed digest in `{line}`")));
            }
            check_rel_path(path)?;
            Ok(ManifestEntry {
                checksum: checksum.to_ascii_lowercase(),
                path: path.to_string(),
            })
        })
        .collect()
}

pub(crate) fn parse_fetch(text: &str) -> Result<Vec<FetchEntry>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            let mut parts = line.splitn(3, '\t');
            let (Some(url), Some(length), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::InvalidBag(format!("malformed fetch line `{line}`")));
            };
            check_rel_path(path)?;
            Ok(FetchEntry {
                url: url.to_string(),
                length: length
                    .parse()
                    .map_err(|_| Error::InvalidBag(format!("bad length in `{line}`")))?,
                path: path.to_string(),
            })
        })
        .collect()
}

fn read_tag(dir: &Path, name: &str, report: &mut ValidationReport) -> Option<String> {
    match fs::read(dir.join(name)) {
        Ok(b) => match String::from_utf8(b) {
            Ok(s) => Some(s),
            Err(_) => {
                report.fail(name, "not UTF-8");
                None
            }
        },
        Err(_) => {
            report.fail(name, "missing");
            None
        }
    }
}

fn payload_oxum(info: &str) -> Option<(u64, u64)> {
    let value = info
        .lines()
        .find_map(|l| l.strip_prefix("Payload-Oxum:"))?
        .trim();
    let (bytes, count) = value.split_once('.')?;
    Some((bytes.parse().ok()?, count.parse().ok()?))
}

/// Checks a bag directory. The tag-level check verifies the declaration and
/// every tag file digest. The full check additionally digests every payload
/// file and verifies fetched files are present with their declared length.
/// Problems are reported per path; only a missing `bagit.txt` is an error.
pub fn validate_bag(dir: &Path, full: bool) -> Result<ValidationReport> {
    let declaration = fs::read(dir.join("bagit.txt"))
        .map_err(|_| Error::InvalidBag(format!("{} has no bagit.txt", dir.display())))?;
    let mut report = ValidationReport {
        full,
        failures: Vec::new(),
    };
    if declaration != BAGIT_TXT {
        report.fail("bagit.txt", "unsupported declaration");
    }

    if let Some(text) = read_tag(dir, TAGMANIFEST, &mut report) {
        match parse_manifest(&text) {
            Ok(entries) => {
                let listed: BTreeSet<&str> = entries.iter().map(|e| e.path.as_str()).collect();
                for required in [BAG_INFO, MANIFEST] {
                    if !listed.contains(required) {
                        report.fail(required, "not covered by tag manifest");
                    }
                }
                if dir.join(FETCH).exists() && !listed.contains(FETCH) {
                    report.fail(FETCH, "not covered by tag manifest");
                }
                for e in &entries {
                    match sha256_file(&dir.join(&e.path)) {
                        Ok((digest, _)) if digest == e.checksum => {}
                        Ok(_) => report.fail(&e.path, "checksum mismatch"),
                        Err(_) => report.fail(&e.path, "missing"),
                    }
                }
            }
            Err(e) => report.fail(TAGMANIFEST, e.to_string()),
        }
    }

    let manifest = read_tag(dir, MANIFEST, &mut report).map(|t| parse_manifest(&t));
    let fetch = if dir.join(FETCH).exists() {
        read_tag(dir, FETCH, &mut report).map(|t| parse_fetch(&t))
    } else {
        Some(Ok(Vec::new()))
    };
    let manifest = match manifest {
        Some(Ok(m)) => Some(m),
        Some(Err(e)) => {
            report.fail(MANIFEST, e.to_string());
            None
        }
        None => None,
    };
    let fetch = match fetch {
        Some(Ok(f)) => Some(f),
        Some(Err(e)) => {
            report.fail(FETCH, e.to_string());
            None
        }
        None => None,
    };

    if let (Some(manifest), Some(fetch)) = (&manifest, &fetch) {
        let in_manifest: BTreeSet<&str> = manifest.iter().map(|e| e.path.as_str()).collect();
        for f in fetch {
            if !in_manifest.contains(f.path.as_str()) {
                report.fail(&f.path, "fetch entry not in payload manifest");
            }
        }
        if full {
            let mut total = 0u64;
            for e in manifest {
                match sha256_file(&dir.join(&e.path)) {
                    Ok((digest, len)) => {
                        total += len;
                        if digest != e.checksum {
                            report.fail(&e.path, "checksum mismatch");
                        }
                    }
                    Err(_) => report.fail(&e.path, "missing"),
                }
            }
            for f in fetch {
                if let Ok(meta) = fs::metadata(dir.join(&f.path)) {
                    if meta.len() != f.length {
                        report.fail(&f.path, "length differs from fetch.txt");
                    }
                }
            }
            let data = dir.join("data");
            if data.is_dir() {
                for entry in walkdir::WalkDir::new(&data).min_depth(1) {
                    let Ok(entry) = entry else { continue };
                    if !entry.file_type().is_file() {
                        continue;
                    }
                    let rel = entry
                        .path()
                        .strip_prefix(dir)
                        .map(|p| p.to_string_lossy().replace('\\', "/"))
                        .unwrap_or_default();
                    if !in_manifest.contains(rel.as_str()) {
                        report.fail(&rel, "not in payload manifest");
                    }
                }
            }
            if let Some(info) = fs::read_to_string(dir.join(BAG_INFO)).ok().as_deref().and_then(payload_oxum) {
                let failing_payload = report.failures.iter().any(|f| f.path.starts_with("data/"));
                if !failing_payload && info != (total, manifest.len() as u64) {
                    report.fail(BAG_INFO, "Payload-Oxum does not match payload");
                }
            }
        }
    }
    report.failures.sort();
    report.failures.dedup();
    Ok(report)
}
