//! Content-verified, versioned object storage.
//!
//! Blobs are content addressed under `objects/sha256/<aa>/<rest>`. Each
//! object path has a version list at `index/<path>/@versions.json`, newest
//! last. A version is identified by a token derived from its digest, so a
//! version id can never resolve to different bytes. Digests are verified on
//! write and again on every read.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use md5::Md5;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const VERSIONS_FILE: &str = "@versions.json";
const DEFAULT_CONTENT_TYPE: &str = "application/octet-stream";

/// SHA-256 of the empty input.
pub const EMPTY_SHA256: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredObject {
    pub path: String,
    pub version_id: String,
    pub checksum: String,
    pub length: u64,
    pub content_type: String,
    pub created: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub md5: Option<String>,
}

impl StoredObject {
    /// `<path>:<version_id>`, the address of this exact version.
    pub fn versioned_path(&self) -> String {
        format!("{}:{}", self.path, self.version_id)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PutOptions {
    /// Expected SHA-256; the write is rejected if the content differs.
    pub checksum: Option<String>,
    /// Optional secondary MD5 digest, verified and recorded but never used
    /// as identity.
    pub md5: Option<String>,
    pub content_type: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, Default)]
struct VersionList {
    path: String,
    versions: Vec<StoredObject>,
}

pub struct ObjectStore {
    root: PathBuf,
    index_lock: Mutex<()>,
    tmp_counter: AtomicU64,
}

impl std::fmt::Debug for ObjectStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectStore").field("root", &self.root).finish()
    }
}

/// Splits `path` or `path:version` into its parts.
pub fn split_version(addr: &str) -> (&str, Option<&str>) {
    match addr.rsplit_once(':') {
        Some((p, v)) if !v.contains('/') && !v.is_empty() => (p, Some(v)),
        _ => (addr, None),
    }
}

pub fn validate_path(path: &str) -> Result<()> {
    let bad = || Error::InvalidPath(path.to_string());
    let rest = path.strip_prefix('/').ok_or_else(bad)?;
    if rest.is_empty() {
        return Err(bad());
    }
    for seg in rest.split('/') {
        if seg.is_empty()
            || seg == "."
            || seg == ".."
            || seg.contains([':', '@', '\\'])
            || seg.chars().any(char::is_control)
        {
            return Err(bad());
        }
    }
    Ok(())
}

pub fn guess_content_type(path: &str) -> &'static str {
    let ext = path.rsplit('.').next().unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "json" => "application/json",
        "csv" => "text/csv",
        "txt" | "log" => "text/plain",
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        _ => DEFAULT_CONTENT_TYPE,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Streams `reader` through SHA-256, returning (digest, length).
pub fn sha256_reader(mut reader: impl Read) -> io::Result<(String, u64)> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

pub fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    sha256_reader(File::open(path)?)
}

impl ObjectStore {
    pub fn open(root: impl AsRef<Path>) -> Result<ObjectStore> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("objects").join("sha256"))?;
        fs::create_dir_all(root.join("index"))?;
        fs::create_dir_all(root.join("tmp"))?;
        Ok(ObjectStore {
            root,
            index_lock: Mutex::new(()),
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn blob_path(&self, checksum: &str) -> PathBuf {
        self.root
            .join("objects")
            .join("sha256")
            .join(&checksum[..2])
            .join(&checksum[2..])
    }

    fn index_dir(&self, path: &str) -> PathBuf {
        self.root.join("index").join(path.trim_start_matches('/'))
    }

    fn read_versions(&self, path: &str) -> Result<Option<VersionList>> {
        let file = self.index_dir(path).join(VERSIONS_FILE);
        match fs::read(&file) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes).map_err(|e| {
                Error::Integrity(format!("version index for {path}: {e}"))
            })?)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn check_namespace(&self, path: &str) -> Result<()> {
        let dir = self.index_dir(path);
        if dir.is_dir() {
            let has_children = fs::read_dir(&dir)?
                .filter_map(|e| e.ok())
                .any(|e| e.path().is_dir());
            if has_children {
                return Err(Error::NamespaceConflict(path.to_string()));
            }
        }
        let mut ancestor = String::new();
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        for seg in &segments[..segments.len() - 1] {
            ancestor.push('/');
            ancestor.push_str(seg);
            if self.index_dir(&ancestor).join(VERSIONS_FILE).exists() {
                return Err(Error::NamespaceConflict(ancestor));
            }
        }
        Ok(())
    }

    pub fn put_bytes(&self, path: &str, bytes: &[u8], opts: PutOptions) -> Result<StoredObject> {
        self.put(path, bytes, opts)
    }

    pub fn put_file(&self, path: &str, file: &Path, opts: PutOptions) -> Result<StoredObject> {
        self.put(path, File::open(file)?, opts)
    }

    /// Stores a new version of `path`. Re-putting content already stored at
    /// `path` returns that version (and makes it the newest).
    pub fn put(&self, path: &str, mut reader: impl Read, opts: PutOptions) -> Result<StoredObject> {
        validate_path(path)?;
        let tmp = self.root.join("tmp").join(format!(
            "{}-{}.part",
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let staged = (|| -> Result<(String, String, u64)> {
            let mut out = File::create(&tmp)?;
            let mut sha = Sha256::new();
            let mut md5 = Md5::new();
            let mut buf = vec![0u8; 64 * 1024];
            let mut total = 0u64;
            loop {
                let n = reader.read(&mut buf)?;
                if n == 0 {
                    break;
                }
                sha.update(&buf[..n]);
                md5.update(&buf[..n]);
                out.write_all(&buf[..n])?;
                total += n as u64;
            }
            out.sync_all()?;
            Ok((hex::encode(sha.finalize()), hex::encode(md5.finalize()), total))
        })();
        let (checksum, md5, length) = match staged {
            Ok(v) => v,
            Err(e) => {
                let _ = fs::remove_file(&tmp);
                return Err(e);
            }
        };
        if let Some(expected) = &opts.checksum {
            if !expected.eq_ignore_ascii_case(&checksum) {
                let _ = fs::remove_file(&tmp);
                return Err(Error::ChecksumMismatch {
                    expected: expected.clone(),
                    actual: checksum,
                });
            }
        }
        if let Some(expected) = &opts.md5 {
            if !expected.eq_ignore_ascii_case(&md5) {
                let _ = fs::remove_file(&tmp);
                return Err(Error::ChecksumMismatch {
                    expected: expected.clone(),
                    actual: md5,
                });
            }
        }

        let _guard = self.index_lock.lock().unwrap_or_else(|e| e.into_inner());
        let _file_lock = StoreLock::acquire(&self.root)?;
        if let Err(e) = self.check_namespace(path) {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        let mut list = self.read_versions(path)?.unwrap_or_else(|| VersionList {
            path: path.to_string(),
            versions: Vec::new(),
        });
        let blob = self.blob_path(&checksum);
        if blob.exists() {
            fs::remove_file(&tmp)?;
        } else {
            fs::create_dir_all(blob.parent().expect("blob parent"))?;
            fs::rename(&tmp, &blob)?;
        }
        let object = match list.versions.iter().position(|v| v.checksum == checksum) {
            Some(i) => {
                let existing = list.versions.remove(i);
                list.versions.push(existing.clone());
                existing
            }
            None => {
                let object = StoredObject {
                    path: path.to_string(),
                    version_id: checksum[..16].to_string(),
                    checksum: checksum.clone(),
                    length,
                    content_type: opts
                        .content_type
                        .unwrap_or_else(|| guess_content_type(path).to_string()),
                    created: Utc::now(),
                    md5: opts.md5.map(|_| md5),
                };
                list.versions.push(object.clone());
                object
            }
        };
        let dir = self.index_dir(path);
        fs::create_dir_all(&dir)?;
        crate::catalog::log::write_atomic(&dir.join(VERSIONS_FILE), &serde_json::to_vec_pretty(&list)?, true)?;
        Ok(object)
    }

    /// Metadata of a version (default: newest).
    pub fn head(&self, path: &str, version: Option<&str>) -> Result<StoredObject> {
        validate_path(path)?;
        let list = self
            .read_versions(path)?
            .ok_or_else(|| Error::NotFound(format!("object {path}")))?;
        match version {
            None => list.versions.last().cloned(),
            Some(v) => list.versions.iter().find(|o| o.version_id == v).cloned(),
        }
        .ok_or_else(|| Error::NotFound(format!("object {path}:{}", version.unwrap_or(""))))
    }

    /// All versions of `path`, oldest first.
    pub fn versions(&self, path: &str) -> Result<Vec<StoredObject>> {
        validate_path(path)?;
        Ok(self.read_versions(path)?.map(|l| l.versions).unwrap_or_default())
    }

    /// Reads and verifies a version's bytes.
    pub fn get(&self, path: &str, version: Option<&str>) -> Result<(Vec<u8>, StoredObject)> {
        let meta = self.head(path, version)?;
        let bytes = match fs::read(self.blob_path(&meta.checksum)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(Error::Integrity(format!(
                    "content of {} is missing",
                    meta.versioned_path()
                )))
            }
            Err(e) => return Err(e.into()),
        };
        let digest = sha256_hex(&bytes);
        if digest != meta.checksum || bytes.len() as u64 != meta.length {
            return Err(Error::Integrity(format!(
                "stored content of {} does not match its checksum",
                meta.versioned_path()
            )));
        }
        Ok((bytes, meta))
    }

    /// Copies a version to `dest`, verifying digest and length. On failure
    /// `dest` is not left behind.
    pub fn get_to_file(&self, path: &str, version: Option<&str>, dest: &Path) -> Result<StoredObject> {
        let (bytes, meta) = self.get(path, version)?;
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(dest, bytes)?;
        Ok(meta)
    }

    /// Object paths under `prefix` (a namespace or object path), sorted.
    pub fn list_namespace(&self, prefix: &str) -> Result<Vec<String>> {
        let trimmed = prefix.trim_end_matches('/');
        if !trimmed.is_empty() {
            validate_path(trimmed)?;
        }
        let base = self.index_dir(trimmed);
        if !base.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in walkdir::WalkDir::new(&base) {
            let entry = entry.map_err(|e| Error::Io(e.into()))?;
            if entry.file_name() == VERSIONS_FILE {
                let rel = entry
                    .path()
                    .parent()
                    .and_then(|p| p.strip_prefix(self.root.join("index")).ok())
                    .map(|p| p.to_string_lossy().replace('\\', "/"))
                    .unwrap_or_default();
                out.push(format!("/{rel}"));
            }
        }
        out.sort();
        Ok(out)
    }
}

struct StoreLock(File);

impl StoreLock {
    fn acquire(root: &Path) -> Result<StoreLock> {
        let f = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(root.join(".index.lock"))?;
        f.lock()?;
        Ok(StoreLock(f))
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store() -> (tempfile::TempDir, ObjectStore) {
        let dir = tempfile::tempdir().unwrap();
        let s = ObjectStore::open(dir.path()).unwrap();
        (dir, s)
    }

    #[test]
    fn empty_object_has_standard_digest() {
        let (_d, s) = store();
        let o = s.put_bytes("/ns/empty", b"", PutOptions::default()).unwrap();
        assert_eq!(o.checksum, EMPTY_SHA256);
        assert_eq!(o.length, 0);
        let (bytes, _) = s.get("/ns/empty", None).unwrap();
        assert!(bytes.is_empty());
    }

    #[test]
    fn identical_puts_dedupe() {
        let (_d, s) = store();
        let a = s.put_bytes("/ns/a", b"hello", PutOptions::default()).unwrap();
        let b = s.put_bytes("/ns/a", b"hello", PutOptions::default()).unwrap();
        assert_eq!(a.version_id, b.version_id);
        assert_eq!(s.versions("/ns/a").unwrap().len(), 1);
        let c = s.put_bytes("/ns/a", b"world", PutOptions::default()).unwrap();
        assert_ne!(a.version_id, c.version_id);
        assert_eq!(s.get("/ns/a", None).unwrap().0, b"world");
        assert_eq!(s.get("/ns/a", Some(&a.version_id)).unwrap().0, b"hello");
    }

    #[test]
    fn declared_checksum_mismatch_stores_nothing() {
        let (_d, s) = store();
        let err = s
            .put_bytes(
                "/ns/x",
                b"data",
                PutOptions {
                    checksum: Some("0".repeat(64)),
                    ..Default::default()
                },
            )
            .unwrap_err();
        assert!(matches!(err, Error::ChecksumMismatch { .. }));
        assert!(matches!(s.head("/ns/x", None), Err(Error::NotFound(_))));
        assert!(s.list_namespace("/").unwrap().is_empty());
    }

    #[test]
    fn md5_is_secondary() {
        let (_d, s) = store();
        let ok = s
            .put_bytes(
                "/ns/m",
                b"abc",
                PutOptions {
                    md5: Some("900150983cd24fb0d6963f7d28e17f72".into()),
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(ok.md5.as_deref(), Some("900150983cd24fb0d6963f7d28e17f72"));
        assert!(s
            .put_bytes(
                "/ns/m2",
                b"abc",
                PutOptions {
                    md5: Some("0".repeat(32)),
                    ..Default::default()
                }
            )
            .is_err());
    }

    #[test]
    fn namespace_conflicts() {
        let (_d, s) = store();
        s.put_bytes("/a/b/c", b"1", PutOptions::default()).unwrap();
        assert!(matches!(
            s.put_bytes("/a/b", b"2", PutOptions::default()),
            Err(Error::NamespaceConflict(_))
        ));
        assert!(matches!(
            s.put_bytes("/a/b/c/d", b"2", PutOptions::default()),
            Err(Error::NamespaceConflict(_))
        ));
        assert!(matches!(
            s.put_bytes("relative", b"2", PutOptions::default()),
            Err(Error::InvalidPath(_))
        ));
        assert!(matches!(
            s.put_bytes("/a/../b", b"2", PutOptions::default()),
            Err(Error::InvalidPath(_))
        ));
    }

    #[test]
    fn lists_namespaces() {
        let (_d, s) = store();
        for p in ["/m/x", "/m/y/z", "/n/q"] {
            s.put_bytes(p, p.as_bytes(), PutOptions::default()).unwrap();
        }
        assert_eq!(s.list_namespace("/m").unwrap(), vec!["/m/x", "/m/y/z"]);
        assert_eq!(s.list_namespace("/").unwrap().len(), 3);
        assert!(s.list_namespace("/zzz").unwrap().is_empty());
    }

    #[test]
    fn tampered_blob_is_detected() {
        let (_d, s) = store();
        let o = s.put_bytes("/ns/t", b"payload bytes", PutOptions::default()).unwrap();
        let blob = s.blob_path(&o.checksum);
        for i in 0..o.length as usize {
            let mut bytes = fs::read(&blob).unwrap();
            bytes[i] ^= 0x01;
            fs::write(&blob, &bytes).unwrap();
            assert!(matches!(s.get("/ns/t", None), Err(Error::Integrity(_))), "byte {i}");
            bytes[i] ^= 0x01;
            fs::write(&blob, &bytes).unwrap();
        }
        assert!(s.get("/ns/t", None).is_ok());
    }

    #[test]
    fn version_addresses_split() {
        assert_eq!(split_version("/a/b:123"), ("/a/b", Some("123")));
        assert_eq!(split_version("/a/b"), ("/a/b", None));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip(payload in proptest::collection::vec(any::<u8>(), 0..(1 << 20))) {
            let (_d, s) = store();
            let o = s.put_bytes("/rt/obj", &payload, PutOptions::default()).unwrap();
            prop_assert_eq!(o.length as usize, payload.len());
            let (bytes, meta) = s.get("/rt/obj", Some(&o.version_id)).unwrap();
            prop_assert_eq!(bytes, payload);
            prop_assert_eq!(meta, o);
        }
    }
}
