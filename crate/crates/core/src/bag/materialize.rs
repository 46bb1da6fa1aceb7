//! Fetching bags and their assets into a local cache.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::index::{build_local_index, LocalIndex, TableRows};
use super::{
    parse_fetch, parse_manifest, validate_bag, BagDescriptor, Minid, COMPLETE_MARKER, FETCH, INDEX_FILE, MANIFEST,
    TAGMANIFEST,
};
use crate::dataset::SemVer;
use crate::error::{Error, Result};
use crate::rid::Rid;
use crate::store::{sha256_file, sha256_hex, PutOptions};
use crate::workspace::Workspace;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Where bag files come from.
enum Source {
    Dir(PathBuf),
    Url(String),
}

impl Source {
    fn parse(location: &str) -> Source {
        if location.starts_with("http://") || location.starts_with("https://") {
            Source::Url(location.trim_end_matches('/').to_string())
        } else {
            Source::Dir(PathBuf::from(location.strip_prefix("file://").unwrap_or(location)))
        }
    }
}

/// A dataset version materialized in a cache directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializedDataset {
    pub dataset: Rid,
    pub version: SemVer,
    pub minid: String,
    pub checksum: String,
    pub path: PathBuf,
}

impl MaterializedDataset {
    /// Builds (or rebuilds) the local SQLite index of the bag.
    pub fn index(&self) -> Result<LocalIndex> {
        build_local_index(&self.path)
    }

    /// Rows of one exported table, opening the index if present.
    pub fn table(&self, table: &str) -> Result<TableRows> {
        let index = if self.path.join(INDEX_FILE).exists() {
            LocalIndex::open(&self.path)?
        } else {
            self.index()?
        };
        index.dataset_table(table)
    }
}

/// Blocking per-checksum lock shared by every process using the cache.
struct CacheLock(File);

impl CacheLock {
    fn acquire(cache: &Path, checksum: &str) -> Result<CacheLock> {
        let f = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(cache.join(format!(".{checksum}.lock")))?;
        f.lock()?;
        Ok(CacheLock(f))
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().expect("bag file has a parent");
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(
        ".{}.{}-{}.part",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// True if `path` exists with the expected digest (and length, if given).
fn already_verified(path: &Path, checksum: &str, length: Option<u64>) -> bool {
    if let Some(len) = length {
        match fs::metadata(path) {
            Ok(m) if m.len() == len => {}
            _ => return false,
        }
    }
    matches!(sha256_file(path), Ok((d, _)) if d == checksum)
}

/// Cheap check of a completed materialization: tag digests, the bag
/// checksum, and presence and size of every payload file.
fn spot_check(dir: &Path, checksum: &str) -> Result<()> {
    let fail = |why: String| Err(Error::Integrity(format!("cached bag {} failed spot check: {why}", dir.display())));
    let Ok(tagmanifest) = fs::read(dir.join(TAGMANIFEST)) else {
        return fail("tag manifest missing".into());
    };
    if sha256_hex(&tagmanifest) != checksum {
        return fail("tag manifest does not match bag checksum".into());
    }
    let report = validate_bag(dir, false)?;
    if !report.is_valid() {
        return fail(format!("{:?}", report.failing_paths()));
    }
    let manifest = parse_manifest(&fs::read_to_string(dir.join(MANIFEST))?)?;
    for e in &manifest {
        if !dir.join(&e.path).is_file() {
            return fail(format!("{} missing", e.path));
        }
    }
    let fetch = match fs::read_to_string(dir.join(FETCH)) {
        Ok(t) => parse_fetch(&t)?,
        Err(_) => Vec::new(),
    };
    for f in &fetch {
        match fs::metadata(dir.join(&f.path)) {
            Ok(m) if m.len() == f.length => {}
            _ => return fail(format!("{} has the wrong length", f.path)),
        }
    }
    Ok(())
}

impl Workspace {
    fn read_source(&self, source: &Source, rel: &str) -> Result<Vec<u8>> {
        match source {
            Source::Dir(dir) => Ok(fs::read(dir.join(rel))?),
            Source::Url(base) => {
                let bytes = self.fetch_url(&format!("{base}/{rel}"))?;
                self.stats().add_bag_file_fetch();
                Ok(bytes)
            }
        }
    }

    /// Downloads a bag and every file in its fetch list into `dest`, checking
    /// each against the manifest digest and declared length. A completion
    /// marker is written only after full validation passes. Files verified
    /// by an earlier, interrupted attempt are not downloaded again.
    pub fn materialize_bag(&self, location: &str, dest: &Path) -> Result<PathBuf> {
        self.materialize_from(&Source::parse(location), dest, None)
    }

    fn materialize_from(&self, source: &Source, dest: &Path, expected: Option<&str>) -> Result<PathBuf> {
        fs::create_dir_all(dest)?;
        let marker = dest.join(COMPLETE_MARKER);
        if marker.exists() {
            if let Some(checksum) = expected {
                spot_check(dest, checksum)?;
                return Ok(dest.to_path_buf());
            }
            if validate_bag(dest, false)?.is_valid() {
                return Ok(dest.to_path_buf());
            }
            fs::remove_file(&marker)?;
        }

        let local_tm = dest.join(TAGMANIFEST);
        let tagmanifest = match expected {
            Some(c) if already_verified(&local_tm, c, None) => fs::read(&local_tm)?,
            _ => {
                let bytes = self.read_source(source, TAGMANIFEST)?;
                if let Some(c) = expected {
                    let actual = sha256_hex(&bytes);
                    if actual != c {
                        return Err(Error::Integrity(format!(
                            "retrieved bag has checksum {actual}, identifier records {c}"
                        )));
                    }
                }
                bytes
            }
        };
        let tag_entries = parse_manifest(std::str::from_utf8(&tagmanifest).map_err(|_| {
            Error::InvalidBag("tag manifest is not UTF-8".into())
        })?)?;
        if !dest.join("bagit.txt").exists() {
            let bytes = self.read_source(source, "bagit.txt")?;
            write_atomic(&dest.join("bagit.txt"), &bytes)?;
        }
        for e in &tag_entries {
            self.fetch_verified(source, dest, &e.path, &e.checksum)?;
        }
        write_atomic(&local_tm, &tagmanifest)?;

        let manifest = parse_manifest(&fs::read_to_string(dest.join(MANIFEST))?)?;
        let fetch = match fs::read_to_string(dest.join(FETCH)) {
            Ok(t) => parse_fetch(&t)?,
            Err(_) => Vec::new(),
        };
        for e in &manifest {
            if fetch.iter().any(|f| f.path == e.path) {
                continue;
            }
            self.fetch_verified(source, dest, &e.path, &e.checksum)?;
        }
        for f in &fetch {
            let target = dest.join(&f.path);
            let checksum = &manifest
                .iter()
                .find(|e| e.path == f.path)
                .ok_or_else(|| Error::InvalidBag(format!("{} is fetched but not in the manifest", f.path)))?
                .checksum;
            if already_verified(&target, checksum, Some(f.length)) {
                continue;
            }
            let bytes = self.fetch_url(&f.url)?;
            self.stats().add_asset_fetch();
            if bytes.len() as u64 != f.length {
                return Err(Error::Integrity(format!(
                    "{}: fetched {} bytes, fetch.txt declares {}",
                    f.path,
                    bytes.len(),
                    f.length
                )));
            }
            let actual = sha256_hex(&bytes);
            if &actual != checksum {
                return Err(Error::ChecksumMismatch {
                    expected: checksum.clone(),
                    actual,
                });
            }
            write_atomic(&target, &bytes)?;
        }

        let report = validate_bag(dest, true)?;
        if !report.is_valid() {
            return Err(Error::Integrity(format!(
                "materialized bag failed validation: {}",
                report.failing_paths().join(", ")
            )));
        }
        write_atomic(&marker, &[sha256_hex(&tagmanifest).as_bytes(), b"\n"].concat())?;
        Ok(dest.to_path_buf())
    }

    fn fetch_verified(&self, source: &Source, dest: &Path, rel: &str, checksum: &str) -> Result<()> {
        let target = dest.join(rel);
        if already_verified(&target, checksum, None) {
            return Ok(());
        }
        let bytes = self.read_source(source, rel)?;
        let actual = sha256_hex(&bytes);
        if actual != checksum {
            return Err(Error::Integrity(format!("{rel}: retrieved content has digest {actual}, expected {checksum}")));
        }
        write_atomic(&target, &bytes)
    }

    /// Copies the bag's tag and record files into the object store under
    /// `/bags/<checksum>/` and returns the bag's location URL.
    pub fn publish_bag(&self, bag_dir: &Path, desc: &BagDescriptor) -> Result<String> {
        let prefix = format!("/bags/{}", desc.bag_checksum);
        let mut rels: Vec<String> = ["bagit.txt", super::BAG_INFO, MANIFEST, FETCH, TAGMANIFEST]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for e in &desc.payload {
            if !desc.fetch.iter().any(|f| f.path == e.path) {
                rels.push(e.path.clone());
            }
        }
        for rel in rels {
            self.store().put_file(
                &format!("{prefix}/{rel}"),
                &bag_dir.join(&rel),
                PutOptions::default(),
            )?;
        }
        Ok(self.object_url(&prefix))
    }

    /// Returns a verified local copy of a dataset version.
    ///
    /// If the version has an identifier, the cache entry for its checksum is
    /// used when complete; otherwise the bag is retrieved from the
    /// identifier's location. If the version has no identifier yet, the bag
    /// is exported, published and registered first.
    pub fn resolve_dataset(
        &self,
        dataset: &Rid,
        version: Option<SemVer>,
        cache_dir: &Path,
    ) -> Result<MaterializedDataset> {
        let record = self.catalog().dataset_version(dataset, version)?;
        fs::create_dir_all(cache_dir)?;
        let minid = match &record.minid {
            Some(id) => self.catalog().resolve_minid(id)?,
            None => return self.prepare_and_resolve(dataset, record.version, cache_dir),
        };
        let target = cache_dir.join(&minid.checksum);
        let _lock = CacheLock::acquire(cache_dir, &minid.checksum)?;
        if target.join(COMPLETE_MARKER).exists() {
            spot_check(&target, &minid.checksum)?;
        } else {
            self.retrieve(&minid, &target)?;
        }
        Ok(handle(&minid, target))
    }

    fn retrieve(&self, minid: &Minid, target: &Path) -> Result<()> {
        let mut last = None;
        for location in &minid.locations {
            match self.materialize_from(&Source::parse(location), target, Some(&minid.checksum)) {
                Ok(_) => return Ok(()),
                Err(e @ Error::Integrity(_)) | Err(e @ Error::ChecksumMismatch { .. }) => return Err(e),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::Transfer(format!("{} has no locations", minid.id))))
    }

    /// Exports a dataset version, publishes the bag to the object store and
    /// registers an identifier for it. A version that already has an
    /// identifier returns it unchanged.
    pub fn publish_dataset(&self, dataset: &Rid, version: Option<SemVer>) -> Result<Minid> {
        let record = self.catalog().dataset_version(dataset, version)?;
        if let Some(id) = &record.minid {
            return self.catalog().resolve_minid(id);
        }
        let staging = std::env::temp_dir().join(format!(
            "provcat-publish-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let result = (|| {
            let desc = self.export_bag(dataset, Some(record.version), &staging)?;
            let location = self.publish_bag(&staging, &desc)?;
            let title = format!("Dataset {dataset} version {}", record.version);
            self.catalog().register_minid(&desc, &location, &title)
        })();
        let _ = fs::remove_dir_all(&staging);
        result
    }

    fn prepare_and_resolve(&self, dataset: &Rid, version: SemVer, cache_dir: &Path) -> Result<MaterializedDataset> {
        let staging = cache_dir.join(format!(
            ".export-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let result = (|| {
            let desc = self.export_bag(dataset, Some(version), &staging)?;
            let location = self.publish_bag(&staging, &desc)?;
            let title = format!("Dataset {dataset} version {version}");
            let minid = self.catalog().register_minid(&desc, &location, &title)?;
            let target = cache_dir.join(&minid.checksum);
            let _lock = CacheLock::acquire(cache_dir, &minid.checksum)?;
            if target.join(COMPLETE_MARKER).exists() {
                spot_check(&target, &minid.checksum)?;
            } else {
                self.materialize_from(&Source::Dir(staging.clone()), &target, Some(&minid.checksum))?;
            }
            Ok(handle(&minid, target))
        })();
        let _ = fs::remove_dir_all(&staging);
        result
    }
}

fn handle(minid: &Minid, path: PathBuf) -> MaterializedDataset {
    MaterializedDataset {
        dataset: minid.dataset.clone(),
        version: minid.version,
        minid: minid.id.clone(),
        checksum: minid.checksum.clone(),
        path,
    }
}
