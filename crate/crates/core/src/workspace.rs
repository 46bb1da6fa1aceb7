//! A catalog together with its object store.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, CatalogOptions};
use crate::error::{Error, Result};
use crate::store::{split_version, ObjectStore};

pub const DEFAULT_BASE_URL: &str = "http://localhost:8080";
pub const BASE_URL_OPTION: &str = "base_url";
const STORE_DIR: &str = "store";
const CACHE_DIR: &str = "cache";

const PATH_SEGMENT: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'<')
    .add(b'>')
    .add(b'?')
    .add(b'`')
    .add(b'{')
    .add(b'}')
    .add(b'\t');

/// Counts of remote transfers, used to observe cache behaviour.
#[derive(Debug, Default)]
pub struct TransferStats {
    asset_fetches: AtomicU64,
    bag_file_fetches: AtomicU64,
    exports: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferCounts {
    /// Asset payload files downloaded from fetch URLs.
    pub asset_fetches: u64,
    /// Tag and metadata files downloaded from a bag location.
    pub bag_file_fetches: u64,
    /// Bags prepared by exporting from the catalog.
    pub exports: u64,
}

impl TransferCounts {
    pub fn transfers(&self) -> u64 {
        self.asset_fetches + self.bag_file_fetches
    }
}

impl TransferStats {
    pub fn counts(&self) -> TransferCounts {
        TransferCounts {
            asset_fetches: self.asset_fetches.load(Ordering::SeqCst),
            bag_file_fetches: self.bag_file_fetches.load(Ordering::SeqCst),
            exports: self.exports.load(Ordering::SeqCst),
        }
    }

    pub fn reset(&self) {
        self.asset_fetches.store(0, Ordering::SeqCst);
        self.bag_file_fetches.store(0, Ordering::SeqCst);
        self.exports.store(0, Ordering::SeqCst);
    }

    pub(crate) fn add_asset_fetch(&self) {
        self.asset_fetches.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn add_bag_file_fetch(&self) {
        self.bag_file_fetches.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn add_export(&self) {
        self.exports.fetch_add(1, Ordering::SeqCst);
    }
}

/// Catalog plus object store rooted in one directory. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct Workspace {
    catalog: Catalog,
    store: Arc<ObjectStore>,
    base_url: String,
    stats: Arc<TransferStats>,
    cache_dir: Option<PathBuf>,
}

impl Workspace {
    /// Creates (or opens) a workspace under `root`.
    pub fn init(root: impl AsRef<Path>, mut opts: CatalogOptions) -> Result<Workspace> {
        let root = root.as_ref();
        opts.options
            .entry(BASE_URL_OPTION.to_string())
            .or_insert_with(|| DEFAULT_BASE_URL.to_string());
        let catalog = Catalog::init(root, opts)?;
        Self::with_catalog(catalog, root.join(STORE_DIR))
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Workspace> {
        let root = root.as_ref();
        let catalog = Catalog::open(root)?;
        Self::with_catalog(catalog, root.join(STORE_DIR))
    }

    /// Wraps an existing catalog with an object store at `store_root`.
    pub fn with_catalog(catalog: Catalog, store_root: impl AsRef<Path>) -> Result<Workspace> {
        let base_url = catalog
            .option(BASE_URL_OPTION)
            .unwrap_or(DEFAULT_BASE_URL)
            .trim_end_matches('/')
            .to_string();
        Ok(Workspace {
            store: Arc::new(ObjectStore::open(store_root)?),
            catalog,
            base_url,
            stats: Arc::new(TransferStats::default()),
            cache_dir: None,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn store(&self) -> &ObjectStore {
        &self.store
    }

    /// URL prefix under which this workspace's objects are published.
    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn stats(&self) -> &TransferStats {
        &self.stats
    }

    /// Uses `dir` as the dataset cache for executions.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// The configured cache, else `DERIVA_CACHE`, else `<root>/cache`.
    pub fn default_cache_dir(&self) -> PathBuf {
        if let Some(dir) = &self.cache_dir {
            return dir.clone();
        }
        if let Some(dir) = std::env::var_os("DERIVA_CACHE") {
            return PathBuf::from(dir);
        }
        self.catalog
            .root()
            .map(|r| r.join(CACHE_DIR))
            .unwrap_or_else(|| std::env::temp_dir().join("provcat-cache"))
    }

    /// Public URL of an object address (`/path` or `/path:version`).
    pub fn object_url(&self, address: &str) -> String {
        format!(
            "{}/store{}",
            self.base_url,
            utf8_percent_encode(address, PATH_SEGMENT)
        )
    }

    /// Object address for a URL served by this workspace, if it is one.
    pub fn local_address(&self, url: &str) -> Option<String> {
        let rest = url.strip_prefix(&self.base_url)?.strip_prefix("/store")?;
        if !rest.starts_with('/') {
            return None;
        }
        Some(percent_decode_str(rest).decode_utf8_lossy().into_owned())
    }

    /// Downloads `url`, reading from the local store when the URL is ours.
    pub(crate) fn fetch_url(&self, url: &str) -> Result<Vec<u8>> {
        if let Some(addr) = self.local_address(url) {
            let (path, version) = split_version(&addr);
            return match self.store.get(path, version) {
                Ok((bytes, _)) => Ok(bytes),
                Err(e) if e.is_not_found() => Err(Error::Transfer(format!("{url}: not found"))),
                Err(e) => Err(e),
            };
        }
        if url.starts_with("http://") || url.starts_with("https://") {
            let resp = ureq::get(url)
                .call()
                .map_err(|e| Error::Transfer(format!("{url}: {e}")))?;
            let mut bytes = Vec::new();
            std::io::Read::read_to_end(&mut resp.into_reader(), &mut bytes)
                .map_err(|e| Error::Transfer(format!("{url}: {e}")))?;
            return Ok(bytes);
        }
        Err(Error::Transfer(format!("unsupported URL `{url}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn object_urls_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), CatalogOptions::logical()).unwrap();
        let url = ws.object_url("/assets/Image/scan 01.png:abcd");
        assert_eq!(url, "http://localhost:8080/store/assets/Image/scan%2001.png:abcd");
        assert_eq!(
            ws.local_address(&url).as_deref(),
            Some("/assets/Image/scan 01.png:abcd")
        );
        assert_eq!(ws.local_address("http://elsewhere/store/x"), None);
    }

    #[test]
    fn base_url_persists() {
        let dir = tempfile::tempdir().unwrap();
        let mut opts = CatalogOptions::logical();
        opts.options
            .insert(BASE_URL_OPTION.into(), "https://data.example.org/".into());
        Workspace::init(dir.path(), opts).unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        assert_eq!(ws.base_url(), "https://data.example.org");
    }
}
