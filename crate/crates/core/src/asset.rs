//! Asset tables: catalog rows describing files held in the object store.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::bootstrap::{
    asset_table, ASSET_CHECKSUM, ASSET_DESCRIPTION, ASSET_FILENAME, ASSET_LENGTH, ASSET_MD5,
    ASSET_STANDARD_COLUMNS, ASSET_URL,
};
use crate::catalog::{Catalog, ReadView, Row, SchemaKind, TableDef, TableKind, Transaction, Values};
use crate::error::{Error, Result};
use crate::rid::Rid;
use crate::store::{PutOptions, StoredObject};
use crate::workspace::Workspace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub rid: Rid,
    pub table: String,
    /// Versioned object address, `/path:version`.
    pub url: String,
    pub checksum: String,
    pub length: u64,
    pub filename: String,
    pub description: Option<String>,
    pub md5: Option<String>,
}

impl Asset {
    pub(crate) fn from_row(table: &str, row: &Row) -> Asset {
        Asset {
            rid: row.rid.clone(),
            table: table.to_string(),
            url: row.text(ASSET_URL).unwrap_or_default().to_string(),
            checksum: row.text(ASSET_CHECKSUM).unwrap_or_default().to_string(),
            length: row.int(ASSET_LENGTH).unwrap_or_default() as u64,
            filename: row.text(ASSET_FILENAME).unwrap_or_default().to_string(),
            description: row.text(ASSET_DESCRIPTION).map(str::to_string),
            md5: row.text(ASSET_MD5).map(str::to_string),
        }
    }
}

/// Optional metadata for an upload.
#[derive(Debug, Clone, Default)]
pub struct AssetMeta {
    pub description: Option<String>,
    /// Values for the table's own metadata columns.
    pub extra: Values,
    /// Secondary digest to verify.
    pub md5: Option<String>,
}

impl AssetMeta {
    pub fn described(description: impl Into<String>) -> Self {
        AssetMeta {
            description: Some(description.into()),
            ..Default::default()
        }
    }
}

/// A file name safe to use as one path segment.
pub fn safe_filename(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| match c {
            '/' | '\\' | ':' | '@' => '_',
            c if c.is_control() => '_',
            c => c,
        })
        .collect();
    match cleaned.as_str() {
        "" | "." | ".." => "_".to_string(),
        _ => cleaned,
    }
}

pub(crate) fn asset_row_values(obj: &StoredObject, filename: &str, meta: AssetMeta) -> Values {
    let mut values = meta.extra;
    values.insert(ASSET_URL.into(), obj.versioned_path().into());
    values.insert(ASSET_CHECKSUM.into(), obj.checksum.clone().into());
    values.insert(ASSET_LENGTH.into(), obj.length.into());
    values.insert(ASSET_FILENAME.into(), filename.into());
    values.insert(ASSET_DESCRIPTION.into(), meta.description.into());
    values.insert(ASSET_MD5.into(), obj.md5.clone().into());
    values
}

pub(crate) fn asset_in(view: &impl ReadView, rid: &Rid) -> Result<Asset> {
    let table = view
        .table_for(rid)
        .ok_or_else(|| Error::UnknownRid(rid.to_string()))?;
    if !view.def(&table)?.is_asset() {
        return Err(Error::InvalidArgument(format!("{rid} is not an asset ({table})")));
    }
    let row = view.row(&table, rid)?.ok_or_else(|| Error::StaleRid {
        table: table.clone(),
        rid: rid.clone(),
    })?;
    Ok(Asset::from_row(&table, &row))
}

impl Catalog {
    /// Defines an asset table. The standard columns (URL, Checksum, Length,
    /// Filename, Description, MD5) are added in front of `def`'s columns.
    pub fn define_asset_table(&self, def: TableDef) -> Result<String> {
        for c in &def.columns {
            if ASSET_STANDARD_COLUMNS.contains(&c.name.as_str()) {
                return Err(Error::ReservedColumn(c.name.clone()));
            }
        }
        let def = asset_table(def);
        debug_assert!(matches!(def.kind, TableKind::Asset) && def.schema == SchemaKind::Domain);
        self.define_table(def)
    }

    pub fn asset(&self, rid: &Rid) -> Result<Asset> {
        asset_in(&self.at(None)?, rid)
    }
}

impl Workspace {
    /// Stores bytes for an asset without creating the catalog row.
    pub(crate) fn store_asset_bytes(
        &self,
        table: &str,
        filename: &str,
        bytes: &[u8],
        md5: Option<String>,
    ) -> Result<StoredObject> {
        let path = format!("/assets/{table}/{}", safe_filename(filename));
        self.store().put_bytes(
            &path,
            bytes,
            PutOptions {
                md5,
                ..Default::default()
            },
        )
    }

    pub(crate) fn store_asset_file(
        &self,
        table: &str,
        file: &Path,
        md5: Option<String>,
    ) -> Result<(StoredObject, String)> {
        let filename = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", file.display())))?;
        let path = format!("/assets/{table}/{}", safe_filename(&filename));
        let obj = self.store().put_file(
            &path,
            file,
            PutOptions {
                md5,
                ..Default::default()
            },
        )?;
        Ok((obj, filename))
    }

    /// Uploads a file into the object store and records it in `table`.
    pub fn upload_asset(&self, table: &str, file: &Path, meta: AssetMeta) -> Result<Asset> {
        self.ensure_asset_table(table)?;
        let (obj, filename) = self.store_asset_file(table, file, meta.md5.clone())?;
        self.insert_asset(table, &obj, &filename, meta)
    }

    /// Uploads in-memory content as an asset named `filename`.
    pub fn upload_asset_bytes(&self, table: &str, filename: &str, bytes: &[u8], meta: AssetMeta) -> Result<Asset> {
        self.ensure_asset_table(table)?;
        let obj = self.store_asset_bytes(table, filename, bytes, meta.md5.clone())?;
        self.insert_asset(table, &obj, filename, meta)
    }

    fn ensure_asset_table(&self, table: &str) -> Result<()> {
        if self.catalog().table_def(table, None)?.is_asset() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("`{table}` is not an asset table")))
        }
    }

    fn insert_asset(&self, table: &str, obj: &StoredObject, filename: &str, meta: AssetMeta) -> Result<Asset> {
        let values = asset_row_values(obj, filename, meta);
        let rid = self
            .catalog()
            .write(|tx: &mut Transaction<'_>| tx.insert(table, values))?
            .value;
        self.catalog().asset(&rid)
    }

    /// Reads an asset's bytes, verified against the catalog's checksum.
    pub fn asset_bytes(&self, rid: &Rid) -> Result<(Asset, Vec<u8>)> {
        let asset = self.catalog().asset(rid)?;
        let (path, version) = crate::store::split_version(&asset.url);
        let (bytes, obj) = self.store().get(path, version)?;
        if obj.checksum != asset.checksum || obj.length != asset.length {
            return Err(Error::ChecksumMismatch {
                expected: asset.checksum,
                actual: obj.checksum,
            });
        }
        Ok((asset, bytes))
    }

    /// Writes an asset to `dest` (a file path), verified.
    pub fn download_asset(&self, rid: &Rid, dest: &Path) -> Result<Asset> {
        let (asset, bytes) = self.asset_bytes(rid)?;
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(dest, bytes)?;
        Ok(asset)
    }
}
