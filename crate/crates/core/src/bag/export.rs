//! Building a bag for one dataset version.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use super::{
    BagDescriptor, FetchEntry, ManifestEntry, BAGIT_TXT, BAG_INFO, FETCH, MANIFEST, TAGMANIFEST,
};
use crate::asset::safe_filename;
use crate::catalog::bootstrap::{
    ASSET_CHECKSUM, ASSET_FILENAME, ASSET_LENGTH, ASSET_URL, DATASET, DATASET_DATASET_TYPE, DATASET_MEMBER,
    DATASET_VERSION, VOCAB_NAME,
};
use crate::catalog::{AsOf, ColumnKind, Filter, ReadView, Row, SchemaKind, TableDef};
use crate::dataset::{flattened_members, SemVer};
use crate::error::{Error, Result};
use crate::feature::definitions;
use crate::rid::Rid;
use crate::store::{sha256_hex, split_version};
use crate::workspace::Workspace;

/// Every file of a bag, held in memory before being written out.
pub(crate) struct BagContents {
    pub descriptor: BagDescriptor,
    /// Tag files and exported record files by relative path.
    pub files: BTreeMap<String, Vec<u8>>,
}

/// Rows selected for export, per table.
struct Collector<'a> {
    view: &'a AsOf<'a>,
    defs: BTreeMap<String, TableDef>,
    rows: BTreeMap<String, BTreeMap<Rid, Row>>,
    pending: Vec<(String, Rid)>,
}

impl<'a> Collector<'a> {
    fn def(&mut self, table: &str) -> Result<&TableDef> {
        if !self.defs.contains_key(table) {
            let def = self.view.def(table)?;
            self.defs.insert(table.to_string(), def);
        }
        Ok(&self.defs[table])
    }

    fn add_row(&mut self, table: &str, row: Row) {
        let rid = row.rid.clone();
        let entry = self.rows.entry(table.to_string()).or_default();
        if entry.insert(rid.clone(), row).is_none() {
            self.pending.push((table.to_string(), rid));
        }
    }

    fn add_rid(&mut self, table: &str, rid: &Rid) -> Result<()> {
        if self.rows.get(table).is_some_and(|t| t.contains_key(rid)) {
            return Ok(());
        }
        let row = self.view.row(table, rid)?.ok_or_else(|| {
            Error::Integrity(format!(
                "{table} record {rid} is referenced but not live at snapshot {}",
                self.view.snapshot
            ))
        })?;
        self.add_row(table, row);
        Ok(())
    }

    fn add_query(&mut self, table: &str, filter: &Filter) -> Result<()> {
        for row in self.view.rows(table, filter)? {
            self.add_row(table, row);
        }
        Ok(())
    }

    fn followable(&mut self, table: &str) -> Result<bool> {
        let def = self.def(table)?;
        Ok(def.schema == SchemaKind::Domain || def.is_asset())
    }

    /// Pulls in referenced domain records, assets and terms until closed.
    fn close_references(&mut self) -> Result<()> {
        while let Some((table, rid)) = self.pending.pop() {
            let def = self.def(&table)?.clone();
            let row = self.rows[&table][&rid].clone();
            for col in &def.columns {
                let Some(value) = row.text(&col.name) else {
                    continue;
                };
                match &col.kind {
                    ColumnKind::TermRef(vocab) => {
                        let before = self.rows.get(vocab.as_str()).map_or(0, |t| t.len());
                        self.add_query(vocab, &Filter::all().eq(VOCAB_NAME, value))?;
                        let after = self.rows.get(vocab.as_str()).map_or(0, |t| t.len());
                        if after == before && !self.has_term(vocab, value) {
                            return Err(Error::Integrity(format!(
                                "term `{value}` of {vocab} referenced by {rid} is missing"
                            )));
                        }
                    }
                    ColumnKind::RidRef(target) | ColumnKind::AssetRef(target) => {
                        if self.followable(target)? {
                            self.add_rid(target, &parse_rid(value)?)?;
                        }
                    }
                    ColumnKind::AnyRidRef => {
                        let target_rid = parse_rid(value)?;
                        if let Some(target) = self.view.table_for(&target_rid) {
                            if self.followable(&target)? {
                                self.add_rid(&target, &target_rid)?;
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn has_term(&self, vocab: &str, name: &str) -> bool {
        self.rows
            .get(vocab)
            .is_some_and(|t| t.values().any(|r| r.text(VOCAB_NAME) == Some(name)))
    }
}

fn parse_rid(s: &str) -> Result<Rid> {
    s.parse()
}

fn csv_bytes(def: &TableDef, rows: &BTreeMap<Rid, Row>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(def.column_names())?;
    for row in rows.values() {
        w.write_record(row.fields(def))?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

impl Workspace {
    pub(crate) fn build_bag(&self, dataset: &Rid, version: Option<SemVer>) -> Result<BagContents> {
        let catalog = self.catalog();
        let record = catalog.dataset_version(dataset, version)?;
        let view = catalog.at(Some(record.snapshot))?;
        let mut c = Collector {
            view: &view,
            defs: BTreeMap::new(),
            rows: BTreeMap::new(),
            pending: Vec::new(),
        };

        let members = flattened_members(&view, dataset)?;
        let mut datasets = vec![dataset.clone()];
        let mut records: BTreeMap<String, BTreeSet<Rid>> = BTreeMap::new();
        for m in &members {
            if m.table == DATASET {
                datasets.push(m.rid.clone());
            } else {
                records.entry(m.table.clone()).or_default().insert(m.rid.clone());
            }
        }
        for d in &datasets {
            c.add_rid(DATASET, d)?;
            for table in [DATASET_VERSION, DATASET_MEMBER, DATASET_DATASET_TYPE] {
                c.add_query(table, &Filter::all().eq("Dataset", d))?;
            }
        }
        for (table, rids) in &records {
            for rid in rids {
                c.add_rid(table, rid)?;
            }
        }
        for def in definitions(&view, &Filter::all())? {
            let Some(targets) = records.get(&def.target_table) else {
                continue;
            };
            for row in view.rows(&def.feature_table, &Filter::all())? {
                if row.rid_at(&def.target_table).is_some_and(|t| targets.contains(&t)) {
                    c.add_row(&def.feature_table, row);
                }
            }
        }
        c.close_references()?;

        let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let mut payload: Vec<ManifestEntry> = Vec::new();
        let mut fetch: Vec<FetchEntry> = Vec::new();
        let mut payload_bytes = 0u64;
        let tables: Vec<String> = c.rows.keys().cloned().collect();
        for table in &tables {
            let def = c.def(table)?.clone();
            let rows = &c.rows[table];
            let bytes = csv_bytes(&def, rows)?;
            let path = format!("data/records/{table}.csv");
            payload_bytes += bytes.len() as u64;
            payload.push(ManifestEntry {
                checksum: sha256_hex(&bytes),
                path: path.clone(),
            });
            files.insert(path, bytes);
            if def.is_asset() {
                for row in rows.values() {
                    let entry = self.fetch_entry(table, row)?;
                    payload_bytes += entry.length;
                    payload.push(ManifestEntry {
                        checksum: row.text(ASSET_CHECKSUM).unwrap_or_default().to_string(),
                        path: entry.path.clone(),
                    });
                    fetch.push(entry);
                }
            }
        }
        payload.sort_by(|a, b| a.path.cmp(&b.path));
        fetch.sort_by(|a, b| a.path.cmp(&b.path));
        let payload_count = payload.len();
        if payload.windows(2).any(|w| w[0].path == w[1].path) {
            return Err(Error::Integrity("duplicate payload path in bag".into()));
        }

        let bagging_date = catalog
            .commit_time(record.snapshot)
            .map(|t| t.format("%Y-%m-%d").to_string())
            .unwrap_or_default();
        let bag_info = format!(
            "Dataset-RID: {}\nDataset-Version: {}\nSnapshot-Id: {}\nBagging-Date: {}\nPayload-Oxum: {}.{}\n",
            dataset, record.version, record.snapshot, bagging_date, payload_bytes, payload_count
        );
        let manifest: String = payload
            .iter()
            .map(|e| format!("{}  {}\n", e.checksum, e.path))
            .collect();
        let fetch_txt: String = fetch
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.url, e.length, e.path))
            .collect();
        files.insert("bagit.txt".into(), BAGIT_TXT.to_vec());
        files.insert(BAG_INFO.into(), bag_info.into_bytes());
        files.insert(MANIFEST.into(), manifest.into_bytes());
        files.insert(FETCH.into(), fetch_txt.into_bytes());
        let tag_names = ["bagit.txt", BAG_INFO, FETCH, MANIFEST];
        let mut tag_sorted = tag_names.to_vec();
        tag_sorted.sort();
        let tagmanifest: String = tag_sorted
            .iter()
            .map(|name| format!("{}  {}\n", sha256_hex(&files[*name]), name))
            .collect();
        let bag_checksum = sha256_hex(tagmanifest.as_bytes());
        files.insert(TAGMANIFEST.into(), tagmanifest.into_bytes());
        let tag_bytes: u64 = files
            .iter()
            .filter(|(k, _)| !k.starts_with("data/"))
            .map(|(_, v)| v.len() as u64)
            .sum();

        Ok(BagContents {
            descriptor: BagDescriptor {
                dataset: dataset.clone(),
                version: record.version,
                snapshot: record.snapshot,
                bag_checksum,
                length: tag_bytes + payload_bytes,
                payload,
                fetch,
            },
            files,
        })
    }

    fn fetch_entry(&self, table: &str, row: &Row) -> Result<FetchEntry> {
        let address = row.text(ASSET_URL).unwrap_or_default();
        let (path, version) = split_version(address);
        let unreachable = || Error::NotFound(format!("asset {} ({table}) at `{address}`", row.rid));
        let obj = self.store().head(path, version).map_err(|_| unreachable())?;
        let checksum = row.text(ASSET_CHECKSUM).unwrap_or_default();
        if obj.checksum != checksum {
            return Err(Error::ChecksumMismatch {
                expected: checksum.to_string(),
                actual: obj.checksum,
            });
        }
        let filename = nfc(&safe_filename(row.text(ASSET_FILENAME).unwrap_or("file")));
        Ok(FetchEntry {
            url: self.object_url(address),
            length: row.int(ASSET_LENGTH).unwrap_or_default() as u64,
            path: format!("data/assets/{table}/{}/{filename}", row.rid),
        })
    }

    /// Writes the bag for `dataset` at `version` (default: latest) into
    /// `dest`, which must be empty or absent. Asset files are listed in
    /// `fetch.txt` rather than copied.
    pub fn export_bag(&self, dataset: &Rid, version: Option<SemVer>, dest: &Path) -> Result<BagDescriptor> {
        if dest.exists() && fs::read_dir(dest)?.next().is_some() {
            return Err(Error::InvalidArgument(format!(
                "bag destination {} is not empty",
                dest.display()
            )));
        }
        let contents = self.build_bag(dataset, version)?;
        self.stats().add_export();
        for (rel, bytes) in &contents.files {
            let path = dest.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, bytes)?;
        }
        Ok(contents.descriptor)
    }
}
