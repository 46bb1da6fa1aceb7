//! Nested datasets with semantic versions.
//!
//! A dataset is a set of references to domain records and to other
//! datasets. Dataset-to-dataset membership forms a DAG. Every membership
//! change produces a new version record for the dataset and one for each of
//! its ancestors, all in the snapshot that made the change, so a version's
//! snapshot pins its exact contents.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::bootstrap::{DATASET, DATASET_DATASET_TYPE, DATASET_MEMBER, DATASET_TYPE, DATASET_VERSION};
use crate::catalog::{Catalog, Filter, ReadView, Row, SchemaKind, SnapshotId, Transaction};
use crate::error::{Error, Result};
use crate::rid::Rid;
use crate::values;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SemVer {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

impl SemVer {
    pub const INITIAL: SemVer = SemVer::new(0, 1, 0);

    pub const fn new(major: u64, minor: u64, patch: u64) -> SemVer {
        SemVer { major, minor, patch }
    }

    pub fn bump(self, level: BumpLevel) -> SemVer {
        match level {
            BumpLevel::Major => SemVer::new(self.major + 1, 0, 0),
            BumpLevel::Minor => SemVer::new(self.major, self.minor + 1, 0),
            BumpLevel::Patch => SemVer::new(self.major, self.minor, self.patch + 1),
        }
    }
}

impl fmt::Display for SemVer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl FromStr for SemVer {
    type Err = Error;

    fn from_str(s: &str) -> Result<SemVer> {
        let bad = || Error::InvalidArgument(format!("`{s}` is not a version (expected M.m.p)"));
        let parts: Vec<&str> = s.trim().trim_start_matches('v').split('.').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let n = |p: &str| {
            if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            p.parse::<u64>().map_err(|_| bad())
        };
        Ok(SemVer::new(n(parts[0])?, n(parts[1])?, n(parts[2])?))
    }
}

impl TryFrom<String> for SemVer {
    type Error = Error;
    fn try_from(s: String) -> Result<SemVer> {
        s.parse()
    }
}

impl From<SemVer> for String {
    fn from(v: SemVer) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BumpLevel {
    Major,
    Minor,
    Patch,
}

impl fmt::Display for BumpLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BumpLevel::Major => "major",
            BumpLevel::Minor => "minor",
            BumpLevel::Patch => "patch",
        })
    }
}

impl FromStr for BumpLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<BumpLevel> {
        match s.to_ascii_lowercase().as_str() {
            "major" => Ok(BumpLevel::Major),
            "minor" => Ok(BumpLevel::Minor),
            "patch" => Ok(BumpLevel::Patch),
            _ => Err(Error::InvalidArgument(format!(
                "`{s}` is not a bump level (major, minor, patch)"
            ))),
        }
    }
}

/// One row of the dataset history table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetVersion {
    pub rid: Rid,
    pub dataset: Rid,
    pub version: SemVer,
    pub snapshot: SnapshotId,
    pub execution: Option<Rid>,
    pub minid: Option<String>,
    pub bag_checksum: Option<String>,
    pub description: String,
}

impl DatasetVersion {
    pub(crate) fn from_row(row: &Row) -> Result<DatasetVersion> {
        Ok(DatasetVersion {
            rid: row.rid.clone(),
            dataset: row
                .rid_at("Dataset")
                .ok_or_else(|| Error::Integrity(format!("version {} has no dataset", row.rid)))?,
            version: row.text("Version").unwrap_or_default().parse()?,
            snapshot: SnapshotId(row.int("Snapshot").unwrap_or_default() as u64),
            execution: row.rid_at("Execution"),
            minid: row.text("Minid").map(str::to_string),
            bag_checksum: row.text("Bag_Checksum").map(str::to_string),
            description: row.text("Description").unwrap_or_default().to_string(),
        })
    }
}

/// A dataset member: a record and the table it lives in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Member {
    pub rid: Rid,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub rid: Rid,
    pub description: String,
    pub types: Vec<String>,
}

/// A record that appears in more than one of the compared datasets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub rid: Rid,
    pub table: String,
    pub datasets: Vec<Rid>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisjointReport {
    pub overlaps: Vec<Overlap>,
}

impl DisjointReport {
    pub fn is_disjoint(&self) -> bool {
        self.overlaps.is_empty()
    }
}

pub(crate) fn ensure_dataset(view: &impl ReadView, dataset: &Rid) -> Result<Row> {
    view.row(DATASET, dataset)?
        .ok_or_else(|| Error::NotFound(format!("dataset {dataset}")))
}

fn member_rows(view: &impl ReadView, dataset: &Rid) -> Result<Vec<Row>> {
    view.rows(DATASET_MEMBER, &Filter::all().eq("Dataset", dataset))
}

fn row_member(row: &Row) -> Option<Member> {
    Some(Member {
        rid: row.rid_at("Member")?,
        table: row.text("Member_Table")?.to_string(),
    })
}

/// Direct members, ordered by member RID.
pub(crate) fn direct_members(view: &impl ReadView, dataset: &Rid) -> Result<Vec<Member>> {
    let mut out: Vec<Member> = member_rows(view, dataset)?.iter().filter_map(row_member).collect();
    out.sort();
    Ok(out)
}

pub(crate) fn children_of(view: &impl ReadView, dataset: &Rid) -> Result<Vec<Rid>> {
    Ok(direct_members(view, dataset)?
        .into_iter()
        .filter(|m| m.table == DATASET)
        .map(|m| m.rid)
        .collect())
}

pub(crate) fn parents_of(view: &impl ReadView, dataset: &Rid) -> Result<Vec<Rid>> {
    let mut out: Vec<Rid> = view
        .rows(
            DATASET_MEMBER,
            &Filter::all().eq("Member", dataset).eq("Member_Table", DATASET),
        )?
        .iter()
        .filter_map(|r| r.rid_at("Dataset"))
        .collect();
    out.sort();
    out.dedup();
    Ok(out)
}

/// All datasets that contain `dataset`, directly or transitively.
pub(crate) fn ancestors(view: &impl ReadView, dataset: &Rid) -> Result<BTreeSet<Rid>> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([dataset.clone()]);
    while let Some(d) = queue.pop_front() {
        for p in parents_of(view, &d)? {
            if seen.insert(p.clone()) {
                queue.push_back(p);
            }
        }
    }
    seen.remove(dataset);
    Ok(seen)
}

/// Members reachable from `dataset` through nested datasets, including the
/// nested datasets themselves.
pub(crate) fn flattened_members(view: &impl ReadView, dataset: &Rid) -> Result<Vec<Member>> {
    let mut out = BTreeSet::new();
    let mut visited = BTreeSet::from([dataset.clone()]);
    let mut queue = VecDeque::from([dataset.clone()]);
    while let Some(d) = queue.pop_front() {
        for m in direct_members(view, &d)? {
            if m.table == DATASET && visited.insert(m.rid.clone()) {
                queue.push_back(m.rid.clone());
            }
            out.insert(m);
        }
    }
    Ok(out.into_iter().collect())
}

/// Path of dataset RIDs from `from` down to `to` following membership.
fn find_path(view: &impl ReadView, from: &Rid, to: &Rid) -> Result<Option<Vec<Rid>>> {
    let mut came_from: BTreeMap<Rid, Rid> = BTreeMap::new();
    let mut queue = VecDeque::from([from.clone()]);
    let mut seen = BTreeSet::from([from.clone()]);
    while let Some(d) = queue.pop_front() {
        if &d == to {
            let mut path = vec![d.clone()];
            let mut cur = d;
            while let Some(prev) = came_from.get(&cur) {
                path.push(prev.clone());
                cur = prev.clone();
            }
            path.reverse();
            return Ok(Some(path));
        }
        for c in children_of(view, &d)? {
            if seen.insert(c.clone()) {
                came_from.insert(c.clone(), d.clone());
                queue.push_back(c);
            }
        }
    }
    Ok(None)
}

pub(crate) fn versions_of(view: &impl ReadView, dataset: &Rid) -> Result<Vec<DatasetVersion>> {
    let mut out = view
        .rows(DATASET_VERSION, &Filter::all().eq("Dataset", dataset))?
        .iter()
        .map(DatasetVersion::from_row)
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|v| v.version);
    Ok(out)
}

pub(crate) fn latest_version(view: &impl ReadView, dataset: &Rid) -> Result<DatasetVersion> {
    versions_of(view, dataset)?
        .pop()
        .ok_or_else(|| Error::Integrity(format!("dataset {dataset} has no version record")))
}

pub(crate) fn find_version(
    view: &impl ReadView,
    dataset: &Rid,
    version: Option<SemVer>,
) -> Result<DatasetVersion> {
    ensure_dataset(view, dataset)?;
    match version {
        None => latest_version(view, dataset),
        Some(v) => versions_of(view, dataset)?
            .into_iter()
            .find(|r| r.version == v)
            .ok_or_else(|| Error::NotFound(format!("version {v} of dataset {dataset}"))),
    }
}

fn insert_version(
    tx: &mut Transaction<'_>,
    dataset: &Rid,
    version: SemVer,
    description: &str,
    execution: Option<&Rid>,
) -> Result<Rid> {
    let snapshot = tx.snapshot().0;
    tx.insert(
        DATASET_VERSION,
        values! {
            "Dataset" => dataset,
            "Version" => version.to_string(),
            "Snapshot" => snapshot,
            "Execution" => execution.cloned(),
            "Description" => description,
        },
    )
}

/// Bumps `dataset` and every ancestor once at `level`, inside `tx`.
/// Returns the dataset's new version.
pub(crate) fn bump_in(
    tx: &mut Transaction<'_>,
    dataset: &Rid,
    level: BumpLevel,
    description: &str,
    execution: Option<&Rid>,
) -> Result<SemVer> {
    ensure_dataset(tx, dataset)?;
    let next = latest_version(tx, dataset)?.version.bump(level);
    insert_version(tx, dataset, next, description, execution)?;
    for ancestor in ancestors(tx, dataset)? {
        let v = latest_version(tx, &ancestor)?.version.bump(level);
        let note = format!("{level} change propagated from {dataset} {next}");
        insert_version(tx, &ancestor, v, &note, execution)?;
    }
    Ok(next)
}

pub(crate) fn create_dataset_in(
    tx: &mut Transaction<'_>,
    description: &str,
    types: &[&str],
    execution: Option<&Rid>,
) -> Result<(Rid, SemVer)> {
    if description.trim().is_empty() {
        return Err(Error::invalid("dataset description must not be empty"));
    }
    let rid = tx.insert(DATASET, values! { "Description" => description })?;
    let mut seen = BTreeSet::new();
    for t in types {
        let name = tx
            .resolve_term(DATASET_TYPE, t)?
            .ok_or_else(|| Error::NotFound(format!("term `{t}` in {DATASET_TYPE}")))?;
        if seen.insert(name.clone()) {
            tx.insert(
                DATASET_DATASET_TYPE,
                values! { "Dataset" => &rid, "Dataset_Type" => name },
            )?;
        }
    }
    insert_version(tx, &rid, SemVer::INITIAL, description, execution)?;
    Ok((rid, SemVer::INITIAL))
}

pub(crate) fn add_members_in(
    tx: &mut Transaction<'_>,
    dataset: &Rid,
    members: &[Rid],
    execution: Option<&Rid>,
) -> Result<SemVer> {
    ensure_dataset(tx, dataset)?;
    if members.is_empty() {
        return Err(Error::invalid("no members given"));
    }
    let mut current: BTreeSet<Rid> = direct_members(tx, dataset)?.into_iter().map(|m| m.rid).collect();
    for m in members {
        let table = tx
            .table_for(m)
            .ok_or_else(|| Error::UnknownRid(m.to_string()))?;
        if !tx.is_live(m) {
            return Err(Error::StaleRid {
                table,
                rid: m.clone(),
            });
        }
        let def = tx.def(&table)?;
        if table != DATASET && def.schema != SchemaKind::Domain {
            return Err(Error::InvalidArgument(format!(
                "{m} is a {table} record; members must be domain records or datasets"
            )));
        }
        if !current.insert(m.clone()) {
            return Err(Error::Duplicate(format!("member {m} of dataset {dataset}")));
        }
        if table == DATASET {
            if m == dataset {
                return Err(Error::Cycle {
                    path: format!("{dataset} -> {dataset}"),
                });
            }
            if let Some(path) = find_path(tx, m, dataset)? {
                let mut names: Vec<String> = vec![dataset.to_string()];
                names.extend(path.iter().map(Rid::to_string));
                return Err(Error::Cycle {
                    path: names.join(" -> "),
                });
            }
        }
        tx.insert(
            DATASET_MEMBER,
            values! { "Dataset" => dataset, "Member" => m, "Member_Table" => table },
        )?;
    }
    let note = format!("added {} member(s)", members.len());
    bump_in(tx, dataset, BumpLevel::Minor, &note, execution)
}

pub(crate) fn remove_members_in(
    tx: &mut Transaction<'_>,
    dataset: &Rid,
    members: &[Rid],
    execution: Option<&Rid>,
) -> Result<SemVer> {
    ensure_dataset(tx, dataset)?;
    if members.is_empty() {
        return Err(Error::invalid("no members given"));
    }
    let rows = member_rows(tx, dataset)?;
    for m in members {
        let row = rows
            .iter()
            .find(|r| r.rid_at("Member").as_ref() == Some(m))
            .ok_or_else(|| Error::NotFound(format!("member {m} in dataset {dataset}")))?;
        let link = row.rid.clone();
        if !tx.is_live(&link) {
            return Err(Error::NotFound(format!("member {m} in dataset {dataset}")));
        }
        tx.delete(DATASET_MEMBER, &link)?;
    }
    let note = format!("removed {} member(s)", members.len());
    bump_in(tx, dataset, BumpLevel::Major, &note, execution)
}

impl Catalog {
    /// Creates a dataset at version 0.1.0.
    pub fn create_dataset(
        &self,
        description: &str,
        types: &[&str],
        execution: Option<&Rid>,
    ) -> Result<(Rid, SemVer)> {
        Ok(self
            .write(|tx| create_dataset_in(tx, description, types, execution))?
            .value)
    }

    /// Adds members (minor bump, propagated to ancestors).
    pub fn add_members(&self, dataset: &Rid, members: &[Rid], execution: Option<&Rid>) -> Result<SemVer> {
        Ok(self
            .write(|tx| add_members_in(tx, dataset, members, execution))?
            .value)
    }

    /// Removes members (major bump, propagated to ancestors).
    pub fn remove_members(&self, dataset: &Rid, members: &[Rid], execution: Option<&Rid>) -> Result<SemVer> {
        Ok(self
            .write(|tx| remove_members_in(tx, dataset, members, execution))?
            .value)
    }

    /// Records a new version of `dataset` and of every ancestor.
    pub fn increment_version(
        &self,
        dataset: &Rid,
        level: BumpLevel,
        description: &str,
        execution: Option<&Rid>,
    ) -> Result<SemVer> {
        Ok(self
            .write(|tx| bump_in(tx, dataset, level, description, execution))?
            .value)
    }

    pub fn dataset(&self, dataset: &Rid) -> Result<DatasetInfo> {
        let view = self.at(None)?;
        let row = ensure_dataset(&view, dataset)?;
        Ok(DatasetInfo {
            rid: row.rid.clone(),
            description: row.text("Description").unwrap_or_default().to_string(),
            types: dataset_types(&view, dataset)?,
        })
    }

    pub fn list_datasets(&self) -> Result<Vec<DatasetInfo>> {
        let view = self.at(None)?;
        view.rows(DATASET, &Filter::all())?
            .iter()
            .map(|row| {
                Ok(DatasetInfo {
                    rid: row.rid.clone(),
                    description: row.text("Description").unwrap_or_default().to_string(),
                    types: dataset_types(&view, &row.rid)?,
                })
            })
            .collect()
    }

    /// The history table for `dataset`, ascending by version.
    pub fn list_versions(&self, dataset: &Rid) -> Result<Vec<DatasetVersion>> {
        let view = self.at(None)?;
        ensure_dataset(&view, dataset)?;
        versions_of(&view, dataset)
    }

    /// The version record for `version` (default: latest).
    pub fn dataset_version(&self, dataset: &Rid, version: Option<SemVer>) -> Result<DatasetVersion> {
        find_version(&self.at(None)?, dataset, version)
    }

    /// Members as of the version's snapshot, ordered by RID. With `flatten`,
    /// the closure through nested datasets.
    pub fn dataset_members(&self, dataset: &Rid, version: Option<SemVer>, flatten: bool) -> Result<Vec<Member>> {
        let record = self.dataset_version(dataset, version)?;
        let view = self.at(Some(record.snapshot))?;
        if flatten {
            flattened_members(&view, dataset)
        } else {
            direct_members(&view, dataset)
        }
    }

    pub fn dataset_parents(&self, dataset: &Rid) -> Result<Vec<Rid>> {
        let view = self.at(None)?;
        ensure_dataset(&view, dataset)?;
        parents_of(&view, dataset)
    }

    pub fn dataset_children(&self, dataset: &Rid) -> Result<Vec<Rid>> {
        let view = self.at(None)?;
        ensure_dataset(&view, dataset)?;
        children_of(&view, dataset)
    }

    /// Records shared between any two of `datasets` (current membership).
    pub fn check_disjoint(&self, datasets: &[Rid], flatten: bool) -> Result<DisjointReport> {
        let view = self.at(None)?;
        let mut owners: BTreeMap<Member, BTreeSet<Rid>> = BTreeMap::new();
        for d in datasets {
            ensure_dataset(&view, d)?;
            let members = if flatten {
                flattened_members(&view, d)?
            } else {
                direct_members(&view, d)?
            };
            for m in members {
                owners.entry(m).or_default().insert(d.clone());
            }
        }
        Ok(DisjointReport {
            overlaps: owners
                .into_iter()
                .filter(|(_, ds)| ds.len() > 1)
                .map(|(m, ds)| Overlap {
                    rid: m.rid,
                    table: m.table,
                    datasets: ds.into_iter().collect(),
                })
                .collect(),
        })
    }
}

fn dataset_types(view: &impl ReadView, dataset: &Rid) -> Result<Vec<String>> {
    let mut out: Vec<String> = view
        .rows(DATASET_DATASET_TYPE, &Filter::all().eq("Dataset", dataset))?
        .iter()
        .filter_map(|r| r.text("Dataset_Type").map(str::to_string))
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CatalogOptions, ColumnKind, TableDef};

    fn catalog_with_images(n: usize) -> (Catalog, Vec<Rid>) {
        let cat = Catalog::in_memory(CatalogOptions::logical());
        cat.define_table(TableDef::domain("Image").column("Filename", ColumnKind::Text))
            .unwrap();
        let rows = (0..n).map(|i| values! { "Filename" => format!("img{i}.png") }).collect();
        let rids = cat.insert_entities("Image", rows).unwrap();
        (cat, rids)
    }

    #[test]
    fn semver_arithmetic() {
        let v = SemVer::new(1, 2, 3);
        assert_eq!(v.bump(BumpLevel::Patch).to_string(), "1.2.4");
        assert_eq!(v.bump(BumpLevel::Minor).to_string(), "1.3.0");
        assert_eq!(v.bump(BumpLevel::Major).to_string(), "2.0.0");
        assert!(SemVer::new(1, 10, 0) > SemVer::new(1, 9, 9));
        assert_eq!("0.1.0".parse::<SemVer>().unwrap(), SemVer::INITIAL);
        assert!("1.2".parse::<SemVer>().is_err());
        assert!("1.-2.3".parse::<SemVer>().is_err());
    }

    #[test]
    fn create_and_add_members() {
        let (cat, images) = catalog_with_images(5);
        let (d, v) = cat.create_dataset("training pool", &["training"], None).unwrap();
        assert_eq!(v, SemVer::INITIAL);
        assert_eq!(cat.dataset(&d).unwrap().types, vec!["training"]);
        let before = cat.current_snapshot();
        let v = cat.add_members(&d, &images, None).unwrap();
        assert_eq!(v.to_string(), "0.2.0");
        assert_eq!(cat.current_snapshot().0, before.0 + 1);
        assert_eq!(cat.dataset_members(&d, None, false).unwrap().len(), 5);
        assert!(matches!(
            cat.add_members(&d, &images[..1], None),
            Err(Error::Duplicate(_))
        ));
        assert!(matches!(
            cat.create_dataset("x", &["no-such-type"], None),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn removal_is_major_and_history_is_pinned() {
        let (cat, images) = catalog_with_images(5);
        let (d, _) = cat.create_dataset("pool", &[], None).unwrap();
        cat.add_members(&d, &images, None).unwrap();
        let v = cat.remove_members(&d, &images[..2], None).unwrap();
        assert_eq!(v.to_string(), "1.0.0");
        let old = cat.dataset_members(&d, Some(SemVer::new(0, 2, 0)), false).unwrap();
        assert_eq!(old.len(), 5);
        assert_eq!(cat.dataset_members(&d, None, false).unwrap().len(), 3);
        assert!(cat.remove_members(&d, &images[..1], None).is_err());
    }

    #[test]
    fn cycles_are_rejected_with_path() {
        let cat = Catalog::in_memory(CatalogOptions::logical());
        let (a, _) = cat.create_dataset("a", &[], None).unwrap();
        let (b, _) = cat.create_dataset("b", &[], None).unwrap();
        let (c, _) = cat.create_dataset("c", &[], None).unwrap();
        assert!(matches!(
            cat.add_members(&a, std::slice::from_ref(&a), None),
            Err(Error::Cycle { .. })
        ));
        cat.add_members(&a, std::slice::from_ref(&b), None).unwrap();
        cat.add_members(&b, std::slice::from_ref(&c), None).unwrap();
        match cat.add_members(&c, std::slice::from_ref(&a), None) {
            Err(Error::Cycle { path }) => assert_eq!(path, format!("{c} -> {a} -> {b} -> {c}")),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn chain_bump_creates_one_record_each() {
        let cat = Catalog::in_memory(CatalogOptions::logical());
        let (a, _) = cat.create_dataset("a", &[], None).unwrap();
        let (b, _) = cat.create_dataset("b", &[], None).unwrap();
        let (c, _) = cat.create_dataset("c", &[], None).unwrap();
        cat.add_members(&a, std::slice::from_ref(&b), None).unwrap();
        cat.add_members(&b, std::slice::from_ref(&c), None).unwrap();
        let counts = |d: &Rid| cat.list_versions(d).unwrap().len();
        let (na, nb, nc) = (counts(&a), counts(&b), counts(&c));
        cat.increment_version(&c, BumpLevel::Minor, "relabel", None).unwrap();
        assert_eq!((counts(&a), counts(&b), counts(&c)), (na + 1, nb + 1, nc + 1));
        let snap = cat.current_snapshot();
        for d in [&a, &b, &c] {
            assert_eq!(cat.dataset_version(d, None).unwrap().snapshot, snap);
        }
    }

    #[test]
    fn diamond_ancestor_bumped_once() {
        let cat = Catalog::in_memory(CatalogOptions::logical());
        let (top, _) = cat.create_dataset("top", &[], None).unwrap();
        let (l, _) = cat.create_dataset("l", &[], None).unwrap();
        let (r, _) = cat.create_dataset("r", &[], None).unwrap();
        let (leaf, _) = cat.create_dataset("leaf", &[], None).unwrap();
        cat.add_members(&top, &[l.clone(), r.clone()], None).unwrap();
        cat.add_members(&l, std::slice::from_ref(&leaf), None).unwrap();
        cat.add_members(&r, std::slice::from_ref(&leaf), None).unwrap();
        let before = cat.list_versions(&top).unwrap().len();
        cat.increment_version(&leaf, BumpLevel::Patch, "fix", None).unwrap();
        assert_eq!(cat.list_versions(&top).unwrap().len(), before + 1);
    }

    #[test]
    fn disjointness() {
        let (cat, images) = catalog_with_images(4);
        let (train, _) = cat.create_dataset("train", &["training"], None).unwrap();
        let (test, _) = cat.create_dataset("test", &["testing"], None).unwrap();
        cat.add_members(&train, &images[..2], None).unwrap();
        cat.add_members(&test, &images[2..], None).unwrap();
        assert!(cat.check_disjoint(&[train.clone(), test.clone()], true).unwrap().is_disjoint());
        cat.add_members(&test, &images[..1], None).unwrap();
        let report = cat.check_disjoint(&[train, test], true).unwrap();
        assert_eq!(report.overlaps.len(), 1);
        assert_eq!(report.overlaps[0].rid, images[0]);
    }

    #[test]
    fn members_must_be_domain_or_dataset() {
        let cat = Catalog::in_memory(CatalogOptions::logical());
        let (d, _) = cat.create_dataset("d", &[], None).unwrap();
        let v = cat.dataset_version(&d, None).unwrap();
        assert!(matches!(
            cat.add_members(&d, &[v.rid], None),
            Err(Error::InvalidArgument(_))
        ));
    }
}
