//! Minimal persistent identifiers for bags, kept in the catalog.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BagDescriptor;
use crate::catalog::bootstrap::{DATASET_VERSION, MINID};
use crate::catalog::{format_timestamp, Catalog, Filter, ReadView, Row, Transaction};
use crate::dataset::{find_version, SemVer};
use crate::error::{Error, Result};
use crate::rid::Rid;
use crate::values;

const ALPHABET: &[u8; 32] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Minid {
    pub id: String,
    pub dataset: Rid,
    pub version: SemVer,
    pub locations: Vec<String>,
    pub checksum: String,
    pub length: u64,
    pub title: String,
    pub created: DateTime<Utc>,
}

impl Minid {
    fn from_row(row: &Row) -> Result<Minid> {
        let created = row.text("Created").unwrap_or_default();
        Ok(Minid {
            id: row.text("Identifier").unwrap_or_default().to_string(),
            dataset: row
                .rid_at("Dataset")
                .ok_or_else(|| Error::Integrity(format!("minid row {} lacks a dataset", row.rid)))?,
            version: row.text("Version").unwrap_or_default().parse()?,
            locations: serde_json::from_str(row.text("Locations").unwrap_or("[]"))?,
            checksum: row.text("Checksum").unwrap_or_default().to_string(),
            length: row.int("Length").unwrap_or_default() as u64,
            title: row.text("Title").unwrap_or_default().to_string(),
            created: DateTime::parse_from_rfc3339(created)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| Error::Integrity(format!("minid timestamp `{created}`: {e}")))?,
        })
    }
}

/// `minid:` plus 12 base-32 characters derived from the bag checksum.
fn token(checksum: &str, salt: u32) -> String {
    let digest = Sha256::digest(format!("{checksum}:{salt}").as_bytes());
    let mut bits: u64 = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut out = [0u8; 12];
    for slot in out.iter_mut().rev() {
        *slot = ALPHABET[(bits & 31) as usize];
        bits >>= 5;
    }
    format!("minid:{}", std::str::from_utf8(&out).expect("ascii"))
}

fn lookup(view: &impl ReadView, id: &str) -> Result<Option<Minid>> {
    view.rows(MINID, &Filter::all().eq("Identifier", id))?
        .first()
        .map(Minid::from_row)
        .transpose()
}

pub(crate) fn register_in(
    tx: &mut Transaction<'_>,
    desc: &BagDescriptor,
    location: &str,
    title: &str,
) -> Result<Minid> {
    let record = find_version(tx, &desc.dataset, Some(desc.version))?;
    if let Some(existing) = &record.minid {
        if record.bag_checksum.as_deref() == Some(desc.bag_checksum.as_str()) {
            return lookup(tx, existing)?
                .ok_or_else(|| Error::Integrity(format!("version table names unknown {existing}")));
        }
        return Err(Error::Conflict(format!(
            "{} {} is already registered as {existing} with a different checksum",
            desc.dataset, desc.version
        )));
    }
    let mut salt = 0;
    let id = loop {
        let candidate = token(&desc.bag_checksum, salt);
        if lookup(tx, &candidate)?.is_none() {
            break candidate;
        }
        salt += 1;
    };
    let created = tx.timestamp();
    let locations = vec![location.to_string()];
    tx.insert(
        MINID,
        values! {
            "Identifier" => id.as_str(),
            "Dataset" => &desc.dataset,
            "Version" => desc.version.to_string(),
            "Locations" => serde_json::to_string(&locations)?,
            "Checksum" => desc.bag_checksum.as_str(),
            "Length" => desc.length,
            "Title" => title,
            "Created" => format_timestamp(&created),
        },
    )?;
    tx.update(
        DATASET_VERSION,
        &record.rid,
        values! {
            "Minid" => id.as_str(),
            "Bag_Checksum" => desc.bag_checksum.as_str(),
        },
    )?;
    Ok(Minid {
        id,
        dataset: desc.dataset.clone(),
        version: desc.version,
        locations,
        checksum: desc.bag_checksum.clone(),
        length: desc.length,
        title: title.to_string(),
        created,
    })
}

impl Catalog {
    /// Registers an identifier for an exported bag and records it, with the
    /// bag checksum, on the dataset version. Registering the same bag again
    /// returns the existing identifier.
    pub fn register_minid(&self, desc: &BagDescriptor, location: &str, title: &str) -> Result<Minid> {
        Ok(self.write(|tx| register_in(tx, desc, location, title))?.value)
    }

    pub fn resolve_minid(&self, id: &str) -> Result<Minid> {
        lookup(&self.at(None)?, id)?.ok_or_else(|| Error::IdNotFound(id.to_string()))
    }

    pub fn list_minids(&self) -> Result<Vec<Minid>> {
        self.query(MINID, &Filter::all(), None)?
            .iter()
            .map(Minid::from_row)
            .collect()
    }
}
