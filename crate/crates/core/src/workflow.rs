//! Registered workflows: versioned computational procedures.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::bootstrap::{WORKFLOW, WORKFLOW_TYPE};
use crate::catalog::{Catalog, Filter, ReadView, Row, Transaction};
use crate::error::{Error, Result};
use crate::rid::Rid;
use crate::store::sha256_file;
use crate::values;
use crate::vocab::{add_term_in, NewTerm};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workflow {
    pub rid: Rid,
    pub name: String,
    pub url: String,
    pub workflow_type: String,
    pub version: Option<String>,
    pub checksum: String,
    pub description: Option<String>,
}

impl Workflow {
    pub(crate) fn from_row(row: &Row) -> Workflow {
        Workflow {
            rid: row.rid.clone(),
            name: row.text("Name").unwrap_or_default().to_string(),
            url: row.text("URL").unwrap_or_default().to_string(),
            workflow_type: row.text("Workflow_Type").unwrap_or_default().to_string(),
            version: row.text("Version").map(str::to_string),
            checksum: row.text("Checksum").unwrap_or_default().to_string(),
            description: row.text("Description").map(str::to_string),
        }
    }
}

/// A workflow to register. Either `checksum` is given or it is computed
/// from the workflow file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub name: String,
    /// Source location: repository URL, path and revision.
    pub url: String,
    pub workflow_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl WorkflowSpec {
    pub fn new(name: impl Into<String>, url: impl Into<String>, workflow_type: impl Into<String>) -> Self {
        WorkflowSpec {
            name: name.into(),
            url: url.into(),
            workflow_type: workflow_type.into(),
            ..Default::default()
        }
    }

    pub fn version(mut self, v: impl Into<String>) -> Self {
        self.version = Some(v.into());
        self
    }

    pub fn checksum(mut self, c: impl Into<String>) -> Self {
        self.checksum = Some(c.into());
        self
    }
}

pub(crate) fn register_in(tx: &mut Transaction<'_>, spec: &WorkflowSpec, checksum: &str) -> Result<Workflow> {
    if spec.name.is_empty() || spec.url.is_empty() {
        return Err(Error::invalid("workflow name and url are required"));
    }
    let existing = tx.rows(
        WORKFLOW,
        &Filter::all().eq("URL", spec.url.as_str()).eq("Checksum", checksum),
    )?;
    if let Some(row) = existing.first() {
        return Ok(Workflow::from_row(row));
    }
    let wf_type = add_term_in(tx, WORKFLOW_TYPE, NewTerm::new(&spec.workflow_type).exist_ok())?.name;
    let rid = tx.insert(
        WORKFLOW,
        values! {
            "Name" => spec.name.as_str(),
            "URL" => spec.url.as_str(),
            "Workflow_Type" => wf_type,
            "Version" => spec.version.clone(),
            "Checksum" => checksum,
            "Description" => spec.description.clone(),
        },
    )?;
    let row = tx.get(WORKFLOW, &rid)?.expect("inserted row");
    Ok(Workflow::from_row(&row))
}

pub(crate) fn checksum_of(spec: &WorkflowSpec, file: Option<&Path>) -> Result<String> {
    match (file, &spec.checksum) {
        (Some(path), declared) => {
            let (digest, _) = sha256_file(path).map_err(|e| {
                Error::InvalidArgument(format!("cannot read workflow file {}: {e}", path.display()))
            })?;
            if let Some(d) = declared {
                if !d.eq_ignore_ascii_case(&digest) {
                    return Err(Error::ChecksumMismatch {
                        expected: d.clone(),
                        actual: digest,
                    });
                }
            }
            Ok(digest)
        }
        (None, Some(c)) => {
            if c.len() != 64 || !c.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::InvalidArgument(format!("`{c}` is not a SHA-256 digest")));
            }
            Ok(c.to_ascii_lowercase())
        }
        (None, None) => Err(Error::InvalidArgument(
            "a workflow needs either a readable file or a checksum".into(),
        )),
    }
}

impl Catalog {
    /// Registers a workflow, or returns the existing one with the same URL
    /// and checksum. The workflow type is added to Workflow_Type if new.
    pub fn register_workflow(&self, spec: &WorkflowSpec, file: Option<&Path>) -> Result<Workflow> {
        let checksum = checksum_of(spec, file)?;
        Ok(self.write(|tx| register_in(tx, spec, &checksum))?.value)
    }

    pub fn workflow(&self, rid: &Rid) -> Result<Workflow> {
        self.get(WORKFLOW, rid, None)?
            .map(|r| Workflow::from_row(&r))
            .ok_or_else(|| Error::NotFound(format!("workflow {rid}")))
    }

    pub fn list_workflows(&self) -> Result<Vec<Workflow>> {
        Ok(self
            .query(WORKFLOW, &Filter::all(), None)?
            .iter()
            .map(Workflow::from_row)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogOptions;

    #[test]
    fn registration_dedupes_on_url_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("train.py");
        std::fs::write(&file, "print('train')\n").unwrap();
        let cat = Catalog::in_memory(CatalogOptions::logical());
        let spec = WorkflowSpec::new("train", "https://git.example.org/ml/train.py@main", "training");
        let a = cat.register_workflow(&spec, Some(&file)).unwrap();
        let b = cat.register_workflow(&spec, Some(&file)).unwrap();
        assert_eq!(a.rid, b.rid);
        std::fs::write(&file, "print('train!')\n").unwrap();
        let c = cat.register_workflow(&spec, Some(&file)).unwrap();
        assert_ne!(a.rid, c.rid);
        assert_eq!(a.url, c.url);
        assert_ne!(a.checksum, c.checksum);
        assert!(cat
            .register_workflow(&spec, Some(&dir.path().join("missing.py")))
            .is_err());
        assert!(cat.register_workflow(&spec, None).is_err());
        assert_eq!(cat.list_workflows().unwrap().len(), 2);
    }
}
