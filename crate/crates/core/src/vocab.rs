//! Controlled vocabularies.
//!
//! A vocabulary is a catalog table whose rows are terms: a unique name, any
//! number of synonyms, a description and a CURIE. Within one vocabulary the
//! union of all names and synonyms is duplicate-free, so a lookup by any of
//! them is unambiguous. Matching is case-sensitive. Terms are deprecated,
//! never deleted.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::bootstrap::{
    vocabulary_table, VOCAB_CURIE, VOCAB_DEPRECATED, VOCAB_DESCRIPTION, VOCAB_NAME, VOCAB_SYNONYMS,
};
use crate::catalog::{parse_synonyms, Catalog, Filter, Row, TableKind, Transaction};
use crate::error::{Error, Result};
use crate::rid::Rid;
use crate::values;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyTerm {
    pub rid: Rid,
    pub vocabulary: String,
    pub name: String,
    pub synonyms: Vec<String>,
    pub description: String,
    pub curie: String,
    pub deprecated: bool,
}

impl VocabularyTerm {
    fn from_row(vocabulary: &str, row: &Row) -> Self {
        VocabularyTerm {
            rid: row.rid.clone(),
            vocabulary: vocabulary.to_string(),
            name: row.text(VOCAB_NAME).unwrap_or_default().to_string(),
            synonyms: parse_synonyms(row.get(VOCAB_SYNONYMS)),
            description: row.text(VOCAB_DESCRIPTION).unwrap_or_default().to_string(),
            curie: row.text(VOCAB_CURIE).unwrap_or_default().to_string(),
            deprecated: row
                .get(VOCAB_DEPRECATED)
                .and_then(|v| v.as_bool())
                .unwrap_or(false),
        }
    }

    /// True if `text` is this term's name or one of its synonyms.
    pub fn matches(&self, text: &str) -> bool {
        self.name == text || self.synonyms.iter().any(|s| s == text)
    }
}

/// A term to add.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NewTerm {
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub curie: Option<String>,
    /// Return the existing term instead of failing when `name` is taken.
    #[serde(default)]
    pub exist_ok: bool,
}

impl NewTerm {
    pub fn new(name: impl Into<String>) -> Self {
        NewTerm {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn synonyms<I, S>(mut self, synonyms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.synonyms = synonyms.into_iter().map(Into::into).collect();
        self
    }

    pub fn description(mut self, d: impl Into<String>) -> Self {
        self.description = d.into();
        self
    }

    pub fn curie(mut self, c: impl Into<String>) -> Self {
        self.curie = Some(c.into());
        self
    }

    pub fn exist_ok(mut self) -> Self {
        self.exist_ok = true;
        self
    }
}

fn prefix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z][A-Za-z0-9_]*$").unwrap())
}

fn curie_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([A-Za-z][A-Za-z0-9_]*):([0-9]+)$").unwrap())
}

fn curie_prefix(tx: &Transaction<'_>, vocabulary: &str) -> Result<String> {
    match &tx.table_def(vocabulary)?.kind {
        TableKind::Vocabulary { curie_prefix } => Ok(curie_prefix.clone()),
        _ => Err(Error::InvalidArgument(format!("`{vocabulary}` is not a vocabulary"))),
    }
}

fn terms_in(tx: &Transaction<'_>, vocabulary: &str) -> Result<Vec<VocabularyTerm>> {
    Ok(tx
        .query(vocabulary, &Filter::all())?
        .iter()
        .map(|r| VocabularyTerm::from_row(vocabulary, r))
        .collect())
}

/// Adds a term inside an open transaction.
pub(crate) fn add_term_in(
    tx: &mut Transaction<'_>,
    vocabulary: &str,
    term: NewTerm,
) -> Result<VocabularyTerm> {
    let prefix = curie_prefix(tx, vocabulary)?;
    if term.name.is_empty() {
        return Err(Error::invalid("term name must not be empty"));
    }
    let existing = terms_in(tx, vocabulary)?;
    if term.exist_ok {
        if let Some(t) = existing.iter().find(|t| t.name == term.name) {
            return Ok(t.clone());
        }
    }
    let mut texts = BTreeSet::new();
    for text in std::iter::once(&term.name).chain(term.synonyms.iter()) {
        if !texts.insert(text.as_str()) {
            return Err(Error::TermCollision {
                text: text.clone(),
                term: term.name.clone(),
            });
        }
        if let Some(t) = existing.iter().find(|t| t.matches(text)) {
            return Err(Error::TermCollision {
                text: text.clone(),
                term: t.name.clone(),
            });
        }
    }
    let curie = match term.curie {
        Some(c) => {
            if !curie_re().is_match(&c) {
                return Err(Error::invalid(format!("malformed CURIE `{c}`")));
            }
            if curie_in_use(tx, &c)? {
                return Err(Error::Duplicate(format!("CURIE `{c}`")));
            }
            c
        }
        None => {
            let next = existing
                .iter()
                .filter_map(|t| {
                    let caps = curie_re().captures(&t.curie)?;
                    (caps.get(1)?.as_str() == prefix).then(|| caps[2].parse::<u64>().ok())?
                })
                .max()
                .unwrap_or(0)
                + 1;
            let mut c = format!("{prefix}:{next}");
            let mut n = next;
            while curie_in_use(tx, &c)? {
                n += 1;
                c = format!("{prefix}:{n}");
            }
            c
        }
    };
    let rid = tx.insert(
        vocabulary,
        values! {
            VOCAB_NAME => term.name.clone(),
            VOCAB_SYNONYMS => serde_json::to_string(&term.synonyms)?,
            VOCAB_DESCRIPTION => term.description.clone(),
            VOCAB_CURIE => curie.clone(),
            VOCAB_DEPRECATED => false,
        },
    )?;
    Ok(VocabularyTerm {
        rid,
        vocabulary: vocabulary.to_string(),
        name: term.name,
        synonyms: term.synonyms,
        description: term.description,
        curie,
        deprecated: false,
    })
}

fn curie_in_use(tx: &Transaction<'_>, curie: &str) -> Result<bool> {
    let vocabularies: Vec<String> = tx
        .tables()
        .filter(|t| t.is_vocabulary())
        .map(|t| t.name.clone())
        .collect();
    for v in vocabularies {
        if !tx.query(&v, &Filter::all().eq(VOCAB_CURIE, curie))?.is_empty() {
            return Ok(true);
        }
    }
    Ok(false)
}

impl Catalog {
    /// Creates an empty vocabulary table in the domain schema.
    pub fn create_vocabulary(&self, name: &str, curie_prefix: &str) -> Result<String> {
        if !prefix_re().is_match(curie_prefix) {
            return Err(Error::InvalidArgument(format!(
                "CURIE prefix `{curie_prefix}` must match [A-Za-z][A-Za-z0-9_]*"
            )));
        }
        self.write(|tx| {
            if tx.table_def(name).is_ok() {
                return Err(Error::DuplicateTable(name.to_string()));
            }
            let taken = tx.tables().any(|t| {
                matches!(&t.kind, TableKind::Vocabulary { curie_prefix: p } if p == curie_prefix)
            });
            if taken {
                return Err(Error::Duplicate(format!("CURIE prefix `{curie_prefix}`")));
            }
            tx.define_table(vocabulary_table(name, curie_prefix, false))
        })?;
        Ok(name.to_string())
    }

    pub fn add_term(&self, vocabulary: &str, term: NewTerm) -> Result<VocabularyTerm> {
        Ok(self.write(|tx| add_term_in(tx, vocabulary, term))?.value)
    }

    /// Finds the term whose name or any synonym equals `text`.
    pub fn lookup_term(&self, vocabulary: &str, text: &str) -> Result<VocabularyTerm> {
        self.list_terms(vocabulary)?
            .into_iter()
            .find(|t| t.matches(text))
            .ok_or_else(|| Error::NotFound(format!("term `{text}` in `{vocabulary}`")))
    }

    /// Vocabulary names in creation order (name order within one snapshot).
    pub fn list_vocabularies(&self) -> Result<Vec<String>> {
        let mut vocabs: Vec<(u64, String)> = Vec::new();
        let current = self.current_snapshot();
        for def in self.tables(Some(current))?.into_iter().filter(|t| t.is_vocabulary()) {
            vocabs.push((self.table_defined_at(&def.name).unwrap_or(0), def.name));
        }
        vocabs.sort();
        Ok(vocabs.into_iter().map(|(_, n)| n).collect())
    }

    /// Terms of a vocabulary ordered by RID.
    pub fn list_terms(&self, vocabulary: &str) -> Result<Vec<VocabularyTerm>> {
        let def = self.table_def(vocabulary, None)?;
        if !def.is_vocabulary() {
            return Err(Error::InvalidArgument(format!("`{vocabulary}` is not a vocabulary")));
        }
        Ok(self
            .query(vocabulary, &Filter::all(), None)?
            .iter()
            .map(|r| VocabularyTerm::from_row(vocabulary, r))
            .collect())
    }

    /// Marks a term deprecated. It stays resolvable for existing references.
    pub fn deprecate_term(&self, vocabulary: &str, text: &str) -> Result<VocabularyTerm> {
        let term = self.lookup_term(vocabulary, text)?;
        self.update_entities(vocabulary, vec![(term.rid.clone(), values! {VOCAB_DEPRECATED => true})])?;
        self.lookup_term(vocabulary, text)
    }
}
