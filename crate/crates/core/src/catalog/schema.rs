use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Catalog-managed columns present on every table.
pub const SYSTEM_COLUMNS: [&str; 3] = ["RID", "RCT", "RMT"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Domain,
    Ml,
}

/// What role a table plays beyond holding rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum TableKind {
    #[default]
    Plain,
    Vocabulary {
        curie_prefix: String,
    },
    Asset,
    Association,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ColumnKind {
    Text,
    Integer,
    Float,
    Boolean,
    Timestamp,
    /// Canonical term name from the named vocabulary.
    TermRef(String),
    /// RID of a live record in the named table.
    RidRef(String),
    /// RID of a live record in any table.
    AnyRidRef,
    /// RID of a live record in the named asset table.
    AssetRef(String),
}

impl ColumnKind {
    pub fn referenced_table(&self) -> Option<&str> {
        match self {
            ColumnKind::TermRef(t) | ColumnKind::RidRef(t) | ColumnKind::AssetRef(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_reference(&self) -> bool {
        matches!(
            self,
            ColumnKind::TermRef(_)
                | ColumnKind::RidRef(_)
                | ColumnKind::AnyRidRef
                | ColumnKind::AssetRef(_)
        )
    }

    /// True if a record of `table` could be the target of this column.
    pub fn may_reference(&self, table: &str) -> bool {
        match self {
            ColumnKind::AnyRidRef => true,
            ColumnKind::RidRef(t) | ColumnKind::AssetRef(t) | ColumnKind::TermRef(t) => t == table,
            _ => false,
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnKind::Text => f.write_str("text"),
            ColumnKind::Integer => f.write_str("integer"),
            ColumnKind::Float => f.write_str("float"),
            ColumnKind::Boolean => f.write_str("boolean"),
            ColumnKind::Timestamp => f.write_str("timestamp"),
            ColumnKind::TermRef(v) => write!(f, "term_ref({v})"),
            ColumnKind::RidRef(t) => write!(f, "rid_ref({t})"),
            ColumnKind::AnyRidRef => f.write_str("rid_ref(*)"),
            ColumnKind::AssetRef(t) => write!(f, "asset_ref({t})"),
        }
    }
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let simple = match s {
            "text" => Some(ColumnKind::Text),
            "integer" | "int" => Some(ColumnKind::Integer),
            "float" => Some(ColumnKind::Float),
            "boolean" | "bool" => Some(ColumnKind::Boolean),
            "timestamp" => Some(ColumnKind::Timestamp),
            _ => None,
        };
        if let Some(kind) = simple {
            return Ok(kind);
        }
        let (head, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::InvalidArgument(format!("unknown column kind `{s}`")))?;
        let arg = rest
            .strip_suffix(')')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("malformed column kind `{s}`")))?;
        match (head.trim(), arg) {
            ("term_ref", v) => Ok(ColumnKind::TermRef(v.to_string())),
            ("rid_ref", "*") => Ok(ColumnKind::AnyRidRef),
            ("rid_ref", t) => Ok(ColumnKind::RidRef(t.to_string())),
            ("asset_ref", t) => Ok(ColumnKind::AssetRef(t.to_string())),
            _ => Err(Error::InvalidArgument(format!("unknown column kind `{s}`"))),
        }
    }
}

impl TryFrom<String> for ColumnKind {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<ColumnKind> for String {
    fn from(kind: ColumnKind) -> String {
        kind.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub nullable: bool,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnDef {
            name: name.into(),
            kind,
            nullable: false,
        }
    }

    pub fn nullable(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnDef {
            name: name.into(),
            kind,
            nullable: true,
        }
    }

    /// Parses `name:kind` with an optional trailing `?` marking the column
    /// nullable, e.g. `subject:rid_ref(Subject)?`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, kind) = spec
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("column `{spec}` must be name:kind")))?;
        let (kind, nullable) = match kind.trim().strip_suffix('?') {
            Some(k) => (k, true),
            None => (kind.trim(), false),
        };
        Ok(ColumnDef {
            name: name.trim().to_string(),
            kind: kind.parse()?,
            nullable,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub schema: SchemaKind,
    #[serde(default)]
    pub kind: TableKind,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn domain(name: impl Into<String>) -> Self {
        TableDef {
            name: name.into(),
            schema: SchemaKind::Domain,
            kind: TableKind::Plain,
            columns: Vec::new(),
        }
    }

    pub(crate) fn ml(name: impl Into<String>, kind: TableKind) -> Self {
        TableDef {
            name: name.into(),
            schema: SchemaKind::Ml,
            kind,
            columns: Vec::new(),
        }
    }

    pub fn column(mut self, name: impl Into<String>, kind: ColumnKind) -> Self {
        self.columns.push(ColumnDef::new(name, kind));
        self
    }

    pub fn nullable_column(mut self, name: impl Into<String>, kind: ColumnKind) -> Self {
        self.columns.push(ColumnDef::nullable(name, kind));
        self
    }

    pub fn with_kind(mut self, kind: TableKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn column_def(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// All column names in schema order, system columns first.
    pub fn column_names(&self) -> Vec<&str> {
        SYSTEM_COLUMNS
            .iter()
            .copied()
            .chain(self.columns.iter().map(|c| c.name.as_str()))
            .collect()
    }

    pub fn is_vocabulary(&self) -> bool {
        matches!(self.kind, TableKind::Vocabulary { .. })
    }

    pub fn is_asset(&self) -> bool {
        self.kind == TableKind::Asset
    }

    pub(crate) fn validate_shape(&self) -> Result<()> {
        if !is_identifier(&self.name) {
            return Err(Error::InvalidArgument(format!(
                "table name `{}` is not an identifier",
                self.name
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for col in &self.columns {
            if SYSTEM_COLUMNS.contains(&col.name.as_str()) {
                return Err(Error::ReservedColumn(col.name.clone()));
            }
            if !is_identifier(&col.name) {
                return Err(Error::InvalidArgument(format!(
                    "column name `{}` is not an identifier",
                    col.name
                )));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(Error::DuplicateColumn {
                    table: self.name.clone(),
                    column: col.name.clone(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
