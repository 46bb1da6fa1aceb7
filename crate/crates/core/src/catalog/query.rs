use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::schema::TableDef;
use super::value::{format_timestamp, Value, Values};
use crate::rid::Rid;

/// One live record as seen at some snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub rid: Rid,
    pub rct: DateTime<Utc>,
    pub rmt: DateTime<Utc>,
    pub values: Values,
}

impl Row {
    pub fn get(&self, column: &str) -> Option<&Value> {
        self.values.get(column).filter(|v| !v.is_null())
    }

    pub fn text(&self, column: &str) -> Option<&str> {
        self.get(column).and_then(Value::as_str)
    }

    pub fn int(&self, column: &str) -> Option<i64> {
        self.get(column).and_then(Value::as_i64)
    }

    pub fn rid_at(&self, column: &str) -> Option<Rid> {
        self.text(column).and_then(|s| s.parse().ok())
    }

    /// Value of any column including the system columns.
    pub fn field(&self, column: &str) -> Value {
        match column {
            "RID" => Value::Text(self.rid.to_string()),
            "RCT" => Value::Text(format_timestamp(&self.rct)),
            "RMT" => Value::Text(format_timestamp(&self.rmt)),
            other => self.values.get(other).cloned().unwrap_or(Value::Null),
        }
    }

    /// Fields in schema order, for delimiter-separated output.
    pub fn fields(&self, def: &TableDef) -> Vec<String> {
        def.column_names()
            .into_iter()
            .map(|c| self.field(c).to_field())
            .collect()
    }

    pub fn to_json(&self, def: &TableDef) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for col in def.column_names() {
            map.insert(
                col.to_string(),
                serde_json::to_value(self.field(col)).unwrap_or(serde_json::Value::Null),
            );
        }
        serde_json::Value::Object(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    IsNull,
    NotNull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: CompareOp,
    #[serde(default)]
    pub value: Value,
}

impl Predicate {
    pub(crate) fn matches(&self, row_value: &Value) -> bool {
        match self.op {
            CompareOp::IsNull => row_value.is_null(),
            CompareOp::NotNull => !row_value.is_null(),
            CompareOp::Eq => {
                row_value == &self.value
                    || row_value.partial_cmp_value(&self.value) == Some(Ordering::Equal)
            }
            CompareOp::Ne => !(row_value == &self.value
                || row_value.partial_cmp_value(&self.value) == Some(Ordering::Equal)),
            op => match row_value.partial_cmp_value(&self.value) {
                Some(ord) => match op {
                    CompareOp::Lt => ord == Ordering::Less,
                    CompareOp::Le => ord != Ordering::Greater,
                    CompareOp::Gt => ord == Ordering::Greater,
                    CompareOp::Ge => ord != Ordering::Less,
                    _ => unreachable!(),
                },
                None => false,
            },
        }
    }
}

/// Conjunction of column predicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub predicates: Vec<Predicate>,
}

impl Filter {
    pub fn all() -> Self {
        Filter::default()
    }

    pub fn with(mut self, column: impl Into<String>, op: CompareOp, value: impl Into<Value>) -> Self {
        self.predicates.push(Predicate {
            column: column.into(),
            op,
            value: value.into(),
        });
        self
    }

    pub fn eq(self, column: impl Into<String>, value: impl Into<Value>) -> Self {
        self.with(column, CompareOp::Eq, value)
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub(crate) fn matches(&self, row: &Row) -> bool {
        self.predicates
            .iter()
            .all(|p| p.matches(&row.field(&p.column)))
    }
}
