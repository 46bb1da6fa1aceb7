//! Features: values attached to domain records by executions.
//!
//! Each (target table, feature name) pair gets its own association table
//! `Execution_<Target>_<Feature>` with columns Execution, `<Target>`,
//! Feature_Name and the typed value columns. Rows are append-only; several
//! executions may label the same record.

use serde::{Deserialize, Serialize};

use crate::catalog::bootstrap::{EXECUTION, FEATURE_DEFINITION, FEATURE_NAME};
use crate::catalog::{
    is_identifier, Catalog, ColumnDef, ColumnKind, Filter, ReadView, Row, SchemaKind, SnapshotId, TableDef,
    TableKind, Transaction, Value, Values,
};
use crate::error::{Error, Result};
use crate::rid::Rid;
use crate::values;
use crate::vocab::{add_term_in, NewTerm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDefinition {
    pub rid: Rid,
    pub target_table: String,
    pub feature_name: String,
    pub feature_table: String,
    pub value_columns: Vec<ColumnDef>,
}

impl FeatureDefinition {
    fn from_row(row: &Row) -> Result<FeatureDefinition> {
        Ok(FeatureDefinition {
            rid: row.rid.clone(),
            target_table: row.text("Target_Table").unwrap_or_default().to_string(),
            feature_name: row.text("Feature_Name").unwrap_or_default().to_string(),
            feature_table: row.text("Feature_Table").unwrap_or_default().to_string(),
            value_columns: serde_json::from_str(row.text("Value_Columns").unwrap_or("[]"))?,
        })
    }
}

/// One value to record: the target record and its value columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub target: Rid,
    pub values: Values,
}

impl FeatureRecord {
    pub fn new(target: Rid, values: Values) -> Self {
        FeatureRecord { target, values }
    }
}

pub fn feature_table_name(target: &str, feature: &str) -> String {
    format!("Execution_{target}_{feature}")
}

pub(crate) fn definitions(view: &impl ReadView, filter: &Filter) -> Result<Vec<FeatureDefinition>> {
    view.rows(FEATURE_DEFINITION, filter)?
        .iter()
        .map(FeatureDefinition::from_row)
        .collect()
}

pub(crate) fn find_feature(view: &impl ReadView, target: &str, feature: &str) -> Result<FeatureDefinition> {
    definitions(view, &Filter::all().eq("Target_Table", target))?
        .into_iter()
        .find(|d| d.feature_name == feature)
        .ok_or_else(|| Error::NotFound(format!("feature {feature} on {target}")))
}

pub(crate) fn create_feature_in(
    tx: &mut Transaction<'_>,
    target: &str,
    feature: &str,
    value_columns: Vec<ColumnDef>,
) -> Result<FeatureDefinition> {
    let target_def = tx.table_def(target)?.clone();
    if target_def.schema != SchemaKind::Domain || target_def.is_vocabulary() {
        return Err(Error::InvalidArgument(format!(
            "features attach to domain tables; `{target}` is not one"
        )));
    }
    if !is_identifier(feature) {
        return Err(Error::InvalidArgument(format!(
            "feature name `{feature}` must be an identifier"
        )));
    }
    if value_columns.is_empty() {
        return Err(Error::invalid("a feature needs at least one value column"));
    }
    for c in &value_columns {
        if matches!(c.kind, ColumnKind::RidRef(_) | ColumnKind::AnyRidRef) {
            return Err(Error::InvalidArgument(format!(
                "value column `{}` must be a term, asset or scalar",
                c.name
            )));
        }
        if c.name == EXECUTION || c.name == target || c.name == FEATURE_NAME {
            return Err(Error::ReservedColumn(c.name.clone()));
        }
    }
    if definitions(tx, &Filter::all().eq("Target_Table", target))?
        .iter()
        .any(|d| d.feature_name == feature)
    {
        return Err(Error::Duplicate(format!("feature {feature} on {target}")));
    }
    let name = add_term_in(tx, FEATURE_NAME, NewTerm::new(feature).exist_ok())?.name;
    let table = feature_table_name(target, &name);
    let mut def = TableDef::domain(&table)
        .with_kind(TableKind::Association)
        .column(EXECUTION, ColumnKind::RidRef(EXECUTION.into()))
        .column(target, ColumnKind::RidRef(target.into()))
        .column(FEATURE_NAME, ColumnKind::TermRef(FEATURE_NAME.into()));
    def.columns.extend(value_columns.iter().cloned());
    tx.define_table(def)?;
    let rid = tx.insert(
        FEATURE_DEFINITION,
        values! {
            "Target_Table" => target,
            "Feature_Name" => name.as_str(),
            "Feature_Table" => table.as_str(),
            "Value_Columns" => serde_json::to_string(&value_columns)?,
        },
    )?;
    Ok(FeatureDefinition {
        rid,
        target_table: target.to_string(),
        feature_name: name,
        feature_table: table,
        value_columns,
    })
}

pub(crate) fn add_feature_values_in(
    tx: &mut Transaction<'_>,
    execution: &Rid,
    def: &FeatureDefinition,
    records: Vec<FeatureRecord>,
) -> Result<Vec<Rid>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    if tx.get(EXECUTION, execution)?.is_none() {
        return Err(Error::NotFound(format!("execution {execution}")));
    }
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let mut values = rec.values;
        for key in values.keys() {
            if !def.value_columns.iter().any(|c| &c.name == key) {
                return Err(Error::UnknownColumn {
                    table: def.feature_table.clone(),
                    column: key.clone(),
                });
            }
        }
        values.insert(EXECUTION.into(), Value::from(execution));
        values.insert(def.target_table.clone(), Value::from(&rec.target));
        values.insert(FEATURE_NAME.into(), Value::from(def.feature_name.as_str()));
        out.push(tx.insert(&def.feature_table, values)?);
    }
    Ok(out)
}

impl Catalog {
    /// Defines a feature on `target`. The feature name is added to the
    /// Feature_Name vocabulary if missing.
    pub fn create_feature(
        &self,
        target: &str,
        feature: &str,
        value_columns: Vec<ColumnDef>,
    ) -> Result<FeatureDefinition> {
        Ok(self
            .write(|tx| create_feature_in(tx, target, feature, value_columns))?
            .value)
    }

    /// Records feature values from `execution` in one snapshot. An empty
    /// batch writes nothing.
    pub fn add_feature_values(
        &self,
        execution: &Rid,
        target: &str,
        feature: &str,
        records: Vec<FeatureRecord>,
    ) -> Result<Vec<Rid>> {
        if records.is_empty() {
            find_feature(&self.at(None)?, target, feature)?;
            return Ok(Vec::new());
        }
        Ok(self
            .write(|tx| {
                let def = find_feature(tx, target, feature)?;
                add_feature_values_in(tx, execution, &def, records)
            })?
            .value)
    }

    pub fn feature(&self, target: &str, feature: &str) -> Result<FeatureDefinition> {
        find_feature(&self.at(None)?, target, feature)
    }

    /// Features defined on `target` (all features when `None`).
    pub fn list_features(&self, target: Option<&str>) -> Result<Vec<FeatureDefinition>> {
        let filter = match target {
            Some(t) => {
                self.table_def(t, None)?;
                Filter::all().eq("Target_Table", t)
            }
            None => Filter::all(),
        };
        definitions(&self.at(None)?, &filter)
    }

    /// Rows of the feature table, ordered by RID.
    pub fn feature_values(
        &self,
        target: &str,
        feature: &str,
        filter: &Filter,
        as_of: Option<SnapshotId>,
    ) -> Result<Vec<Row>> {
        let view = self.at(as_of)?;
        let def = find_feature(&view, target, feature)?;
        view.rows(&def.feature_table, filter)
    }
}
