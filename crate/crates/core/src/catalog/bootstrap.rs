//! The ML schema created at snapshot 0 of every catalog.

use super::schema::{ColumnKind as K, TableDef, TableKind};

pub const DATASET: &str = "Dataset";
pub const DATASET_VERSION: &str = "Dataset_Version";
pub const DATASET_MEMBER: &str = "Dataset_Member";
pub const DATASET_DATASET_TYPE: &str = "Dataset_Dataset_Type";
pub const WORKFLOW: &str = "Workflow";
pub const EXECUTION: &str = "Execution";
pub const EXECUTION_ASSET: &str = "Execution_Asset";
pub const EXECUTION_DATASET: &str = "Execution_Dataset";
pub const FEATURE_DEFINITION: &str = "Feature_Definition";
pub const MINID: &str = "Minid";
pub const EXECUTION_CONFIG: &str = "Execution_Config";
pub const EXECUTION_LOG: &str = "Execution_Log";

pub const DATASET_TYPE: &str = "Dataset_Type";
pub const EXECUTION_STATUS: &str = "Execution_Status";
pub const ASSET_ROLE: &str = "Asset_Role";
pub const FEATURE_NAME: &str = "Feature_Name";
pub const WORKFLOW_TYPE: &str = "Workflow_Type";
pub const ANNOTATION_TYPE: &str = "Annotation_Type";

/// Built-in vocabularies and their CURIE prefixes.
pub const BUILTIN_VOCABULARIES: [(&str, &str); 6] = [
    (DATASET_TYPE, "DST"),
    (EXECUTION_STATUS, "EXS"),
    (ASSET_ROLE, "ROLE"),
    (FEATURE_NAME, "FEAT"),
    (WORKFLOW_TYPE, "WFT"),
    (ANNOTATION_TYPE, "ANT"),
];

/// Terms seeded into built-in vocabularies: (vocabulary, name, description).
pub const BUILTIN_TERMS: [(&str, &str, &str); 9] = [
    (ASSET_ROLE, "input", "Asset consumed by an execution"),
    (ASSET_ROLE, "output", "Asset produced by an execution"),
    (EXECUTION_STATUS, "created", "Execution recorded, not yet started"),
    (EXECUTION_STATUS, "running", "Execution in progress"),
    (EXECUTION_STATUS, "completed", "Execution finished successfully"),
    (EXECUTION_STATUS, "failed", "Execution failed"),
    (DATASET_TYPE, "training", "Data used to fit models"),
    (DATASET_TYPE, "validation", "Data used for model selection"),
    (DATASET_TYPE, "testing", "Held-out evaluation data"),
];

/// The plain (non-vocabulary, non-asset, non-association) ML tables.
pub const ML_TABLES: [&str; 8] = [
    DATASET,
    DATASET_VERSION,
    DATASET_MEMBER,
    WORKFLOW,
    EXECUTION,
    EXECUTION_ASSET,
    FEATURE_DEFINITION,
    MINID,
];

pub const VOCAB_NAME: &str = "Name";
pub const VOCAB_SYNONYMS: &str = "Synonyms";
pub const VOCAB_DESCRIPTION: &str = "Description";
pub const VOCAB_CURIE: &str = "CURIE";
pub const VOCAB_DEPRECATED: &str = "Deprecated";

pub fn vocabulary_table(name: &str, prefix: &str, schema_ml: bool) -> TableDef {
    let kind = TableKind::Vocabulary {
        curie_prefix: prefix.to_string(),
    };
    let base = if schema_ml {
        TableDef::ml(name, kind)
    } else {
        TableDef::domain(name).with_kind(kind)
    };
    base.column(VOCAB_NAME, K::Text)
        .column(VOCAB_SYNONYMS, K::Text)
        .column(VOCAB_DESCRIPTION, K::Text)
        .column(VOCAB_CURIE, K::Text)
        .column(VOCAB_DEPRECATED, K::Boolean)
}

pub const ASSET_URL: &str = "URL";
pub const ASSET_CHECKSUM: &str = "Checksum";
pub const ASSET_LENGTH: &str = "Length";
pub const ASSET_FILENAME: &str = "Filename";
pub const ASSET_DESCRIPTION: &str = "Description";
pub const ASSET_MD5: &str = "MD5";

pub const ASSET_STANDARD_COLUMNS: [&str; 6] = [
    ASSET_URL,
    ASSET_CHECKSUM,
    ASSET_LENGTH,
    ASSET_FILENAME,
    ASSET_DESCRIPTION,
    ASSET_MD5,
];

/// Asset table with the standard catalog-managed columns first.
pub fn asset_table(def: TableDef) -> TableDef {
    let mut out = TableDef {
        name: def.name,
        schema: def.schema,
        kind: TableKind::Asset,
        columns: Vec::new(),
    }
    .column(ASSET_URL, K::Text)
    .column(ASSET_CHECKSUM, K::Text)
    .column(ASSET_LENGTH, K::Integer)
    .column(ASSET_FILENAME, K::Text)
    .nullable_column(ASSET_DESCRIPTION, K::Text)
    .nullable_column(ASSET_MD5, K::Text);
    out.columns.extend(def.columns);
    out
}

/// Every table created at snapshot 0, in dependency order.
pub fn ml_schema() -> Vec<TableDef> {
    let mut defs: Vec<TableDef> = BUILTIN_VOCABULARIES
        .iter()
        .map(|(name, prefix)| vocabulary_table(name, prefix, true))
        .collect();
    defs.push(asset_table(TableDef::ml(EXECUTION_CONFIG, TableKind::Asset)));
    defs.push(asset_table(TableDef::ml(EXECUTION_LOG, TableKind::Asset)));
    defs.push(
        TableDef::ml(WORKFLOW, TableKind::Plain)
            .column("Name", K::Text)
            .column("URL", K::Text)
            .column("Workflow_Type", K::TermRef(WORKFLOW_TYPE.into()))
            .nullable_column("Version", K::Text)
            .column("Checksum", K::Text)
            .nullable_column("Description", K::Text),
    );
    defs.push(
        TableDef::ml(EXECUTION, TableKind::Plain)
            .nullable_column("Workflow", K::RidRef(WORKFLOW.into()))
            .column("Status", K::TermRef(EXECUTION_STATUS.into()))
            .nullable_column("Status_Detail", K::Text)
            .nullable_column("Started", K::Timestamp)
            .nullable_column("Stopped", K::Timestamp)
            .nullable_column("Duration", K::Float)
            .nullable_column("Description", K::Text)
            .nullable_column("Config_Asset", K::AssetRef(EXECUTION_CONFIG.into()))
            .nullable_column("Working_Dir", K::Text),
    );
    defs.push(TableDef::ml(DATASET, TableKind::Plain).column("Description", K::Text));
    defs.push(
        TableDef::ml(DATASET_DATASET_TYPE, TableKind::Association)
            .column("Dataset", K::RidRef(DATASET.into()))
            .column("Dataset_Type", K::TermRef(DATASET_TYPE.into())),
    );
    defs.push(
        TableDef::ml(DATASET_MEMBER, TableKind::Plain)
            .column("Dataset", K::RidRef(DATASET.into()))
            .column("Member", K::AnyRidRef)
            .column("Member_Table", K::Text),
    );
    defs.push(
        TableDef::ml(DATASET_VERSION, TableKind::Plain)
            .column("Dataset", K::RidRef(DATASET.into()))
            .column("Version", K::Text)
            .column("Snapshot", K::Integer)
            .nullable_column("Execution", K::RidRef(EXECUTION.into()))
            .nullable_column("Minid", K::Text)
            .nullable_column("Bag_Checksum", K::Text)
            .nullable_column("Description", K::Text),
    );
    defs.push(
        TableDef::ml(EXECUTION_ASSET, TableKind::Plain)
            .column("Execution", K::RidRef(EXECUTION.into()))
            .column("Asset", K::AnyRidRef)
            .column("Asset_Table", K::Text)
            .column("Asset_Role", K::TermRef(ASSET_ROLE.into())),
    );
    defs.push(
        TableDef::ml(EXECUTION_DATASET, TableKind::Association)
            .column("Execution", K::RidRef(EXECUTION.into()))
            .column("Dataset_Version", K::RidRef(DATASET_VERSION.into())),
    );
    defs.push(
        TableDef::ml(FEATURE_DEFINITION, TableKind::Plain)
            .column("Target_Table", K::Text)
            .column("Feature_Name", K::TermRef(FEATURE_NAME.into()))
            .column("Feature_Table", K::Text)
            .column("Value_Columns", K::Text),
    );
    defs.push(
        TableDef::ml(MINID, TableKind::Plain)
            .column("Identifier", K::Text)
            .column("Dataset", K::RidRef(DATASET.into()))
            .column("Version", K::Text)
            .column("Locations", K::Text)
            .column("Checksum", K::Text)
            .column("Length", K::Integer)
            .column("Title", K::Text)
            .column("Created", K::Timestamp),
    );
    defs
}
