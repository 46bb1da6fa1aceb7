//! Versioned, provenance-tracking catalog for machine-learning data.

pub mod asset;
pub mod bag;
pub mod catalog;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod execution;
pub mod feature;
pub mod provenance;
pub mod rid;
pub mod service;
pub mod store;
pub mod vocab;
pub mod workflow;
pub mod workspace;

pub use catalog::{
    AsOf, Catalog, CatalogOptions, ClockMode, ColumnKind, Filter, ReadView, Row, SnapshotId, TableDef, Value, Values,
};
pub use error::{Error, ErrorClass, Result};
pub use rid::Rid;
pub use workspace::Workspace;
