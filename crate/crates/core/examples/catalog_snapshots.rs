//! Define a table, change it over several snapshots and read it back as of
//! each one.

use provcat::catalog::{CatalogOptions, ColumnKind, TableDef};
use provcat::{values, Catalog, Filter, SnapshotId};

fn main() -> provcat::Result<()> {
    let cat = Catalog::in_memory(CatalogOptions::logical());
    cat.define_table(
        TableDef::domain("Subject")
            .column("Name", ColumnKind::Text)
            .nullable_column("Age", ColumnKind::Integer),
    )?;

    let rids = cat.insert_entities(
        "Subject",
        vec![
            values! { "Name" => "alice", "Age" => 61i64 },
            values! { "Name" => "bob", "Age" => 57i64 },
        ],
    )?;
    let first = cat.current_snapshot();

    cat.update_entities("Subject", vec![(rids[0].clone(), values! { "Age" => 62i64 })])?;
    cat.delete_entities("Subject", &rids[1..])?;
    let now = cat.current_snapshot();

    for snap in first.0..=now.0 {
        let rows = cat.query("Subject", &Filter::all(), Some(SnapshotId(snap)))?;
        let names: Vec<String> = rows
            .iter()
            .map(|r| format!("{}({})", r.text("Name").unwrap_or("?"), r.int("Age").unwrap_or(0)))
            .collect();
        println!("snapshot {snap}: {}", names.join(", "));
    }

    let alice = cat.query("Subject", &Filter::all().eq("Name", "alice"), None)?;
    println!("alice is {} (RCT {}, RMT {})", alice[0].rid, alice[0].rct, alice[0].rmt);
    Ok(())
}
