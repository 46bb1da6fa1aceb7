//! Nested datasets with semantic versions that propagate to parents.

use provcat::catalog::{CatalogOptions, ColumnKind, TableDef};
use provcat::dataset::BumpLevel;
use provcat::{values, Catalog};

fn main() -> provcat::Result<()> {
    let cat = Catalog::in_memory(CatalogOptions::logical());
    cat.define_table(TableDef::domain("Image").column("Name", ColumnKind::Text))?;
    let images = cat.insert_entities("Image", (0..6).map(|i| values! { "Name" => format!("img{i}") }).collect())?;

    let (all, _) = cat.create_dataset("all images", &[], None)?;
    let (train, _) = cat.create_dataset("training split", &["training"], None)?;
    let (test, _) = cat.create_dataset("test split", &["testing"], None)?;
    cat.add_members(&train, &images[..4], None)?;
    cat.add_members(&test, &images[4..], None)?;
    cat.add_members(&all, &[train.clone(), test.clone()], None)?;

    // a change to the child bumps every ancestor too
    cat.remove_members(&train, &images[3..4], None)?;
    cat.increment_version(&test, BumpLevel::Patch, "relabelled", None)?;

    for (name, d) in [("all", &all), ("train", &train), ("test", &test)] {
        let versions: Vec<String> = cat.list_versions(d)?.iter().map(|v| v.version.to_string()).collect();
        println!("{name:>5}: {}", versions.join(" -> "));
    }

    let first = cat.list_versions(&train)?[1].version;
    println!("train@{first} had {} members", cat.dataset_members(&train, Some(first), false)?.len());
    println!("train now has {} members", cat.dataset_members(&train, None, false)?.len());
    println!("all flattened: {} records", cat.dataset_members(&all, None, true)?.len());
    println!("splits disjoint: {}", cat.check_disjoint(&[train, test], true)?.is_disjoint());
    Ok(())
}
