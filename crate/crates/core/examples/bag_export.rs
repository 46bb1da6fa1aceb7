//! Export a dataset version as a bag, validate it, materialize it and query
//! the local index.

use provcat::asset::AssetMeta;
use provcat::bag::validate_bag;
use provcat::catalog::{CatalogOptions, TableDef};
use provcat::Workspace;

fn main() -> provcat::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = Workspace::init(dir.path().join("catalog"), CatalogOptions::logical())?;
    let cat = ws.catalog();
    cat.define_asset_table(TableDef::domain("Image"))?;
    let images: Vec<_> = (0..4)
        .map(|i| {
            ws.upload_asset_bytes("Image", &format!("eye{i}.png"), format!("pixels {i}").as_bytes(), AssetMeta::default())
                .map(|a| a.rid)
        })
        .collect::<Result<_, _>>()?;
    let (d, _) = cat.create_dataset("eyes", &[], None)?;
    let v = cat.add_members(&d, &images, None)?;

    let bag = dir.path().join("bag");
    let desc = ws.export_bag(&d, Some(v), &bag)?;
    println!("exported {d}@{v}: checksum {}", desc.bag_checksum);
    println!("fetch.txt:\n{}", std::fs::read_to_string(bag.join("fetch.txt"))?);
    // the exported bag is holey; only the materialized copy validates in full
    println!("structure valid: {}", validate_bag(&bag, false)?.is_valid());

    let local = ws.materialize_bag(bag.to_str().unwrap(), &dir.path().join("local"))?;
    println!("materialized valid: {}", validate_bag(&local, true)?.is_valid());

    let index = provcat::bag::LocalIndex::open(&local).or_else(|_| provcat::bag::build_local_index(&local))?;
    let rows = index.dataset_table("Image")?;
    for r in 0..rows.len() {
        println!("  {} {}", rows.get(r, "RID").unwrap_or(""), rows.get(r, "Filename").unwrap_or(""));
    }
    Ok(())
}
