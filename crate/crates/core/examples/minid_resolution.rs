//! Resolve a dataset version through its persistent identifier, with a
//! checksum-keyed local cache.

use provcat::asset::AssetMeta;
use provcat::catalog::{CatalogOptions, TableDef};
use provcat::Workspace;

fn main() -> provcat::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = Workspace::init(dir.path().join("catalog"), CatalogOptions::logical())?;
    let cat = ws.catalog();
    cat.define_asset_table(TableDef::domain("Scan"))?;
    let scans: Vec<_> = (0..5)
        .map(|i| ws.upload_asset_bytes("Scan", &format!("s{i}.dcm"), &[i as u8; 64], AssetMeta::default()).map(|a| a.rid))
        .collect::<Result<_, _>>()?;
    let (d, _) = cat.create_dataset("scans", &[], None)?;
    let v = cat.add_members(&d, &scans, None)?;

    let cache = dir.path().join("cache");
    for attempt in ["first", "cached"] {
        ws.stats().reset();
        let got = ws.resolve_dataset(&d, Some(v), &cache)?;
        println!("{attempt:>7}: {} -> {} ({:?})", got.minid, got.path.display(), ws.stats().counts());
    }

    let id = cat.dataset_version(&d, Some(v))?.minid.expect("registered on first resolve");
    let minid = cat.resolve_minid(&id)?;
    println!("{id}: {}@{} at {}", minid.dataset, minid.version, minid.locations.join(", "));
    Ok(())
}
