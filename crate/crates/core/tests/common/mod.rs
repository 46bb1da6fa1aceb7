#![allow(dead_code)]

use std::path::Path;

use provcat::asset::AssetMeta;
use provcat::catalog::{CatalogOptions, ColumnKind, TableDef};
use provcat::{values, Rid, Workspace};

/// Workspace with a Subject table, an Image asset table and `n` images.
pub fn image_workspace(root: &Path, n: usize) -> (Workspace, Vec<Rid>) {
    let ws = Workspace::init(root, CatalogOptions::logical()).unwrap();
    let cat = ws.catalog();
    cat.define_table(TableDef::domain("Subject").column("Name", ColumnKind::Text))
        .unwrap();
    cat.define_asset_table(
        TableDef::domain("Image").nullable_column("Subject", ColumnKind::RidRef("Subject".into())),
    )
    .unwrap();
    let subjects = cat
        .insert_entities(
            "Subject",
            (0..3).map(|i| values! { "Name" => format!("subject-{i}") }).collect(),
        )
        .unwrap();
    let images = (0..n)
        .map(|i| {
            let mut meta = AssetMeta::described(format!("fundus image {i}"));
            meta.extra.insert("Subject".into(), (&subjects[i % 3]).into());
            ws.upload_asset_bytes("Image", &format!("img{i:03}.png"), format!("pixels-{i}").as_bytes(), meta)
                .unwrap()
                .rid
        })
        .collect();
    (ws, images)
}
