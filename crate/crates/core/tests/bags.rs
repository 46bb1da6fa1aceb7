mod common;

use std::fs;

use provcat::bag::{build_local_index, validate_bag, COMPLETE_MARKER, INDEX_FILE};
use provcat::Error;

#[test]
fn export_is_deterministic_and_valid_after_materialization() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), 4);
    let cat = ws.catalog();
    let (d, _) = cat.create_dataset("pool", &["training"], None).unwrap();
    cat.add_members(&d, &images, None).unwrap();

    let a = ws.export_bag(&d, None, &dir.path().join("a")).unwrap();
    let b = ws.export_bag(&d, None, &dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fetch.len(), 4);
    for f in ["bagit.txt", "bag-info.txt", "manifest-sha256.txt", "fetch.txt", "tagmanifest-sha256.txt"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let tag = validate_bag(&dir.path().join("a"), false).unwrap();
    assert!(tag.is_valid(), "{tag:?}");
    let unmaterialized = validate_bag(&dir.path().join("a"), true).unwrap();
    assert_eq!(unmaterialized.failing_paths().len(), 4);

    let out = dir.path().join("m");
    ws.materialize_bag(dir.path().join("a").to_str().unwrap(), &out).unwrap();
    assert!(out.join(COMPLETE_MARKER).exists());
    assert!(validate_bag(&out, true).unwrap().is_valid());
    assert_eq!(ws.stats().counts().asset_fetches, 4);

    let image_csv = fs::read_to_string(out.join("data/records/Image.csv")).unwrap();
    assert!(image_csv.starts_with("RID,RCT,RMT,URL,Checksum,Length,Filename,Description,MD5,Subject\n"));
    assert!(out.join("data/records/Subject.csv").exists());
    assert!(out.join("data/records/Dataset_Type.csv").exists());

    let index = build_local_index(&out).unwrap();
    assert!(out.join(INDEX_FILE).exists());
    let rows = index.dataset_table("Image").unwrap();
    assert_eq!(rows.len(), image_csv.lines().count() - 1);
    assert!(matches!(index.dataset_table("Nope"), Err(Error::NotFound(_))));
    assert!(validate_bag(&out, true).unwrap().is_valid());
}

#[test]
fn tampering_is_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), 2);
    let (d, _) = ws.catalog().create_dataset("pool", &[], None).unwrap();
    ws.catalog().add_members(&d, &images, None).unwrap();
    let desc = ws.export_bag(&d, None, &dir.path().join("bag")).unwrap();
    let out = dir.path().join("m");
    ws.materialize_bag(dir.path().join("bag").to_str().unwrap(), &out).unwrap();

    let victim = &desc.fetch[1].path;
    let mut bytes = fs::read(out.join(victim)).unwrap();
    bytes[0] ^= 0x20;
    fs::write(out.join(victim), &bytes).unwrap();
    let report = validate_bag(&out, true).unwrap();
    assert_eq!(report.failing_paths(), vec![victim.clone()]);

    bytes[0] ^= 0x20;
    fs::write(out.join(victim), &bytes).unwrap();
    fs::remove_file(out.join(&desc.fetch[0].path)).unwrap();
    let report = validate_bag(&out, true).unwrap();
    assert_eq!(report.failing_paths(), vec![desc.fetch[0].path.clone()]);

    assert!(matches!(
        validate_bag(&dir.path().join("ws"), false),
        Err(Error::InvalidBag(_))
    ));
}

#[test]
fn empty_dataset_has_empty_fetch() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, _) = common::image_workspace(&dir.path().join("ws"), 0);
    let (d, _) = ws.catalog().create_dataset("empty", &[], None).unwrap();
    let desc = ws.export_bag(&d, None, &dir.path().join("bag")).unwrap();
    assert!(desc.fetch.is_empty());
    assert_eq!(fs::read(dir.path().join("bag/fetch.txt")).unwrap(), b"");
    assert!(validate_bag(&dir.path().join("bag"), true).unwrap().is_valid());
}

#[test]
fn two_stage_resolution_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), 5);
    let cat = ws.catalog();
    let (d, _) = cat.create_dataset("pool", &[], None).unwrap();
    let v = cat.add_members(&d, &images, None).unwrap();

    let cache = dir.path().join("cache");
    let first = ws.resolve_dataset(&d, Some(v), &cache).unwrap();
    let c = ws.stats().counts();
    assert_eq!((c.asset_fetches, c.exports), (5, 1));
    let record = cat.dataset_version(&d, Some(v)).unwrap();
    assert_eq!(record.minid.as_deref(), Some(first.minid.as_str()));
    assert_eq!(record.bag_checksum.as_deref(), Some(first.checksum.as_str()));

    ws.stats().reset();
    let second = ws.resolve_dataset(&d, Some(v), &cache).unwrap();
    assert_eq!(second, first);
    assert_eq!(ws.stats().counts().transfers(), 0);
    assert_eq!(ws.stats().counts().exports, 0);

    ws.stats().reset();
    let other = ws.resolve_dataset(&d, Some(v), &dir.path().join("cache2")).unwrap();
    let c = ws.stats().counts();
    assert_eq!((c.asset_fetches, c.exports), (5, 0));
    assert!(c.bag_file_fetches > 0);
    assert!(validate_bag(&other.path, true).unwrap().is_valid());

    let minid = cat.resolve_minid(&first.minid).unwrap();
    assert_eq!(minid.checksum, first.checksum);
    assert!(matches!(cat.resolve_minid("minid:0000000000ZZ"), Err(Error::IdNotFound(_))));

    let rows = first.table("Image").unwrap();
    assert_eq!(rows.len(), 5);
}

#[test]
fn corrupted_cache_surfaces_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, images) = common::image_workspace(&dir.path().join("ws"), 2);
    let (d, _) = ws.catalog().create_dataset("pool", &[], None).unwrap();
    ws.catalog().add_members(&d, &images, None).unwrap();
    let cache = dir.path().join("cache");
    let m = ws.resolve_dataset(&d, None, &cache).unwrap();
    let info = m.path.join("bag-info.txt");
    let mut text = fs::read_to_string(&info).unwrap();
    text.push('\n');
    fs::write(&info, text).unwrap();
    let err = ws.resolve_dataset(&d, None, &cache).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
}
