//! Versioned, checksum-verified object storage.

use provcat::store::{sha256_hex, ObjectStore, PutOptions};

fn main() -> provcat::Result<()> {
    let dir = tempfile::tempdir()?;
    let store = ObjectStore::open(dir.path())?;

    let v1 = store.put_bytes("/models/net.bin", b"first weights", PutOptions::default())?;
    let v2 = store.put_bytes(
        "/models/net.bin",
        b"second weights",
        PutOptions {
            checksum: Some(sha256_hex(b"second weights")),
            ..Default::default()
        },
    )?;
    println!("v1 {} ({} bytes)", v1.versioned_path(), v1.length);
    println!("v2 {} ({} bytes)", v2.versioned_path(), v2.length);

    let (latest, _) = store.get("/models/net.bin", None)?;
    let (old, _) = store.get("/models/net.bin", Some(&v1.version_id))?;
    println!("latest: {}", String::from_utf8_lossy(&latest));
    println!("pinned: {}", String::from_utf8_lossy(&old));

    let bad = PutOptions {
        checksum: Some(sha256_hex(b"something else")),
        ..Default::default()
    };
    if let Err(e) = store.put_bytes("/models/net.bin", b"third weights", bad) {
        println!("rejected: {}", e.code());
    }
    println!("versions kept: {}", store.versions("/models/net.bin")?.len());
    println!("namespace: {:?}", store.list_namespace("/models")?);
    Ok(())
}
